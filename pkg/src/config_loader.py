"""
Configuration loader for YAML-based configuration.

Files hold up to three sections (env, learner, experiment). Dotted keys such as
`env.grid_size: 6` are accepted anywhere a nested key is, and experiment fields
may also sit at the top level. `preset: NAME` starts from a named preset and
applies the rest of the file as overrides; without it the dataclass defaults are
the starting point.
"""

from dataclasses import asdict, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .config import EnvConfig, ExperimentConfig, LearnerConfig, create_preset_config
from .errors import ConfigError

EXPERIMENT_KEYS = ("name", "topology", "seeds", "eval_every", "eval_episodes", "output_dir")


def _merge(target: Dict[str, Any], key: str, value: Any):
    if isinstance(value, dict) and isinstance(target.get(key), dict):
        for sub_key, sub_value in value.items():
            _merge(target[key], str(sub_key), sub_value)
    else:
        target[key] = value


def expand_dotted(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Turn {'env.grid_size': 6} into {'env': {'grid_size': 6}}."""
    out: Dict[str, Any] = {}
    for key, value in raw.items():
        parts = str(key).split(".")
        target = out
        for part in parts[:-1]:
            node = target.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"Key {key!r} conflicts with scalar {part!r}")
            target = node
        if isinstance(value, dict):
            value = expand_dotted(value)
        _merge(target, parts[-1], value)
    return out


def _apply(obj, overrides: Dict[str, Any], section: str):
    allowed = {f.name for f in fields(obj)}
    unknown = sorted(set(overrides) - allowed)
    if unknown:
        raise ConfigError(f"Unknown {section} key(s): {', '.join(unknown)}")
    try:
        return replace(obj, **overrides)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid {section} value: {exc}") from exc


def config_from_dict(data: Optional[Dict[str, Any]], preset: Optional[str] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from parsed YAML.

    Args:
        data: Parsed mapping (None is treated as empty)
        preset: Overrides the file's own `preset:` key
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("Config file must contain a mapping")
    data = expand_dotted(data)

    preset = preset or data.pop("preset", None)
    data.pop("preset", None)
    base = create_preset_config(str(preset)) if preset else ExperimentConfig()

    experiment = dict(data.pop("experiment", {}) or {})
    for key in EXPERIMENT_KEYS:
        if key in data:
            experiment[key] = data.pop(key)
    env = data.pop("env", {}) or {}
    learner = data.pop("learner", {}) or {}
    if data:
        raise ConfigError(f"Unknown top-level key(s): {', '.join(sorted(data))}")
    for name, section in (("env", env), ("learner", learner), ("experiment", experiment)):
        if not isinstance(section, dict):
            raise ConfigError(f"Section {name!r} must be a mapping")

    return _apply(
        base,
        dict(
            experiment,
            env=_apply(base.env, env, "env"),
            learner=_apply(base.learner, learner, "learner"),
        ),
        "experiment",
    )


def load_config_from_yaml(yaml_path: str = "config.yaml", preset: Optional[str] = None) -> ExperimentConfig:
    """
    Load experiment configuration from YAML file.

    Args:
        yaml_path: Path to YAML config file (default: config.yaml in project root)
        preset: Named preset to start from, overriding the file's `preset:` key

    Returns:
        ExperimentConfig object
    """
    yaml_file = Path(yaml_path)

    if not yaml_file.exists():
        raise FileNotFoundError(
            f"Config file not found: {yaml_path}\n"
            f"Please create a config.yaml file or specify a valid path."
        )

    with open(yaml_file, 'r') as f:
        try:
            config_dict = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{yaml_path}: not valid YAML ({exc})") from exc

    return config_from_dict(config_dict, preset=preset)


def config_to_dict(config: ExperimentConfig) -> Dict[str, Any]:
    """Nested plain-data form that config_from_dict reads back."""
    learner = asdict(config.learner)
    learner["hidden_sizes"] = list(learner["hidden_sizes"])
    return {
        "experiment": {key: getattr(config, key) for key in EXPERIMENT_KEYS},
        "env": asdict(config.env),
        "learner": learner,
    }


def save_config_yaml(config: ExperimentConfig, path):
    with open(path, 'w') as f:
        yaml.safe_dump(config_to_dict(config), f, sort_keys=False)


def print_config_summary(config: ExperimentConfig):
    """Print a summary of the loaded configuration."""
    env, learner = config.env, config.learner
    print("Configuration Loaded:")
    print(f"  Experiment: {config.name} (topology: {config.topology}, seeds: {config.seeds})")
    if env.task == "matrix":
        print(f"  Task: one-shot game, {env.n_predators} agents, {env.n_neutral} neutral + "
              f"{env.n_capture_actions} capture action(s)")
    else:
        print(f"  Grid: {env.grid_size}x{env.grid_size}, {env.n_predators} predators, {env.n_prey} prey, "
              f"{env.max_steps} steps")
        print(f"  Sub-teams: {env.n_subteams} of {env.subteam_size} ({env.capture_mode} capture)")
    print(f"  Rewards: capture {env.capture_reward:+g}, miscapture {env.miscapture_penalty:+g} "
          f"(max episode reward {env.max_episode_reward:g})")
    print(f"  Learner: {learner.max_env_steps:,} steps, gamma={learner.gamma}, lr={learner.learning_rate}, "
          f"hidden={list(learner.hidden_sizes)}")
    print(f"  Evaluation: {config.eval_episodes} greedy episode(s) every {config.eval_every:,} steps")
