#!/usr/bin/env python3
"""
Validation tests for the feed-forward networks and the Adam optimizer.
"""

from pathlib import Path
import sys
import tempfile

import numpy as np

from check_runner import run_checks
from src.errors import CheckpointError, ContractError
from src.mlp import (
    MAGIC,
    Mlp,
    OptState,
    backward,
    forward,
    load_mlp,
    mlp_init,
    opt_step,
    param_count,
    save_mlp,
)

FD_STEP = 1e-5


def numeric_gradients(mlp: Mlp, x, upstream):
    """Central differences of sum(upstream * forward(x)) for every parameter."""
    grads = []
    for p in mlp.params():
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + FD_STEP
            plus = np.sum(upstream * forward(mlp, x))
            p[idx] = old - FD_STEP
            minus = np.sum(upstream * forward(mlp, x))
            p[idx] = old
            g[idx] = (plus - minus) / (2 * FD_STEP)
        grads.append(g)
    return grads


def relative_error(a, b):
    return np.max(np.abs(a - b) / np.maximum(1e-4, np.abs(a) + np.abs(b)))


def check_init():
    """Initialization is seeded, bounded and counts parameters correctly"""
    a, b = mlp_init([4, 8, 3], seed=5), mlp_init([4, 8, 3], seed=5)
    assert all(np.array_equal(p, q) for p, q in zip(a.params(), b.params()))
    assert param_count(a) == 4 * 8 + 8 + 8 * 3 + 3 == 67
    assert np.all(np.abs(a.weights[0]) <= 1 / np.sqrt(4))
    zero = mlp_init([4, 8, 3], seed=5, scale=0.0)
    assert all(not np.any(w) for w in zero.weights)
    try:
        mlp_init([4], seed=0)
        raise AssertionError("accepted a single layer size")
    except ContractError:
        pass


def check_forward():
    """Forward pass: bias-only, linear layer and purity"""
    zero = mlp_init([3, 5, 2], seed=0, scale=0.0)
    zero.biases[-1][:] = [1.5, -2.0]
    np.testing.assert_array_equal(forward(zero, np.array([1.0, 2.0, 3.0])), [1.5, -2.0])

    linear = mlp_init([3, 2], seed=1)
    linear.biases[0][:] = [0.5, -0.5]
    x = np.array([1.0, -1.0, 2.0])
    np.testing.assert_allclose(forward(linear, x), linear.weights[0] @ x + linear.biases[0])

    net = mlp_init([6, 16, 16, 4], seed=2)
    batch = np.random.default_rng(0).normal(size=(10, 6))
    assert np.array_equal(forward(net, batch), forward(net, batch))
    assert forward(net, batch).shape == (10, 4)
    try:
        forward(net, np.zeros(5))
        raise AssertionError("accepted a 5-vector for input size 6")
    except ContractError:
        pass


def check_backward_identities():
    """Backward pass: linear gradient and dead rectifier units"""
    linear = mlp_init([3, 2], seed=3)
    x, g = np.array([1.0, 2.0, -1.0]), np.array([0.5, -1.0])
    dw, db = backward(linear, x, g)
    np.testing.assert_allclose(dw, np.outer(g, x))
    np.testing.assert_allclose(db, g)

    net = mlp_init([2, 2, 1], seed=4)
    net.weights[0][:] = [[1.0, 0.0], [-1.0, 0.0]]
    grads = backward(net, np.array([1.0, 0.0]), np.array([1.0]))
    # Hidden unit 1 has pre-activation -1, so nothing flows through it
    assert np.all(grads[0][1] == 0.0) and grads[1][1] == 0.0
    assert grads[2][0, 1] == 0.0


def check_gradients():
    """Backward matches central finite differences on random networks"""
    rng = np.random.default_rng(10)
    worst = 0.0
    for trial in range(20):
        depth = int(rng.integers(1, 4))
        sizes = [int(rng.integers(2, 6)) for _ in range(depth + 1)]
        net = mlp_init(sizes, seed=trial)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.normal(size=(3, sizes[0]))
        upstream = rng.normal(size=(3, sizes[-1]))
        analytic = backward(net, x, upstream)
        numeric = numeric_gradients(net, x, upstream)
        for a, n in zip(analytic, numeric):
            err = relative_error(a, n)
            worst = max(worst, err)
            assert err < 1e-4, f"trial {trial}: relative error {err:.2e}"
    return f"worst relative error {worst:.2e}"


def check_optimizer():
    """Adam: zero gradients are a no-op and w^2 descends"""
    net = mlp_init([3, 4, 2], seed=0)
    before = [p.copy() for p in net.params()]
    opt = OptState.for_model(net, learning_rate=0.1)
    opt_step(net, opt, [np.zeros_like(p) for p in net.params()])
    assert all(np.array_equal(p, q) for p, q in zip(before, net.params()))

    w = Mlp(sizes=[1, 1], weights=[np.array([[1.0]])], biases=[np.zeros(1)])
    opt = OptState.for_model(w, learning_rate=0.1)
    opt_step(w, opt, [2 * w.weights[0], np.zeros(1)])
    assert abs(w.weights[0][0, 0]) < 1.0


def _regression_run(seed):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 3))
    y = np.stack([np.sin(x[:, 0]) + x[:, 1], x[:, 2] ** 2], axis=1)
    net = mlp_init([3, 32, 2], seed=seed)
    opt = OptState.for_model(net, learning_rate=0.01)
    losses = []
    for _ in range(500):
        err = forward(net, x) - y
        losses.append(float(np.mean(err ** 2)))
        opt_step(net, opt, backward(net, x, 2 * err / err.size))
    return net, losses


def check_regression():
    """500 Adam steps fit a fixed tiny batch and are reproducible"""
    net, losses = _regression_run(seed=1)
    final = losses[-1]
    assert final < 1e-3, f"final loss {final:.2e}"
    twin, twin_losses = _regression_run(seed=1)
    assert losses == twin_losses
    assert all(np.array_equal(p, q) for p, q in zip(net.params(), twin.params()))
    return f"loss {losses[0]:.3f} -> {final:.2e}"


def check_save_load():
    """Network files keep parameters and reject foreign or mismatched files"""
    net = mlp_init([5, 7, 3], seed=9)
    with tempfile.TemporaryDirectory() as tmp:
        path = Path(tmp) / "net.sgmlp"
        save_mlp(net, path)
        data = path.read_bytes()
        assert data.startswith(MAGIC)
        assert len(data) == len(MAGIC) + 4 + 3 * 4 + 8 * param_count(net)
        loaded = load_mlp(path, expected_sizes=[5, 7, 3])
        assert all(np.array_equal(p, q) for p, q in zip(net.params(), loaded.params()))
        for bad_path, content in (("bad_magic", b"XXXXXX" + data[6:]), ("short", data[:-8])):
            (Path(tmp) / bad_path).write_bytes(content)
            try:
                load_mlp(Path(tmp) / bad_path)
                raise AssertionError(f"{bad_path} file was accepted")
            except CheckpointError:
                pass
        try:
            load_mlp(path, expected_sizes=[5, 8, 3])
            raise AssertionError("layer size mismatch was accepted")
        except CheckpointError:
            pass


if __name__ == "__main__":
    sys.exit(run_checks("FUNCTION APPROXIMATOR VALIDATION", [
        check_init,
        check_forward,
        check_backward_identities,
        check_gradients,
        check_optimizer,
        check_regression,
        check_save_load,
    ]))
