"""
Coordination graphs and Max-Plus joint-action maximization.

A factorized joint value is the sum of per-agent utilities f_i(a_i) and pairwise
payoffs f_ij(a_i, a_j) over the edges of a topology. Max-Plus passes max-sum
messages along the edges and keeps the best joint action seen so far (anytime);
brute_force_argmax is the exhaustive oracle.
"""

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, List, Optional, Sequence, Tuple
import logging

import numpy as np

from .errors import ContractError, SizeError

logger = logging.getLogger(__name__)

# Utility assigned to unavailable actions
UNAVAILABLE = -1e9
BRUTE_FORCE_CAP = 10_000_000

Edge = Tuple[int, int]


@dataclass(frozen=True)
class Topology:
    """Undirected agent graph; edges are stored as sorted (i, j) with i < j."""

    n: int
    edges: Tuple[Edge, ...]

    def neighbors(self) -> List[List[int]]:
        adj: List[List[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj


def make_topology(kind: str, n: int, edges: Optional[Sequence[Edge]] = None) -> Topology:
    """
    Build a named topology.

    Args:
        kind: One of full, empty, line, cycle, custom
        n: Number of agents
        edges: Edge list for custom topologies
    """
    if n < 1:
        raise ContractError("A topology needs at least one agent")
    if kind == "full":
        pairs = list(combinations(range(n), 2))
    elif kind == "empty":
        pairs = []
    elif kind == "line":
        pairs = [(i, i + 1) for i in range(n - 1)]
    elif kind == "cycle":
        pairs = [(i, i + 1) for i in range(n - 1)]
        if n > 2:
            pairs.append((0, n - 1))
    elif kind == "custom":
        pairs = []
        seen = set()
        for edge in edges or []:
            i, j = int(edge[0]), int(edge[1])
            if i == j:
                raise ContractError(f"Self-loop on agent {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ContractError(f"Edge ({i}, {j}) references an agent outside 0..{n - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ContractError(f"Duplicate edge {key}")
            seen.add(key)
            pairs.append(key)
    else:
        raise ContractError(f"Unknown topology kind: {kind}")
    return Topology(n=n, edges=tuple(sorted(pairs)))


def is_acyclic(topology: Topology) -> bool:
    """True for forests."""
    parent = list(range(topology.n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in topology.edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            return False
        parent[ri] = rj
    return True


def diameter(topology: Topology) -> int:
    """Longest shortest path within any connected component."""
    adj = topology.neighbors()
    best = 0
    for source in range(topology.n):
        dist = {source: 0}
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for nxt in adj[node]:
                if nxt not in dist:
                    dist[nxt] = dist[node] + 1
                    queue.append(nxt)
        best = max(best, max(dist.values()))
    return best


@dataclass
class FactorizedQ:
    """Utilities per agent and payoff matrices aligned with topology.edges."""

    utilities: List[np.ndarray]
    payoffs: List[np.ndarray] = field(default_factory=list)

    def check(self, topology: Topology):
        if len(self.utilities) != topology.n:
            raise ContractError(f"{len(self.utilities)} utility vectors for {topology.n} agents")
        if len(self.payoffs) != len(topology.edges):
            raise ContractError(f"{len(self.payoffs)} payoff matrices for {len(topology.edges)} edges")
        for (i, j), payoff in zip(topology.edges, self.payoffs):
            expected = (len(self.utilities[i]), len(self.utilities[j]))
            if payoff.shape != expected:
                raise ContractError(f"Payoff on edge ({i}, {j}) has shape {payoff.shape}, expected {expected}")


@dataclass
class MaxPlusResult:
    joint_action: Tuple[int, ...]
    value: float
    trace: List[float]


def q_tot(fq: FactorizedQ, topology: Topology, joint_action: Sequence[int]) -> float:
    """Plain sum of utilities and edge payoffs at a joint action."""
    fq.check(topology)
    if len(joint_action) != topology.n:
        raise ContractError(f"Joint action has {len(joint_action)} entries for {topology.n} agents")
    for agent, a in enumerate(joint_action):
        if not 0 <= a < len(fq.utilities[agent]):
            raise ContractError(f"Agent {agent}: action {a} out of range")
    total = 0.0
    for agent, a in enumerate(joint_action):
        total += float(fq.utilities[agent][a])
    for (i, j), payoff in zip(topology.edges, fq.payoffs):
        total += float(payoff[joint_action[i], joint_action[j]])
    return total


def _masked_utilities(fq: FactorizedQ, masks) -> List[np.ndarray]:
    utilities = [np.asarray(u, dtype=float) for u in fq.utilities]
    if masks is None:
        return utilities
    return [np.where(np.asarray(m, dtype=bool), u, UNAVAILABLE) for u, m in zip(utilities, masks)]


def brute_force_argmax(fq: FactorizedQ, topology: Topology, masks=None) -> Tuple[Tuple[int, ...], float]:
    """
    Exact maximizer over available joint actions.

    Ties go to the lexicographically smallest joint action (first maximum in
    C order of the value tensor).
    """
    fq.check(topology)
    sizes = [len(u) for u in fq.utilities]
    if int(np.prod(sizes, dtype=np.float64)) > BRUTE_FORCE_CAP:
        raise SizeError(f"Joint action space of {np.prod(sizes, dtype=np.float64):.3g} exceeds {BRUTE_FORCE_CAP}")

    n = topology.n
    total = np.zeros(sizes)
    for agent, u in enumerate(fq.utilities):
        shape = [1] * n
        shape[agent] = sizes[agent]
        total = total + np.asarray(u, dtype=float).reshape(shape)
    for (i, j), payoff in zip(topology.edges, fq.payoffs):
        shape = [1] * n
        shape[i], shape[j] = sizes[i], sizes[j]
        total = total + np.asarray(payoff, dtype=float).reshape(shape)
    if masks is not None:
        for agent, m in enumerate(masks):
            shape = [1] * n
            shape[agent] = sizes[agent]
            total = np.where(np.asarray(m, dtype=bool).reshape(shape), total, -np.inf)

    flat = int(np.argmax(total))
    joint = tuple(int(a) for a in np.unravel_index(flat, sizes))
    return joint, q_tot(fq, topology, joint)


def default_damping(topology: Topology) -> float:
    return 0.0 if is_acyclic(topology) else 0.5


def max_plus(
    fq: FactorizedQ,
    topology: Topology,
    masks=None,
    iterations: int = 8,
    damping: Optional[float] = None,
) -> MaxPlusResult:
    """
    Anytime Max-Plus.

    Messages are updated synchronously in edge order each iteration:

        mu_{i->j}(a_j) = max_{a_i} [u_i(a_i) + f_ij(a_i, a_j) + sum_{k in N(i)\\j} mu_{k->i}(a_i)] - c_ij

    where c_ij is the mean of the unnormalized message, optionally damped
    towards the previous message. After each iteration every agent picks the
    argmax of its utility plus incoming messages; the best joint action seen so
    far (by q_tot) is kept.
    """
    fq.check(topology)
    if iterations < 1:
        raise ContractError("Max-Plus needs at least one iteration")
    if damping is None:
        damping = default_damping(topology)

    utilities = _masked_utilities(fq, masks)
    payoffs = [np.asarray(p, dtype=float) for p in fq.payoffs]
    # Directed messages keyed by (sender, receiver)
    messages: Dict[Edge, np.ndarray] = {}
    factor: Dict[Edge, np.ndarray] = {}
    for (i, j), payoff in zip(topology.edges, payoffs):
        messages[(i, j)] = np.zeros(len(utilities[j]))
        messages[(j, i)] = np.zeros(len(utilities[i]))
        factor[(i, j)] = payoff          # indexed [a_i, a_j]
        factor[(j, i)] = payoff.T        # indexed [a_j, a_i]

    adj = topology.neighbors()
    best_joint: Optional[Tuple[int, ...]] = None
    best_value = -np.inf
    trace: List[float] = []

    for _ in range(iterations):
        incoming = [
            utilities[i] + sum((messages[(k, i)] for k in adj[i]), np.zeros(len(utilities[i])))
            for i in range(topology.n)
        ]
        updated = {}
        for (i, j), old in messages.items():
            belief = incoming[i] - messages[(j, i)]
            raw = np.max(belief[:, None] + factor[(i, j)], axis=0)
            raw = raw - raw.mean()
            updated[(i, j)] = damping * old + (1.0 - damping) * raw
        messages = updated

        joint = tuple(
            int(np.argmax(utilities[i] + sum((messages[(k, i)] for k in adj[i]), np.zeros(len(utilities[i])))))
            for i in range(topology.n)
        )
        value = q_tot(fq, topology, joint)
        if masks is not None and any(not masks[i][a] for i, a in enumerate(joint)):
            value = -np.inf
        if best_joint is None or value > best_value:
            best_joint, best_value = joint, value
        trace.append(best_value)

    return MaxPlusResult(joint_action=best_joint, value=float(best_value), trace=trace)
