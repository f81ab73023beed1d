#!/usr/bin/env python3
"""
Validation tests for coordination graphs and Max-Plus.
"""

from itertools import product
import sys

import numpy as np

from check_runner import run_checks
from src.coord_graph import (
    FactorizedQ,
    Topology,
    brute_force_argmax,
    diameter,
    is_acyclic,
    make_topology,
    max_plus,
    q_tot,
)
from src.errors import ContractError

SYNC_PAYOFF = np.array([[0.0, -2.0], [-2.0, 10.0]])
N_RANDOM = 200


def random_fq(rng, topology, max_actions=5):
    sizes = [int(rng.integers(2, max_actions + 1)) for _ in range(topology.n)]
    return FactorizedQ(
        utilities=[rng.normal(size=s) for s in sizes],
        payoffs=[rng.normal(size=(sizes[i], sizes[j])) for i, j in topology.edges],
    )


def random_tree(rng, n):
    edges = [(int(rng.integers(0, k)), k) for k in range(1, n)]
    return make_topology("custom", n, edges)


def enumerate_best(fq, topology, masks=None):
    """Independent oracle: loop over every joint action."""
    best, best_joint = -np.inf, None
    for joint in product(*(range(len(u)) for u in fq.utilities)):
        if masks is not None and not all(masks[i][a] for i, a in enumerate(joint)):
            continue
        value = sum(fq.utilities[i][a] for i, a in enumerate(joint))
        value += sum(p[joint[i], joint[j]] for (i, j), p in zip(topology.edges, fq.payoffs))
        if value > best:
            best, best_joint = value, joint
    return best_joint, best


def check_topologies():
    """Named topologies have the expected edges"""
    assert len(make_topology("full", 4).edges) == 6
    assert make_topology("empty", 8).edges == ()
    assert make_topology("line", 3).edges == ((0, 1), (1, 2))
    assert make_topology("cycle", 4).edges == ((0, 1), (0, 3), (1, 2), (2, 3))
    assert make_topology("custom", 3, [(2, 0)]).edges == ((0, 2),)
    for edges in ([(0, 0)], [(0, 5)], [(0, 1), (1, 0)]):
        try:
            make_topology("custom", 3, edges)
            raise AssertionError(f"accepted {edges}")
        except ContractError:
            pass
    assert is_acyclic(make_topology("line", 5)) and not is_acyclic(make_topology("cycle", 5))
    assert diameter(make_topology("line", 5)) == 4 and diameter(make_topology("full", 5)) == 1
    assert diameter(make_topology("empty", 3)) == 0


def check_q_tot():
    """q_tot is the plain sum of utilities and payoffs"""
    topology = make_topology("full", 2)
    fq = FactorizedQ(utilities=[np.zeros(2), np.zeros(2)], payoffs=[SYNC_PAYOFF])
    assert q_tot(fq, topology, (1, 1)) == 10.0
    empty = make_topology("empty", 3)
    rng = np.random.default_rng(0)
    fq = random_fq(rng, empty)
    assert q_tot(fq, empty, (1, 0, 1)) == fq.utilities[0][1] + fq.utilities[1][0] + fq.utilities[2][1]

    full = make_topology("full", 3)
    fq = random_fq(rng, full)
    joint = (1, 1, 0)
    direct = sum(fq.utilities[i][a] for i, a in enumerate(joint))
    direct += fq.payoffs[0][1, 1] + fq.payoffs[1][1, 0] + fq.payoffs[2][1, 0]
    assert abs(q_tot(fq, full, joint) - direct) < 1e-12
    try:
        q_tot(FactorizedQ(utilities=[np.zeros(2), np.zeros(3)], payoffs=[np.zeros((2, 2))]), topology, (0, 0))
        raise AssertionError("accepted a 2x2 payoff for 2x3 actions")
    except ContractError:
        pass


def check_brute_force():
    """Brute force finds the optimum with lexicographic ties"""
    topology = make_topology("full", 2)
    fq = FactorizedQ(utilities=[np.zeros(2), np.zeros(2)], payoffs=[SYNC_PAYOFF])
    assert brute_force_argmax(fq, topology) == ((1, 1), 10.0)
    zeros = FactorizedQ(utilities=[np.zeros(3)] * 3, payoffs=[np.zeros((3, 3))] * 3)
    assert brute_force_argmax(zeros, make_topology("full", 3)) == ((0, 0, 0), 0.0)

    rng = np.random.default_rng(1)
    four = make_topology("full", 4)
    for _ in range(20):
        fq = FactorizedQ(
            utilities=[rng.normal(size=5) for _ in range(4)],
            payoffs=[rng.normal(size=(5, 5)) for _ in four.edges],
        )
        joint, value = brute_force_argmax(fq, four)
        oracle_joint, oracle_value = enumerate_best(fq, four)
        assert joint == oracle_joint and abs(value - oracle_value) < 1e-9


def check_masked_brute_force():
    """Brute force respects availability masks"""
    topology = make_topology("full", 2)
    fq = FactorizedQ(utilities=[np.zeros(2), np.zeros(2)], payoffs=[SYNC_PAYOFF])
    masks = [np.array([True, False]), np.array([True, True])]
    assert brute_force_argmax(fq, topology, masks) == ((0, 0), 0.0)


def check_max_plus_small_cases():
    """Max-Plus on a single edge and on the empty graph"""
    topology = make_topology("full", 2)
    fq = FactorizedQ(utilities=[np.zeros(2), np.zeros(2)], payoffs=[SYNC_PAYOFF])
    result = max_plus(fq, topology, iterations=1)
    assert result.joint_action == (1, 1) and result.value == 10.0

    rng = np.random.default_rng(2)
    empty = make_topology("empty", 4)
    fq = random_fq(rng, empty)
    greedy = tuple(int(np.argmax(u)) for u in fq.utilities)
    for iterations in (1, 3):
        assert max_plus(fq, empty, iterations=iterations).joint_action == greedy


def check_max_plus_trees():
    """Max-Plus is exact on random trees with iterations = n"""
    rng = np.random.default_rng(3)
    exact = 0
    for _ in range(N_RANDOM):
        n = int(rng.integers(2, 7))
        topology = random_tree(rng, n)
        fq = random_fq(rng, topology)
        result = max_plus(fq, topology, iterations=n)
        _, optimum = brute_force_argmax(fq, topology)
        assert abs(result.value - optimum) < 1e-9, (result.value, optimum)
        assert abs(result.value - q_tot(fq, topology, result.joint_action)) < 1e-12
        exact += 1
    return f"{exact}/{N_RANDOM} exact"


def check_max_plus_anytime():
    """Max-Plus traces never decrease and never beat the optimum on full graphs"""
    rng = np.random.default_rng(4)
    for _ in range(N_RANDOM):
        n = int(rng.integers(2, 7))
        topology = make_topology("full", n)
        fq = random_fq(rng, topology)
        result = max_plus(fq, topology, iterations=8)
        _, optimum = brute_force_argmax(fq, topology)
        assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))
        assert result.value <= optimum + 1e-9
        assert result.trace[-1] == result.value
    return f"{N_RANDOM}/{N_RANDOM} monotone"


def check_max_plus_masks():
    """Max-Plus only returns available actions"""
    rng = np.random.default_rng(5)
    for _ in range(50):
        topology = make_topology("cycle", 4)
        fq = random_fq(rng, topology)
        masks = []
        for u in fq.utilities:
            m = rng.random(len(u)) < 0.5
            m[int(rng.integers(len(u)))] = True
            masks.append(m)
        result = max_plus(fq, topology, masks, iterations=6)
        assert all(masks[i][a] for i, a in enumerate(result.joint_action))


def check_normalization_invariance():
    """Adding constants to utilities or payoffs does not change the selection"""
    rng = np.random.default_rng(6)
    for _ in range(50):
        topology = random_tree(rng, 5)
        fq = random_fq(rng, topology)
        shifted = FactorizedQ(
            utilities=[u + rng.normal() for u in fq.utilities],
            payoffs=[p + rng.normal() for p in fq.payoffs],
        )
        a = max_plus(fq, topology, iterations=5).joint_action
        b = max_plus(shifted, topology, iterations=5).joint_action
        assert a == b


def check_relabeling_symmetry():
    """Permuting agents permutes the Max-Plus joint action"""
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = 5
        topology = random_tree(rng, n)
        fq = random_fq(rng, topology)
        perm = rng.permutation(n)            # old agent i becomes perm[i]
        inverse = np.argsort(perm)
        edges, payoffs = [], []
        for (i, j), p in zip(topology.edges, fq.payoffs):
            a, b = int(perm[i]), int(perm[j])
            edges.append((a, b) if a < b else (b, a))
            payoffs.append((p if a < b else p.T, (min(a, b), max(a, b))))
        relabeled = make_topology("custom", n, edges)
        lookup = dict((key, p) for p, key in payoffs)
        fq2 = FactorizedQ(
            utilities=[fq.utilities[int(inverse[k])] for k in range(n)],
            payoffs=[lookup[edge] for edge in relabeled.edges],
        )
        a = max_plus(fq, topology, iterations=n).joint_action
        b = max_plus(fq2, relabeled, iterations=n).joint_action
        assert tuple(b[int(perm[i])] for i in range(n)) == a


if __name__ == "__main__":
    sys.exit(run_checks("COORDINATION GRAPH VALIDATION", [
        check_topologies,
        check_q_tot,
        check_brute_force,
        check_masked_brute_force,
        check_max_plus_small_cases,
        check_max_plus_trees,
        check_max_plus_anytime,
        check_max_plus_masks,
        check_normalization_invariance,
        check_relabeling_symmetry,
    ]))
