"""Problem instances shared by the test modules."""

import itertools

import numpy as np

from exgap.model import HP, IEM, KMP, Discrete, make_spec


def complete(n, c):
    return [(i, j, c) for i, j in itertools.combinations(range(n), 2)]


def path(n, c=1.0):
    return [(i, i + 1, c) for i in range(n - 1)]


def cycle(n, c=1.0):
    return [(i, (i + 1) % n, c) for i in range(n)]


def random_tree(n, rng, c=1.0):
    return [(i, int(rng.integers(0, i)), c) for i in range(1, n)]


def random_connected_edges(n, rng, cmin=0.1, cmax=2.0):
    """Random spanning tree plus each remaining pair with probability 1/2."""
    tree = {(min(i, j), max(i, j)) for i, j, _ in random_tree(n, rng)}
    pairs = set(tree)
    for i, j in itertools.combinations(range(n), 2):
        if (i, j) not in pairs and rng.random() < 0.5:
            pairs.add((i, j))
    return [(i, j, float(rng.uniform(cmin, cmax))) for i, j in sorted(pairs)]


def random_named(rng, family, nmin=3, nmax=5, amin=0.2, amax=3.0):
    n = int(rng.integers(nmin, nmax + 1))
    edges = random_connected_edges(n, rng)
    alpha = rng.uniform(amin, amax, n)
    if family == "kmp":
        kernel = KMP()
    elif family == "hp":
        kernel = HP()
    else:
        kernel = IEM(float(rng.uniform(0.05, 0.95) * alpha.min()))
    return make_spec(n, edges, alpha, kernel)


def random_discrete(rng, n=3):
    """Random atoms on every ordered pair of K_n, interior (u, v) so s_xy > 0."""
    atoms = {}
    for x in range(n):
        for y in range(n):
            if x != y:
                m = int(rng.integers(1, 4))
                atoms[(x, y)] = tuple(
                    (float(rng.uniform(0.02, 0.98)), float(rng.uniform(0.02, 0.98)),
                     float(rng.uniform(0.2, 2.0))) for _ in range(m))
    return make_spec(n, complete(n, 1.0), rng.uniform(0.2, 3.0, n), Discrete(atoms))


def suite(seed=20261015, count=50):
    """The property-suite instances: ``count`` random weighted graphs with random
    alpha, each carrying the KMP, HP and IEM kernels."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        n = int(rng.integers(3, 6))
        edges = random_connected_edges(n, rng)
        alpha = rng.uniform(0.2, 3.0, n)
        kappa = float(rng.uniform(0.05, 0.95) * alpha.min())
        for kernel in (KMP(), HP(), IEM(kappa)):
            out.append(make_spec(n, edges, alpha, kernel))
    return out


def discrete_suite(seed=7, count=20):
    rng = np.random.default_rng(seed)
    return [random_discrete(rng) for _ in range(count)]
