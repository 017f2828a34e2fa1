"""k-particle generators checked against direct integration of the jump
measure applied to monomials, and invariant measures against Dirichlet
moments computed by quadrature."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import dblquad, quad
from scipy.special import roots_jacobi

from exgap.errors import NullVectorNotUnique, TooLarge
from exgap.kernels import MomentOracle, rw_rates
from exgap.model import HP, IEM, KMP, Discrete, make_spec
from exgap.particles import (Hierarchy, adjoint, annihilation, build_generator, dump_generator,
                             enum_configs, intertwining_residual, is_irreducible, mu_hat,
                             null_vector, pair_transitions)

from _instances import complete, cycle, path, random_discrete


def test_enum_small():
    assert enum_configs(2, 2).configs == ((2, 0), (1, 1), (0, 2))
    assert enum_configs(4, 2).size == 10
    assert enum_configs(6, 4).size == 126
    assert enum_configs(3, 0).configs == ((0, 0, 0),)


def test_enum_cap():
    with pytest.raises(TooLarge):
        enum_configs(10, 8)
    with pytest.raises(TooLarge):
        enum_configs(4, 3, cap=19)
    assert enum_configs(4, 3, cap=20).size == 20


def test_enum_cap_env(monkeypatch):
    monkeypatch.setenv("EXGAP_CAP", "5")
    with pytest.raises(TooLarge):
        enum_configs(3, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(0, 5))
def test_enum_bijective(n, k):
    sp = enum_configs(n, k)
    assert sp.size == math.comb(n + k - 1, k)
    assert len(set(sp.configs)) == sp.size
    assert all(sum(xi) == k and min(xi) >= 0 for xi in sp.configs)
    assert all(sp.index[xi] == i for i, xi in enumerate(sp.configs))
    assert list(sp.configs) == sorted(sp.configs, key=lambda xi: xi[::-1])


def jump_integral(spec, xi, theta):
    """Sum over ordered pairs of int beta_xy(du, dv) [theta'^xi - theta^xi] by quadrature,
    where theta' is the hidden-parameter update."""
    theta = np.asarray(theta, dtype=float)
    xi = np.asarray(xi)
    base = np.prod(theta ** xi)
    k = spec.kernel
    total = 0.0

    def diff(x, y, u, v):
        t = theta.copy()
        t[x] = u * theta[x] + (1 - u) * theta[y]
        t[y] = (1 - v) * theta[x] + v * theta[y]
        return np.prod(t ** xi) - base

    for x, y in itertools.permutations(range(spec.n), 2):
        c = spec.graph.conductance(x, y)
        if c == 0:
            continue
        ax, ay = spec.alpha[x], spec.alpha[y]
        if isinstance(k, KMP):
            norm = math.gamma(ax) * math.gamma(ay) / math.gamma(ax + ay)
            f = lambda u: u ** (ax - 1) * (1 - u) ** (ay - 1) / norm * diff(x, y, u, 1 - u)
            total += 0.5 * c * quad(f, 0, 1, limit=200, epsabs=1e-14)[0]
        elif isinstance(k, HP):
            f = lambda u: u ** (ax - 1) / (1 - u) * diff(x, y, u, 1.0)
            total += c * quad(f, 0, 1, limit=200, epsabs=1e-14)[0]
        elif isinstance(k, IEM):
            # Gauss-Jacobi in each variable: exact for the polynomial integrand
            m = 12
            zu, wu = roots_jacobi(m, k.kappa - 1, ax - k.kappa - 1)
            zv, wv = roots_jacobi(m, k.kappa - 1, ay - k.kappa - 1)
            wu = wu / wu.sum()
            wv = wv / wv.sum()
            s = sum(a * b * diff(x, y, (1 + p) / 2, (1 + q) / 2)
                    for p, a in zip(zu, wu) for q, b in zip(zv, wv))
            total += 0.5 * c * s
        else:
            total += sum(w * diff(x, y, u, v) for u, v, w in k.atoms.get((x, y), ()))
    return total


SPECS = {
    "kmp": make_spec(3, [(0, 1, 0.7), (1, 2, 1.3), (0, 2, 0.4)], [0.6, 1.4, 2.2], KMP()),
    "hp": make_spec(3, [(0, 1, 0.7), (1, 2, 1.3)], [0.6, 1.4, 2.2], HP()),
    "iem": make_spec(3, [(0, 1, 0.7), (1, 2, 1.3), (0, 2, 0.4)], [0.6, 1.4, 2.2], IEM(0.45)),
    "discrete": random_discrete(np.random.default_rng(3)),
}


@pytest.mark.parametrize("name", list(SPECS))
@pytest.mark.parametrize("k", [1, 2, 3])
def test_generator_matches_jump_integral(name, k):
    spec = SPECS[name]
    gen = build_generator(spec, k)
    lk = gen.dense()
    rng = np.random.default_rng(k)
    for _ in range(3):
        theta = rng.random(spec.n)
        mono = np.prod(theta[None, :] ** gen.space.as_array(), axis=1)
        applied = lk @ mono
        for i, xi in enumerate(gen.space.configs):
            assert applied[i] == pytest.approx(jump_integral(spec, xi, theta), rel=1e-8, abs=1e-11)


def test_level_one_is_random_walk():
    for spec in SPECS.values():
        l1 = build_generator(spec, 1).dense()
        r = rw_rates(spec)
        off = l1 - np.diag(np.diag(l1))
        assert np.allclose(off, r, rtol=1e-14, atol=0)
    spec = make_spec(2, [(0, 1, 1.0)], [1, 1], KMP())
    assert np.allclose(build_generator(spec, 1).dense(), [[-0.5, 0.5], [0.5, -0.5]], atol=1e-15)


def test_kmp_two_particles_pair_contribution():
    spec = make_spec(2, [(0, 1, 1.0)], [1, 1], KMP())
    oracle = MomentOracle(spec)
    # (1,1) -> (2,0): each ordered pair contributes c/2 * E[U^2] = 1/6
    per_pair = dict(pair_transitions(oracle, 0, 1, (1, 1)))[2]
    other = dict(pair_transitions(oracle, 1, 0, (1, 1)))[0]
    u2 = quad(lambda u: u * u, 0, 1)[0]
    assert per_pair == pytest.approx(0.5 * u2, rel=1e-13)
    assert other == pytest.approx(0.5 * u2, rel=1e-13)
    gen = build_generator(spec, 2)
    i, j = gen.space.index[(1, 1)], gen.space.index[(2, 0)]
    assert gen.dense()[i, j] == pytest.approx(2 * 0.5 * u2, rel=1e-13)


def test_hp_beta_xy_cannot_pull_particles_to_x():
    spec = make_spec(3, path(3), [0.8, 1.2, 0.5], HP())
    oracle = MomentOracle(spec)
    for xi in enum_configs(3, 3).configs:
        for x, y in [(0, 1), (1, 0), (1, 2), (2, 1)]:
            for t, rate in pair_transitions(oracle, x, y, xi):
                if t > xi[x]:
                    assert rate == 0.0


def test_generator_rows_and_signs():
    for spec in SPECS.values():
        for k in (1, 2, 3):
            lk = build_generator(spec, k).dense()
            off = lk - np.diag(np.diag(lk))
            assert np.all(off >= 0)
            assert np.max(np.abs(lk.sum(axis=1))) <= 1e-14 * max(1, np.abs(lk).max())


def test_annihilation_examples():
    a1 = annihilation(2, 1).toarray()
    assert np.array_equal(a1, np.ones((2, 1)))
    a2 = annihilation(2, 2).toarray()
    sp1 = enum_configs(2, 1)
    row = a2[enum_configs(2, 2).index[(1, 1)]]
    assert row[sp1.index[(1, 0)]] == 1 and row[sp1.index[(0, 1)]] == 1
    for n, k in [(3, 2), (4, 3), (5, 1)]:
        assert np.all(annihilation(n, k).toarray().sum(axis=1) == k)


def dirichlet_quad(alpha, xi):
    """k!/prod(xi!) E_Dir(alpha)[eta^xi] for three sites by 2D quadrature."""
    a = np.asarray(alpha, dtype=float)
    norm = math.prod(math.gamma(t) for t in a) / math.gamma(a.sum())
    dens = lambda y, x: (x ** (a[0] - 1 + xi[0]) * y ** (a[1] - 1 + xi[1])
                         * (1 - x - y) ** (a[2] - 1 + xi[2])) / norm
    val = dblquad(dens, 0, 1, 0, lambda x: 1 - x, epsabs=1e-13, epsrel=1e-11)[0]
    return math.factorial(sum(xi)) / math.prod(math.factorial(t) for t in xi) * val


def test_mu_hat_dirichlet_quadrature():
    spec = make_spec(3, cycle(3), [1.3, 2.0, 1.6], KMP())
    for k in (1, 2, 3):
        mu = mu_hat(spec, k)
        sp = enum_configs(3, k)
        ref = np.array([dirichlet_quad(spec.alpha, xi) for xi in sp.configs])
        assert np.allclose(mu, ref, rtol=1e-8)
        assert mu.sum() == pytest.approx(1.0, abs=1e-14)


def test_mu_hat_examples():
    spec = make_spec(2, [(0, 1, 1.0)], [1, 1], KMP())
    assert np.allclose(mu_hat(spec, 2), [1 / 3] * 3, atol=1e-15)
    beta = quad(lambda u: u * u, 0, 1)[0]
    assert mu_hat(spec, 2)[0] == pytest.approx(beta, rel=1e-13)
    spec = make_spec(2, [(0, 1, 1.0)], [2, 1], HP())
    assert np.allclose(mu_hat(spec, 1), [2 / 3, 1 / 3], atol=1e-15)


def test_mu_hat_is_left_null_and_detailed_balance():
    for name, spec in SPECS.items():
        for k in (1, 2, 3):
            gen = build_generator(spec, k)
            mu = mu_hat(spec, k, gen)
            assert np.max(np.abs(mu @ gen.dense())) <= 1e-11
            if spec.reversible:
                dl = mu[:, None] * gen.dense()
                assert np.max(np.abs(dl - dl.T)) <= 1e-11
                # the Dirichlet closed form agrees with a null-space solve
                assert np.allclose(mu, null_vector(gen), rtol=1e-9)
        pi = mu_hat(spec, 1)
        assert np.allclose(pi, null_vector(build_generator(spec, 1)), rtol=1e-12)


def test_null_vector_requires_irreducibility():
    atoms = {(0, 1): ((0.0, 1.0, 1.0),)}  # mass only flows 0 -> 1
    spec = make_spec(2, [(0, 1, 1.0)], [1, 1], Discrete(atoms))
    gen = build_generator(spec, 1)
    assert not is_irreducible(gen)
    with pytest.raises(NullVectorNotUnique):
        mu_hat(spec, 1)


def test_adjoint_properties():
    spec = SPECS["kmp"]
    for k in (1, 2):
        gen = build_generator(spec, k)
        mu = mu_hat(spec, k)
        adj = adjoint(gen, mu)
        assert np.max(np.abs(adj - gen.dense())) <= 1e-11
    spec = SPECS["discrete"]
    for k in (1, 2, 3):
        gen = build_generator(spec, k)
        mu = mu_hat(spec, k, gen)
        adj = adjoint(gen, mu)
        assert np.max(np.abs(adj.sum(axis=1))) <= 1e-12
        assert np.max(np.abs(adjoint(adj, mu) - gen.dense())) <= 1e-12
    # level one: the time reversal pi_y r_yx / pi_x
    gen = build_generator(spec, 1)
    pi = mu_hat(spec, 1, gen)
    r = rw_rates(spec)
    adj = adjoint(gen, pi)
    for x, y in itertools.permutations(range(3), 2):
        assert adj[x, y] == pytest.approx(pi[y] * r[y, x] / pi[x], rel=1e-12)


def test_intertwining_and_irreducibility():
    for spec in SPECS.values():
        h = Hierarchy(spec)
        for k in (1, 2, 3):
            assert intertwining_residual(h.generator(k - 1), h.generator(k),
                                         h.annihilation(k)) <= 1e-10
            assert is_irreducible(h.generator(k))


def test_dump_generator(tmp_path):
    gen = build_generator(SPECS["kmp"], 2)
    side = dump_generator(gen, tmp_path / "g.csv", ["a", "b", "c"])
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "i,j,rate"
    rebuilt = np.zeros((gen.dim, gen.dim))
    for line in lines[1:]:
        i, j, v = line.split(",")
        rebuilt[int(i), int(j)] = float(v)
    assert np.array_equal(rebuilt, gen.dense())
    import json
    states = json.loads(side.read_text())["states"]
    assert states["0"] == list(gen.space.configs[0])
