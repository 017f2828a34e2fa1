"""k-particle configuration spaces, generators and invariant measures.

A configuration xi is an occupation vector on the vertices with |xi| = k.
The generator L_k is the matrix of the hidden-parameter generator acting on
monomials theta^xi, so its off-diagonal entries are nonnegative jump rates
and its rows sum to zero.
"""

from __future__ import annotations

import itertools
import json
import math
import os
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components
from scipy.special import gammaln

from .errors import InfiniteRate, NullVectorNotUnique, SingularSystem, TooLarge
from .kernels import INFINITE, MomentOracle
from .model import ModelSpec

DEFAULT_CAP = 20000


def state_cap(cap: int | None = None) -> int:
    if cap is not None:
        return int(cap)
    env = os.environ.get("EXGAP_CAP")
    return int(env) if env else DEFAULT_CAP


def n_configs(n: int, k: int) -> int:
    return math.comb(n + k - 1, k)


@dataclass(frozen=True)
class ConfigSpace:
    n: int
    k: int
    configs: tuple[tuple[int, ...], ...]

    @cached_property
    def index(self) -> dict[tuple[int, ...], int]:
        return {xi: i for i, xi in enumerate(self.configs)}

    @property
    def size(self) -> int:
        return len(self.configs)

    def as_array(self) -> np.ndarray:
        return np.array(self.configs, dtype=np.int64).reshape(self.size, self.n)

    def __len__(self):
        return len(self.configs)


def enum_configs(n: int, k: int, cap: int | None = None) -> ConfigSpace:
    """All occupation vectors of k particles on n sites, in colexicographic order."""
    if n < 1 or k < 0:
        raise ValueError("need n >= 1 and k >= 0")
    size = n_configs(n, k)
    limit = state_cap(cap)
    if size > limit:
        raise TooLarge(f"|Xi_{k}| = {size} on {n} sites exceeds the cap of {limit} states")
    out = []
    for combo in itertools.combinations_with_replacement(range(n), k):
        xi = [0] * n
        for site in combo:
            xi[site] += 1
        out.append(tuple(xi))
    out.sort(key=lambda xi: xi[::-1])
    return ConfigSpace(n, k, tuple(out))


@dataclass(frozen=True)
class SparseGenerator:
    space: ConfigSpace
    matrix: csr_matrix

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def entries(self):
        m = self.matrix.tocoo()
        return zip(m.row.tolist(), m.col.tolist(), m.data.tolist())


def pair_transitions(oracle: MomentOracle, x: int, y: int, xi, binom=None):
    """Rates contributed by the ordered pair (x, y) out of ``xi``.

    Yields ``(t, rate)`` for each new count t != xi_x at site x (site y then
    holds xi_x + xi_y - t).  Of the xi_x particles at x, j stay (weight u)
    and the rest move (1 - u); of those at y, t - j move to x (1 - v).
    """
    ax, ay = xi[x], xi[y]
    comb = (lambda a, b: binom[a][b]) if binom is not None else math.comb
    for t in range(ax + ay + 1):
        if t == ax:
            continue
        rate = 0.0
        for j in range(max(0, t - ay), min(ax, t) + 1):
            m = oracle.moment(x, y, j, ax - j, ay - t + j, t - j)
            if m is INFINITE:
                raise InfiniteRate(
                    f"rate {tuple(xi)} -> site {x} count {t} needs a divergent moment")
            rate += comb(ax, j) * comb(ay, t - j) * m
        yield t, rate


def build_generator(spec: ModelSpec, k: int, oracle: MomentOracle | None = None,
                    cap: int | None = None) -> SparseGenerator:
    """Exact k-particle generator assembled from mixed moments of the kernel."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    oracle = oracle or MomentOracle(spec)
    space = enum_configs(spec.n, k, cap)
    index = space.index
    n = spec.n
    pairs = [(x, y) for x in range(n) for y in range(n)
             if x != y and oracle.has_mass(x, y)]
    binom = [[math.comb(a, b) for b in range(k + 1)] for a in range(k + 1)]
    rows, cols, vals = [], [], []
    for i, xi in enumerate(space.configs):
        out: dict[int, float] = {}
        for x, y in pairs:
            if xi[x] + xi[y] == 0:
                continue
            for t, rate in pair_transitions(oracle, x, y, xi, binom):
                if rate != 0.0:
                    zeta = list(xi)
                    zeta[x], zeta[y] = t, xi[x] + xi[y] - t
                    col = index[tuple(zeta)]
                    out[col] = out.get(col, 0.0) + rate
        total = math.fsum(out.values())
        for col, rate in out.items():
            rows.append(i)
            cols.append(col)
            vals.append(rate)
        rows.append(i)
        cols.append(i)
        vals.append(-total)
    dim = space.size
    mat = coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
    return SparseGenerator(space, mat)


def annihilation(n: int, k: int, cap: int | None = None) -> csr_matrix:
    """Matrix of (A f)(xi) = sum_x xi_x f(xi - delta_x), shape |Xi_k| x |Xi_{k-1}|."""
    if k < 1:
        raise ValueError("annihilation needs k >= 1")
    hi = enum_configs(n, k, cap)
    lo = enum_configs(n, k - 1, cap)
    rows, cols, vals = [], [], []
    for i, xi in enumerate(hi.configs):
        for x in range(n):
            if xi[x]:
                zeta = list(xi)
                zeta[x] -= 1
                rows.append(i)
                cols.append(lo.index[tuple(zeta)])
                vals.append(float(xi[x]))
    return coo_matrix((vals, (rows, cols)), shape=(hi.size, lo.size)).tocsr()


def dirichlet_mu_hat(alpha, space: ConfigSpace) -> np.ndarray:
    """Multinomial-weighted Dirichlet moments k!/prod(xi!) prod(a^(xi)) / |a|^(k)."""
    a = np.asarray(alpha, dtype=float)
    xi = space.as_array().astype(float)
    k = space.k
    total = a.sum()
    logw = (gammaln(k + 1) - gammaln(xi + 1).sum(axis=1)
            + (gammaln(a + xi) - gammaln(a)).sum(axis=1)
            - (gammaln(total + k) - gammaln(total)))
    return np.exp(logw)


def is_irreducible(gen: SparseGenerator) -> bool:
    if gen.dim == 1:
        return True
    m = gen.matrix.copy()
    m.setdiag(0)
    m.eliminate_zeros()
    ncomp, _ = connected_components(m > 0, directed=True, connection="strong")
    return ncomp == 1


def null_vector(gen: SparseGenerator) -> np.ndarray:
    """Normalised left null vector of an irreducible generator."""
    if not is_irreducible(gen):
        raise NullVectorNotUnique("k-particle chain is not irreducible")
    a = gen.dense().T
    a[-1, :] = 1.0
    b = np.zeros(gen.dim)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("null-space solve failed") from exc
    if np.any(mu <= 0):
        raise NullVectorNotUnique("invariant measure is not strictly positive")
    return mu / mu.sum()


def mu_hat(spec: ModelSpec, k: int, gen: SparseGenerator | None = None,
           cap: int | None = None) -> np.ndarray:
    """Invariant measure of the k-particle system."""
    if spec.reversible:
        return dirichlet_mu_hat(spec.alpha, enum_configs(spec.n, k, cap))
    gen = gen if gen is not None else build_generator(spec, k, cap=cap)
    return null_vector(gen)


def adjoint(gen: SparseGenerator | np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Adjoint D^{-1} L^T D in L^2(mu), as a dense matrix."""
    lk = gen.dense() if isinstance(gen, SparseGenerator) else np.asarray(gen)
    return (lk.T * mu[None, :]) / mu[:, None]


def intertwining_residual(lower: SparseGenerator, upper: SparseGenerator,
                          a: csr_matrix) -> float:
    """max |A L_{k-1} - L_k A|."""
    diff = a @ lower.matrix - upper.matrix @ a
    return float(np.max(np.abs(diff.toarray()))) if diff.nnz else 0.0


def dump_generator(gen: SparseGenerator, csv_path, labels=None) -> Path:
    """Write ``i,j,rate`` rows and a sidecar JSON mapping index to occupation vector."""
    csv_path = Path(csv_path)
    with csv_path.open("w", encoding="utf-8") as fh:
        fh.write("i,j,rate\n")
        for i, j, v in sorted(gen.entries()):
            fh.write(f"{i},{j},{v!r}\n")
    side = csv_path.with_suffix(".states.json")
    doc = {"k": gen.space.k, "vertices": list(labels) if labels else None,
           "states": {str(i): list(xi) for i, xi in enumerate(gen.space.configs)}}
    side.write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return side


class Hierarchy:
    """Lazily built and cached generators, measures and annihilation maps per level."""

    def __init__(self, spec: ModelSpec, cap: int | None = None):
        self.spec = spec
        self.cap = cap
        self.oracle = MomentOracle(spec)
        self._gen: dict[int, SparseGenerator] = {}
        self._mu: dict[int, np.ndarray] = {}
        self._ann: dict[int, csr_matrix] = {}

    def check_size(self, kmax: int) -> None:
        """Raise TooLarge before any work if some level up to kmax exceeds the cap."""
        limit = state_cap(self.cap)
        size = n_configs(self.spec.n, kmax)
        if size > limit:
            raise TooLarge(
                f"|Xi_{kmax}| = {size} on {self.spec.n} sites exceeds the cap of {limit} states")

    def space(self, k: int) -> ConfigSpace:
        return self.generator(k).space

    def generator(self, k: int) -> SparseGenerator:
        if k not in self._gen:
            # looked up at call time so tests can substitute the builder
            self._gen[k] = build_generator(self.spec, k, self.oracle, self.cap)
        return self._gen[k]

    def mu(self, k: int) -> np.ndarray:
        if k not in self._mu:
            if self.spec.reversible:
                self._mu[k] = dirichlet_mu_hat(self.spec.alpha, self.space(k))
            else:
                self._mu[k] = null_vector(self.generator(k))
        return self._mu[k]

    def annihilation(self, k: int) -> csr_matrix:
        if k not in self._ann:
            self._ann[k] = annihilation(self.spec.n, k, self.cap)
        return self._ann[k]
