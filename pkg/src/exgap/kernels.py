"""Moment oracles for the exchange measures and the scalar rate quantities.

For an ordered pair (x, y) the moment

    m_xy(p, q, r, s) = int beta_xy(du, dv) u^p (1-u)^q v^r (1-v)^s

is evaluated in closed form.  The symmetrised integral against
``beta_xy(du, dv) + beta_yx(dv, du)`` is :meth:`MomentOracle.bracket`; the
second term is ``m_yx(r, s, p, q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import betaln

from .errors import InfiniteRate, NoEdges, SingularSystem, UnsupportedFamily
from .model import HP, IEM, KMP, Discrete, ModelSpec


class _Infinite:
    """Divergent moment.  Deliberately supports no arithmetic."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __reduce__(self):
        return (_Infinite, ())


INFINITE = _Infinite()


def _finite(value, what="moment"):
    if value is INFINITE:
        raise InfiniteRate(f"{what} diverges")
    return value


class MomentOracle:
    """Memoised closed-form moments of beta_xy for one model."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        self._c = spec.graph.conductance_matrix()
        self._cache: dict = {}
        k = spec.kernel
        if isinstance(k, Discrete):
            self._atoms = {pair: np.array(atoms, dtype=float).reshape(-1, 3)
                           for pair, atoms in k.atoms.items()}

    def has_mass(self, x: int, y: int) -> bool:
        if isinstance(self.spec.kernel, Discrete):
            return (x, y) in self._atoms
        return self._c[x, y] > 0

    def moment(self, x: int, y: int, p: int, q: int, r: int, s: int):
        key = (x, y, p, q, r, s)
        try:
            return self._cache[key]
        except KeyError:
            val = self._cache[key] = self._moment(x, y, p, q, r, s)
            return val

    def _moment(self, x, y, p, q, r, s):
        if x == y or self._c[x, y] <= 0:
            return 0.0
        c = self._c[x, y]
        ax, ay = self.spec.alpha[x], self.spec.alpha[y]
        k = self.spec.kernel
        if isinstance(k, KMP):
            logv = betaln(ax + p + s, ay + q + r) - betaln(ax, ay)
            return 0.5 * c * math.exp(logv)
        if isinstance(k, HP):
            # v is identically 1
            if s >= 1:
                return 0.0
            if q == 0:
                return INFINITE
            return c * math.exp(betaln(ax + p, q))
        if isinstance(k, IEM):
            kap = k.kappa
            logv = (betaln(ax - kap + p, kap + q) - betaln(ax - kap, kap)
                    + betaln(ay - kap + r, kap + s) - betaln(ay - kap, kap))
            return 0.5 * c * math.exp(logv)
        if isinstance(k, Discrete):
            at = self._atoms.get((x, y))
            if at is None:
                return 0.0
            u, v, w = at.T
            terms = w * u ** p * (1 - u) ** q * v ** r * (1 - v) ** s
            return math.fsum(terms.tolist())
        raise UnsupportedFamily(type(k).__name__)

    def bracket(self, x: int, y: int, p: int, q: int, r: int, s: int):
        """Integral against beta_xy(du, dv) + beta_yx(dv, du)."""
        a = self.moment(x, y, p, q, r, s)
        b = self.moment(y, x, r, s, p, q)
        if a is INFINITE or b is INFINITE:
            return INFINITE
        return a + b


def _pair_matrix(spec, p, q, r, s, oracle=None, what="rate"):
    oracle = oracle or MomentOracle(spec)
    n = spec.n
    out = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if x != y:
                out[x, y] = _finite(oracle.bracket(x, y, p, q, r, s), what)
    return out


def rw_rates(spec: ModelSpec, oracle: MomentOracle | None = None) -> np.ndarray:
    """Random-walk jump rates r_xy as an n x n matrix with zero diagonal."""
    return _pair_matrix(spec, 0, 1, 0, 0, oracle, "random-walk rate")


def s_rates(spec: ModelSpec, oracle: MomentOracle | None = None) -> np.ndarray:
    """Second-order rates s_xy (integrand u(1-u))."""
    return _pair_matrix(spec, 1, 1, 0, 0, oracle, "second-order rate")


def rate_generator(r: np.ndarray) -> np.ndarray:
    q = np.array(r, dtype=float)
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def stationary_pi(r: np.ndarray) -> np.ndarray:
    """Invariant probability vector of the walk with jump rates ``r``."""
    q = rate_generator(r)
    n = q.shape[0]
    a = q.T.copy()
    a[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        pi = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem("balance equations are singular; walk not irreducible") from exc
    if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
        raise SingularSystem("balance equations have no positive solution")
    return pi / pi.sum()


def dirichlet_pi(spec: ModelSpec) -> np.ndarray:
    a = np.asarray(spec.alpha)
    return a / a.sum()


def model_pi(spec: ModelSpec, oracle: MomentOracle | None = None) -> np.ndarray:
    """Invariant measure of the walk; for named families alpha/|alpha| is cross-checked."""
    pi = stationary_pi(rw_rates(spec, oracle))
    if spec.reversible:
        ref = dirichlet_pi(spec)
        if np.max(np.abs(pi - ref)) > 1e-9:
            raise SingularSystem("walk invariant measure disagrees with alpha/|alpha|")
        return ref
    return pi


def chi_sigma(spec: ModelSpec, pi: np.ndarray, oracle: MomentOracle | None = None):
    """Symmetric per-pair matrices (chi, sigma)."""
    oracle = oracle or MomentOracle(spec)
    n = spec.n
    chi = np.zeros((n, n))
    sigma = np.zeros((n, n))
    for x in range(n):
        for y in range(x + 1, n):
            b = lambda *e: _finite(oracle.bracket(x, y, *e))
            px, py = pi[x], pi[y]
            chi[x, y] = px * b(1, 1, 0, 0) + py * b(0, 0, 1, 1)
            sigma[x, y] = (px * px * b(0, 2, 0, 0) - 2 * px * py * b(0, 1, 0, 1)
                           + py * py * b(0, 0, 0, 2))
            chi[y, x], sigma[y, x] = chi[x, y], sigma[x, y]
    return chi, sigma


def pi_flow(pi: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Symmetrised flows pi_xy = (pi_x r_xy + pi_y r_yx) / 2."""
    f = pi[:, None] * r
    return 0.5 * (f + f.T)


@dataclass(frozen=True)
class GammaReport:
    pi: np.ndarray
    r: np.ndarray
    chi: np.ndarray
    sigma: np.ndarray
    flow: np.ndarray
    gamma: float
    argmin: tuple[int, int]

    def edge_table(self, labels=None):
        n = len(self.pi)
        rows = []
        for x in range(n):
            for y in range(x + 1, n):
                if self.flow[x, y] > 0:
                    rows.append({
                        "x": labels[x] if labels else x,
                        "y": labels[y] if labels else y,
                        "chi": float(self.chi[x, y]),
                        "sigma": float(self.sigma[x, y]),
                        "pi_xy": float(self.flow[x, y]),
                        "ratio": float((self.chi[x, y] + self.sigma[x, y]) / self.flow[x, y]),
                    })
        return rows


def gamma(spec: ModelSpec, oracle: MomentOracle | None = None) -> GammaReport:
    """Kinetic factor: min over pairs with positive flow of (chi + sigma) / pi_xy."""
    oracle = oracle or MomentOracle(spec)
    r = rw_rates(spec, oracle)
    pi = model_pi(spec, oracle)
    chi, sigma = chi_sigma(spec, pi, oracle)
    flow = pi_flow(pi, r)
    best, arg = math.inf, None
    n = spec.n
    for x in range(n):
        for y in range(x + 1, n):
            if flow[x, y] > 0:
                g = (chi[x, y] + sigma[x, y]) / flow[x, y]
                if g < best:
                    best, arg = g, (x, y)
    if arg is None:
        raise NoEdges("no pair carries positive random-walk flow")
    return GammaReport(pi, r, chi, sigma, flow, float(best), arg)


def gamma_closed_form(spec: ModelSpec) -> float:
    """Closed-form kinetic factor for the named families."""
    a = spec.alpha
    scale = 1.0 + 1.0 / spec.total_alpha
    pairs = [(i, j) for i, j, c in spec.graph.edges if c > 0]
    if not pairs:
        raise NoEdges("graph has no edge with positive conductance")
    k = spec.kernel
    if isinstance(k, KMP):
        a2 = min(a[i] + a[j] for i, j in pairs)
        return a2 / (1.0 + a2) * scale
    if isinstance(k, HP):
        return min(a[i] / (a[i] + 1) + a[j] / (a[j] + 1) for i, j in pairs) * scale
    if isinstance(k, IEM):
        kap = k.kappa
        return min((a[i] - kap) / (a[i] + 1) + (a[j] - kap) / (a[j] + 1)
                   for i, j in pairs) * scale
    raise UnsupportedFamily("no closed form for discrete kernels")


ALDOUS_TOL = 1e-12


def aldous_criterion(spec: ModelSpec, oracle: MomentOracle | None = None):
    """Sufficient condition for gap = gap_RW: 2 s_xy - r_xy >= 0 on every pair with mass.

    Returns ``(holds, margin)`` with ``margin`` an n x n matrix (NaN where the
    pair carries no mass).  Margins within a small relative tolerance of zero
    count as nonnegative so that exact identities survive rounding.
    """
    oracle = oracle or MomentOracle(spec)
    r = rw_rates(spec, oracle)
    s = s_rates(spec, oracle)
    n = spec.n
    margin = np.full((n, n), np.nan)
    holds = True
    for x in range(n):
        for y in range(n):
            if x != y and (oracle.has_mass(x, y) or oracle.has_mass(y, x)):
                margin[x, y] = 2 * s[x, y] - r[x, y]
                if margin[x, y] < -ALDOUS_TOL * max(1.0, r[x, y]):
                    holds = False
    return holds, margin
