"""Random-walk gap, level spectra, new eigenvalues and the universal bounds."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import particles
from .errors import AsymmetryDetected, ComplementEmpty, MatchFailure, NotConverged
from .kernels import GammaReport, aldous_criterion, gamma as gamma_report
from .model import ModelSpec

ZERO_REL_TOL = 1e-9
MATCH_REL_TOL = 1e-8
ASYM_TOL = 1e-8
BOUND_TOL = 1e-9


def rw_matrix(pi: np.ndarray, flow: np.ndarray) -> np.ndarray:
    """Symmetric matrix whose quadratic form is the random-walk Dirichlet form."""
    f = np.array(flow, dtype=float)
    np.fill_diagonal(f, 0.0)
    root = np.sqrt(pi)
    m = -f / np.outer(root, root)
    np.fill_diagonal(m, f.sum(axis=1) / pi)
    return m


def gap_rw(spec: ModelSpec, report: GammaReport | None = None) -> float:
    """Second-smallest eigenvalue of the additive reversibilisation of the walk."""
    report = report or gamma_report(spec)
    ev = np.linalg.eigvalsh(rw_matrix(report.pi, report.flow))
    return float(ev[1])


def _sorted(ev: np.ndarray) -> np.ndarray:
    ev = np.asarray(ev)
    if np.iscomplexobj(ev):
        order = np.lexsort((ev.imag, ev.real))
        return ev[order]
    return np.sort(ev)


def symmetrized(lk: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """D^{1/2} L D^{-1/2}, symmetric exactly when L is reversible for mu."""
    root = np.sqrt(mu)
    return lk * root[:, None] / root[None, :]


def _eigvalsh(m):
    try:
        return np.linalg.eigvalsh(m)
    except np.linalg.LinAlgError as exc:
        raise NotConverged(str(exc)) from exc


def _eigvals(m):
    try:
        return np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise NotConverged(str(exc)) from exc


def eig_level(spec: ModelSpec, k: int, hier: particles.Hierarchy | None = None,
              reversible: bool | None = None) -> np.ndarray:
    """Eigenvalues of -L_k, real and ascending on the reversible path."""
    hier = hier or particles.Hierarchy(spec)
    rev = spec.reversible if reversible is None else reversible
    lk = hier.generator(k).dense()
    if rev:
        s = symmetrized(lk, hier.mu(k))
        asym = float(np.max(np.abs(s - s.T))) if s.size else 0.0
        if asym > ASYM_TOL:
            raise AsymmetryDetected(f"level {k}: symmetrised generator asymmetry {asym:.3e}")
        return _eigvalsh(-0.5 * (s + s.T))
    return _sorted(_eigvals(-lk))


def complement_basis(a: np.ndarray, mu: np.ndarray) -> np.ndarray:
    """Orthonormal basis of the Euclidean complement of range(D^{1/2} A)."""
    b = np.sqrt(mu)[:, None] * a
    q, _ = np.linalg.qr(b, mode="complete")
    return q[:, b.shape[1]:]


def new_eigs_complement(spec: ModelSpec, k: int, hier: particles.Hierarchy) -> np.ndarray:
    """New eigenvalues of -L_k from its restriction to the complement of range(A_k)."""
    lk = hier.generator(k).dense()
    mu = hier.mu(k)
    q = complement_basis(hier.annihilation(k).toarray(), mu)
    if q.shape[1] == 0:
        raise ComplementEmpty(f"no new eigenvalues at level {k}")
    s = symmetrized(lk, mu)
    if spec.reversible:
        s = 0.5 * (s + s.T)
        return _eigvalsh(-(q.T @ s @ q))
    return _sorted(_eigvals(-(q.T @ s.T @ q)))


def multiset_difference(upper: np.ndarray, lower: np.ndarray,
                        rel_tol: float = MATCH_REL_TOL) -> np.ndarray:
    """Remove a nearest match in ``upper`` for every element of ``lower``."""
    upper = np.asarray(upper, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(upper))) if upper.size else 1.0)
    tol = rel_tol * scale
    free = np.ones(upper.size, dtype=bool)
    for lam in _sorted(np.asarray(lower, dtype=complex)):
        dist = np.where(free, np.abs(upper - lam), np.inf)
        j = int(np.argmin(dist))
        if not dist[j] <= tol:
            raise MatchFailure(f"eigenvalue {lam} has no partner within {tol:.2e}")
        free[j] = False
    return _sorted(upper[free])


def new_eigs(spec: ModelSpec, k: int, hier: particles.Hierarchy | None = None,
             levels: dict | None = None) -> np.ndarray:
    """Eigenvalues of -L_k that are not eigenvalues of -L_{k-1}."""
    hier = hier or particles.Hierarchy(spec)
    if spec.reversible:
        return new_eigs_complement(spec, k, hier)
    levels = levels if levels is not None else {}
    for j in (k - 1, k):
        if j not in levels:
            levels[j] = eig_level(spec, j, hier)
    return multiset_difference(levels[k], levels[k - 1])


def zero_tolerance(ev: np.ndarray) -> float:
    rho = float(np.max(np.abs(ev))) if len(ev) else 0.0
    return ZERO_REL_TOL * rho


def smallest_nonzero(ev: np.ndarray) -> float:
    """Smallest real part among eigenvalues not numerically zero."""
    ev = np.asarray(ev)
    tol = zero_tolerance(ev)
    nz = ev[np.abs(ev) > tol]
    return float(np.min(nz.real)) if nz.size else float("inf")


def zero_multiplicity(ev: np.ndarray) -> int:
    ev = np.asarray(ev)
    return int(np.sum(np.abs(ev) <= zero_tolerance(ev)))


@dataclass
class SpectralReport:
    gap_rw: float
    levels: dict[int, np.ndarray]
    new: dict[int, np.ndarray]
    gap_upto: float
    zero_tolerance: dict[int, float] = field(default_factory=dict)

    def gap_level(self, k: int) -> float:
        return smallest_nonzero(self.levels[k])

    def min_new(self, k: int) -> float:
        return float(np.min(np.asarray(self.new[k]).real))


def spectrum(spec: ModelSpec, kmax: int, hier: particles.Hierarchy | None = None,
             report: GammaReport | None = None, threads: int | None = None) -> SpectralReport:
    """Spectra of -L_k for k = 1..kmax with their new eigenvalues."""
    if kmax < 1:
        raise ValueError("kmax must be at least 1")
    hier = hier or particles.Hierarchy(spec)
    hier.check_size(kmax)
    for k in range(kmax + 1):
        hier.generator(k)
        hier.mu(k)
    ks = list(range(0, kmax + 1))
    workers = max(1, threads or 1)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        levels = dict(zip(ks, pool.map(lambda k: eig_level(spec, k, hier), ks)))
        news = dict(zip(ks[1:], pool.map(lambda k: new_eigs(spec, k, hier, levels), ks[1:])))
    del levels[0]
    g = gap_rw(spec, report)
    upto = min(smallest_nonzero(levels[k]) for k in levels)
    tol = {k: zero_tolerance(ev) for k, ev in levels.items()}
    return SpectralReport(g, levels, news, upto, tol)


def gap_upto(spec: ModelSpec, kmax: int, hier: particles.Hierarchy | None = None) -> float:
    """Minimum over levels 1..kmax of the smallest nonzero eigenvalue; an upper approximation
    of the full spectral gap."""
    return spectrum(spec, kmax, hier).gap_upto


@dataclass
class Check:
    name: str
    basis: str
    status: str
    detail: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status != "fail"

    def to_dict(self) -> dict:
        return {"name": self.name, "basis": self.basis, "status": self.status,
                "detail": self.detail}


@dataclass
class BoundsReport:
    gamma: float
    gap_rw: float
    checks: list[Check]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        return next(c for c in self.checks if c.name == name)


def _status(ok: bool) -> str:
    return "pass" if ok else "fail"


def verify_bounds(spec: ModelSpec, kmax: int, sp: SpectralReport | None = None,
                  report: GammaReport | None = None,
                  hier: particles.Hierarchy | None = None) -> BoundsReport:
    """Evaluate the kinetic-factor lower bounds and the gap sandwich on computed spectra."""
    report = report or gamma_report(spec)
    sp = sp or spectrum(spec, kmax, hier, report)
    g, gap = report.gamma, sp.gap_rw
    checks = []

    floor = g * gap
    worst = {k: sp.min_new(k) for k in range(2, kmax + 1)}
    ok = all(v >= floor - BOUND_TOL for v in worst.values())
    checks.append(Check(
        "new_eigenvalue_lower_bound",
        "every eigenvalue first appearing at level k >= 2 has real part >= gamma * gap_RW",
        _status(ok), {"gamma_gap_rw": floor, "min_new_real_part": worst}))

    if spec.reversible:
        lo = min(1.0, g) * gap
        ok = lo - BOUND_TOL <= sp.gap_upto <= gap + BOUND_TOL
        checks.append(Check(
            "gap_sandwich",
            "reversible models: min(1, gamma) * gap_RW <= gap <= gap_RW",
            _status(ok), {"lower": lo, "gap_upto": sp.gap_upto, "upper": gap}))
        g1 = sp.gap_level(1)
        ok = abs(g1 - gap) <= 1e-10 * max(1.0, gap)
        checks.append(Check(
            "level_one_gap",
            "reversible models: the one-particle gap equals gap_RW",
            _status(ok), {"gap_1": g1, "gap_rw": gap}))
    else:
        checks.append(Check("gap_sandwich", "requires reversibility", "n/a"))
        checks.append(Check("level_one_gap", "requires reversibility", "n/a"))

    holds, _ = aldous_criterion(spec)
    if holds and spec.reversible:
        per = {k: sp.gap_level(k) for k in sp.levels}
        ok = all(v >= gap - BOUND_TOL for v in per.values())
        checks.append(Check(
            "aldous_identity",
            "when 2 s_xy >= r_xy on every pair of a reversible model, gap_k >= gap_RW",
            _status(ok), {"gap_k": per, "gap_rw": gap}))
    else:
        why = "criterion does not hold" if not holds else "requires reversibility"
        checks.append(Check("aldous_identity", why, "n/a", {"criterion": holds}))
    return BoundsReport(g, gap, checks)
