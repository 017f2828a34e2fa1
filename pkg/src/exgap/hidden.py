"""Hidden-parameter generator on polynomial coefficients.

A polynomial in theta is stored level by level: ``levels[j]`` is the vector
psi_j over Xi_j representing sum_xi psi_j(xi) prod_x theta_x^xi_x.  Since the
generator maps theta^xi to sum_zeta L_j(xi, zeta) theta^zeta, it acts on the
coefficient vector psi_j as L_j^T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import particles
from .errors import ComplementEmpty
from .kernels import GammaReport, gamma as gamma_report
from .model import ModelSpec
from .spectral import complement_basis, symmetrized


@dataclass
class PolyCoeffs:
    levels: dict[int, np.ndarray] = field(default_factory=dict)

    def evaluate(self, theta, hier: particles.Hierarchy) -> float:
        theta = np.asarray(theta, dtype=float)
        total = 0.0
        for j, psi in self.levels.items():
            total += np.dot(psi, monomials(hier.space(j), theta))
        return total

    def __sub__(self, other: "PolyCoeffs") -> "PolyCoeffs":
        keys = set(self.levels) | set(other.levels)
        out = {}
        for j in keys:
            a = self.levels.get(j)
            b = other.levels.get(j)
            out[j] = a - b if a is not None and b is not None else (a if b is None else -b)
        return PolyCoeffs(out)

    def max_abs(self) -> float:
        return max((float(np.max(np.abs(v))) for v in self.levels.values() if v.size),
                   default=0.0)


def monomials(space: particles.ConfigSpace, theta) -> np.ndarray:
    """Vector (prod_x theta_x^xi_x) over the configurations of ``space``."""
    theta = np.asarray(theta)
    return np.prod(theta[None, :] ** space.as_array(), axis=1)


def dual_eval(xi, theta, b: float = 0.0) -> float:
    """Duality polynomial prod_x (theta_x - b)^xi_x."""
    xi = np.asarray(xi)
    return float(np.prod((np.asarray(theta, dtype=float) - b) ** xi))


def hpm_apply(hier: particles.Hierarchy, f: PolyCoeffs) -> PolyCoeffs:
    """Apply the hidden-parameter generator to a polynomial."""
    out = {}
    for j, psi in f.levels.items():
        if j == 0:
            out[j] = np.zeros_like(psi)
        else:
            out[j] = hier.generator(j).matrix.T @ psi
    return PolyCoeffs(out)


def var_pi_coeffs(pi, space2: particles.ConfigSpace) -> PolyCoeffs:
    """Degree-two coefficients of sum_x pi_x theta_x^2 - (sum_x pi_x theta_x)^2."""
    pi = np.asarray(pi, dtype=float)
    xi = space2.as_array()
    out = np.empty(space2.size)
    for i, row in enumerate(xi):
        sites = np.flatnonzero(row)
        if len(sites) == 1:
            x = sites[0]
            out[i] = pi[x] - pi[x] ** 2
        else:
            x, y = sites
            out[i] = -2 * pi[x] * pi[y]
    return PolyCoeffs({2: out})


def pair_form_coeffs(weights: np.ndarray, space2: particles.ConfigSpace) -> np.ndarray:
    """Coefficients of -sum_{x<y} w_xy (theta_x - theta_y)^2 over Xi_2."""
    w = np.array(weights, dtype=float)
    np.fill_diagonal(w, 0.0)
    out = np.empty(space2.size)
    for i, row in enumerate(space2.as_array()):
        sites = np.flatnonzero(row)
        if len(sites) == 1:
            out[i] = -w[sites[0]].sum()
        else:
            x, y = sites
            out[i] = 2 * w[x, y]
    return out


def drift_identity_check(spec: ModelSpec, hier: particles.Hierarchy | None = None,
                         report: GammaReport | None = None) -> float:
    """Max-norm gap between the generator applied to Var_pi and
    -sum_{x<y} (chi_xy + sigma_xy)(theta_x - theta_y)^2."""
    hier = hier or particles.Hierarchy(spec)
    report = report or gamma_report(spec, hier.oracle)
    space2 = hier.space(2)
    lhs = hpm_apply(hier, var_pi_coeffs(report.pi, space2)).levels[2]
    rhs = pair_form_coeffs(report.chi + report.sigma, space2)
    return float(np.max(np.abs(lhs - rhs)))


def dirichlet_form(theta, flow) -> float:
    theta = np.asarray(theta, dtype=float)
    d = theta[:, None] - theta[None, :]
    return 0.5 * float(np.sum(flow * d * d))


def var_pi(theta, pi) -> float:
    theta = np.asarray(theta, dtype=float)
    m = float(np.dot(pi, theta))
    return float(np.dot(pi, (theta - m) ** 2))


def drift_bound_slack(spec: ModelSpec, rng: np.random.Generator, samples: int = 100,
                      hier: particles.Hierarchy | None = None,
                      report: GammaReport | None = None) -> float:
    """Minimum over random theta of -L Var_pi(theta) - gamma * E_RW(theta)."""
    hier = hier or particles.Hierarchy(spec)
    report = report or gamma_report(spec, hier.oracle)
    drift = hpm_apply(hier, var_pi_coeffs(report.pi, hier.space(2)))
    worst = math.inf
    for _ in range(samples):
        th = rng.random(spec.n)
        slack = -drift.evaluate(th, hier) - report.gamma * dirichlet_form(th, report.flow)
        worst = min(worst, slack)
    return worst


def shift_series(hier: particles.Hierarchy, k: int, theta, b: float) -> np.ndarray:
    """exp(-b A) applied to the monomial family, truncated exactly after k terms."""
    total = np.zeros(hier.space(k).size)
    for ell in range(k + 1):
        vec = monomials(hier.space(k - ell), theta)
        for j in range(k - ell + 1, k + 1):
            vec = hier.annihilation(j) @ vec
        total += (-b) ** ell / math.factorial(ell) * vec
    return total


def shift_identity_check(spec: ModelSpec, k: int, rng: np.random.Generator,
                         trials: int = 20, hier: particles.Hierarchy | None = None) -> float:
    """Max residual between the shifted duality polynomial and its annihilation series."""
    hier = hier or particles.Hierarchy(spec)
    xi = hier.space(k).as_array()
    worst = 0.0
    for _ in range(trials):
        theta = rng.random(spec.n)
        b = rng.random()
        direct = np.prod((theta[None, :] - b) ** xi, axis=1)
        series = shift_series(hier, k, theta, b)
        worst = max(worst, float(np.max(np.abs(direct - series))))
    return worst


@dataclass
class LiftedEigen:
    lam: complex
    phi: np.ndarray
    g: PolyCoeffs
    residual: float


def eigen_lift(spec: ModelSpec, k: int, hier: particles.Hierarchy | None = None
               ) -> list[LiftedEigen]:
    """Polynomial eigenfunctions of the hidden-parameter generator for the new
    eigenvalues of level k.

    Each eigenvector phi of the adjoint generator lies in the mu-orthogonal
    complement of range(A_k) and is normalised in L^2(mu); the coefficients
    g = mu * phi satisfy L_k^T g = -lambda g.
    """
    hier = hier or particles.Hierarchy(spec)
    lk = hier.generator(k).dense()
    mu = hier.mu(k)
    q = complement_basis(hier.annihilation(k).toarray(), mu)
    if q.shape[1] == 0:
        raise ComplementEmpty(f"no new eigenvalues at level {k}")
    s = symmetrized(lk, mu)
    # D^{1/2} L^dagger D^{-1/2} = S^T
    block = -(q.T @ s.T @ q)
    if spec.reversible:
        lam, w = np.linalg.eigh(0.5 * (block + block.T))
    else:
        lam, w = np.linalg.eig(block)
        w = w / np.linalg.norm(w, axis=0)
    phi = q @ w / np.sqrt(mu)[:, None]
    out = []
    for i in range(len(lam)):
        g = mu * phi[:, i]
        res = float(np.max(np.abs(lk.T @ g + lam[i] * g)))
        out.append(LiftedEigen(lam[i], phi[:, i], PolyCoeffs({k: g}), res))
    return out


def control_bound_slack(spec: ModelSpec, lifted: LiftedEigen, k: int,
                        rng: np.random.Generator, samples: int = 100,
                        hier: particles.Hierarchy | None = None,
                        pi: np.ndarray | None = None) -> float:
    """Minimum over random theta of
    ||phi||_{L^2(mu)} (min pi)^{-k/2} Var_pi(theta)^{k/2} - |g(theta)|."""
    hier = hier or particles.Hierarchy(spec)
    pi = pi if pi is not None else gamma_report(spec, hier.oracle).pi
    mu = hier.mu(k)
    norm = math.sqrt(float(np.sum(mu * np.abs(lifted.phi) ** 2)))
    const = norm * float(np.min(pi)) ** (-k / 2)
    worst = math.inf
    for _ in range(samples):
        th = rng.random(spec.n)
        val = abs(np.dot(lifted.g.levels[k], monomials(hier.space(k), th)))
        worst = min(worst, const * var_pi(th, pi) ** (k / 2) - val)
    return worst


def eta_polynomial(psi: np.ndarray, space: particles.ConfigSpace, eta) -> float:
    """Evaluate sum_xi psi(xi) k!/prod(xi!) eta^xi, the eta-side image of psi."""
    xi = space.as_array()
    mult = np.array([math.factorial(space.k) / math.prod(math.factorial(int(a)) for a in row)
                     for row in xi])
    return float(np.dot(psi * mult, monomials(space, eta)))
