"""Continuous-time simulation of the mass (eta) and hidden-parameter (theta) dynamics.

Events arrive at the constant total rate Lambda = sum of per-pair masses, so
all replicas of a block advance in lockstep: at every step each active
replica performs one event.  Randomness comes from one PCG64 stream per block
of ``BLOCK`` replicas, keyed on (seed, block index), which makes results
independent of the number of worker threads.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicSpline
from scipy.linalg import expm

from . import particles
from .errors import DegenerateWindow, InvariantViolation, RateOverflow
from .hidden import monomials, var_pi_coeffs
from .model import HP, IEM, KMP, Discrete, ModelSpec, model_hash

BLOCK = 1024
RENORMALIZE_EVERY = 10 ** 6
THETA_TOL = 1e-12
MAX_RATE = 1e9


@dataclass(frozen=True)
class TruncationPolicy:
    eps: float = 1e-4
    grid: int = 2048

    def __post_init__(self):
        if not self.eps > 0 or self.eps >= 1:
            raise ValueError("eps must lie in (0, 1)")
        if self.grid < 8:
            raise ValueError("grid must have at least 8 nodes")


def dirichlet_sample(alpha, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Dirichlet draws via normalised independent Gamma(alpha_x, 1) variables."""
    a = np.asarray(alpha, dtype=float)
    shape = a.shape if size is None else (size,) + a.shape
    g = rng.standard_gamma(np.broadcast_to(a, shape))
    return g / g.sum(axis=-1, keepdims=True)


class HarmonicTable:
    """Inverse CDF of u^(a-1)/(1-u) on (0, 1-eps].

    Nodes are geometric in u on (0, 1/2] and geometric in 1-u on [1/2, 1-eps],
    with cubic-spline interpolation between them.  Below the first node the
    density is u^(a-1) to relative accuracy u0 and is inverted analytically.
    """

    def __init__(self, a: float, policy: TruncationPolicy):
        self.a = a
        half = policy.grid // 2
        self.u0 = 1e-9
        low = np.geomspace(self.u0, 0.5, half)
        high = 1.0 - np.geomspace(0.5, policy.eps, policy.grid - half + 1)[1:]
        nodes = np.concatenate([low, high])
        dens = lambda u: u ** (a - 1) / (1 - u)
        seg = [quad(dens, lo, hi, epsabs=0.0, epsrel=1e-12)[0]
               for lo, hi in zip(nodes[:-1], nodes[1:])]
        f0 = self.u0 ** a / a
        self.cdf = np.concatenate([[f0], f0 + np.cumsum(seg)])
        self.nodes = nodes
        self.total = float(self.cdf[-1])
        self.half = half
        # log F is nearly linear in log u near 0, F nearly linear in log(1-u) near 1
        self._low = CubicSpline(np.log(self.cdf[:half]), np.log(nodes[:half]))
        self._high = CubicSpline(self.cdf[half - 1:], np.log1p(-nodes[half - 1:]))

    def invert(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        out = np.empty_like(f)
        split = self.cdf[self.half - 1]
        low = f <= split
        with np.errstate(divide="ignore"):
            out[low] = np.exp(self._low(np.log(f[low])))
        out[~low] = -np.expm1(self._high(np.minimum(f[~low], self.total)))
        small = f < self.cdf[0]
        if np.any(small):
            out[small] = (self.a * f[small]) ** (1.0 / self.a)
        return out


class EventSampler:
    """Total event rate and joint draws of (pair, u, v) for one model."""

    def __init__(self, spec: ModelSpec, policy: TruncationPolicy):
        self.spec = spec
        self.policy = policy
        c = spec.graph.conductance_matrix()
        alpha = np.asarray(spec.alpha)
        k = spec.kernel
        n = spec.n
        if isinstance(k, Discrete):
            rows = [(x, y, u, v, w) for (x, y), atoms in sorted(k.atoms.items())
                    for u, v, w in atoms]
            arr = np.array(rows, dtype=float).reshape(-1, 5)
            self.x = arr[:, 0].astype(np.int64)
            self.y = arr[:, 1].astype(np.int64)
            self.atom_u, self.atom_v = arr[:, 2], arr[:, 3]
            weights = arr[:, 4]
        else:
            pairs = [(x, y) for x in range(n) for y in range(n) if x != y and c[x, y] > 0]
            self.x = np.array([p[0] for p in pairs], dtype=np.int64)
            self.y = np.array([p[1] for p in pairs], dtype=np.int64)
            cp = c[self.x, self.y]
            if isinstance(k, HP):
                self.tables = {a: HarmonicTable(a, policy) for a in sorted(set(alpha[self.x]))}
                weights = cp * np.array([self.tables[a].total for a in alpha[self.x]])
                if weights.sum() > MAX_RATE:
                    raise RateOverflow(
                        f"truncated event rate {weights.sum():.3e} exceeds {MAX_RATE:.0e}; "
                        "increase eps")
            else:
                weights = 0.5 * cp
        self.weights = weights
        self.rate = float(weights.sum())
        self.cum = np.cumsum(weights) / self.rate if self.rate > 0 else weights
        self.ax = alpha[self.x]
        self.ay = alpha[self.y]

    def draw(self, rng: np.random.Generator, size: int):
        """Pair indices and update fractions for ``size`` events."""
        idx = np.minimum(np.searchsorted(self.cum, rng.random(size), side="right"),
                         len(self.cum) - 1)
        k = self.spec.kernel
        if isinstance(k, KMP):
            u = rng.beta(self.ax[idx], self.ay[idx])
            v = 1.0 - u
        elif isinstance(k, IEM):
            u = rng.beta(self.ax[idx] - k.kappa, k.kappa)
            v = rng.beta(self.ay[idx] - k.kappa, k.kappa)
        elif isinstance(k, HP):
            f = rng.random(size)
            a = self.ax[idx]
            u = np.empty(size)
            for val, table in self.tables.items():
                m = a == val
                u[m] = table.invert(f[m] * table.total)
            v = np.ones(size)
        else:
            u, v = self.atom_u[idx], self.atom_v[idx]
        return self.x[idx], self.y[idx], u, v


def sample_update(spec: ModelSpec, pair, rng: np.random.Generator,
                  policy: TruncationPolicy = TruncationPolicy(), size: int | None = None):
    """Draw update fractions (u, v) for a fixed ordered pair."""
    x, y = pair
    m = 1 if size is None else size
    k = spec.kernel
    ax, ay = spec.alpha[x], spec.alpha[y]
    if isinstance(k, KMP):
        u = rng.beta(ax, ay, size=m)
        v = 1.0 - u
    elif isinstance(k, IEM):
        u = rng.beta(ax - k.kappa, k.kappa, size=m)
        v = rng.beta(ay - k.kappa, k.kappa, size=m)
    elif isinstance(k, HP):
        table = HarmonicTable(ax, policy)
        u = table.invert(rng.random(m) * table.total)
        v = np.ones(m)
    else:
        atoms = np.array(k.atoms[(x, y)], dtype=float).reshape(-1, 3)
        p = atoms[:, 2] / atoms[:, 2].sum()
        i = rng.choice(len(atoms), size=m, p=p)
        u, v = atoms[i, 0], atoms[i, 1]
    return (float(u[0]), float(v[0])) if size is None else (u, v)


@dataclass
class Trajectory:
    process: str
    times: np.ndarray
    states: np.ndarray          # (replicas, samples, n)
    seed: int
    eps: float
    model_hash: str
    events: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def replicas(self) -> int:
        return self.states.shape[0]

    def observable(self, name: str, pi=None) -> np.ndarray:
        """``var_pi`` gives (replicas, samples); ``moments`` appends first and
        second moments as trailing components."""
        if name == "var_pi":
            pi = np.asarray(pi)
            m = self.states @ pi
            return ((self.states - m[..., None]) ** 2) @ pi
        if name == "moments":
            n = self.states.shape[-1]
            iu = np.triu_indices(n)
            second = self.states[..., :, None] * self.states[..., None, :]
            return np.concatenate([self.states, second[..., iu[0], iu[1]]], axis=-1)
        raise ValueError(f"unknown observable {name!r}")

    def observable_names(self, name: str, labels) -> list[str]:
        if name == "var_pi":
            return ["var_pi"]
        n = len(labels)
        first = [f"m_{labels[x]}" for x in range(n)]
        second = [f"m_{labels[x]}_{labels[y]}" for x in range(n) for y in range(x, n)]
        return first + second


def _run_block(sampler: EventSampler, x0: np.ndarray, times: np.ndarray,
               rng: np.random.Generator, process: str):
    size, n = x0.shape
    state = x0.copy()
    nsamp = len(times)
    out = np.empty((size, nsamp, n))
    rate = sampler.rate
    if rate <= 0:
        out[:] = state[:, None, :]
        return out, 0
    clock = rng.exponential(1.0 / rate, size=size)
    ptr = np.zeros(size, dtype=np.int64)
    active = np.ones(size, dtype=bool)
    lo = state.min(axis=1)
    hi = state.max(axis=1)
    steps = 0
    events = 0
    renorm = max(1, RENORMALIZE_EVERY // size)
    rows = np.arange(size)
    while True:
        while True:
            due = active & (ptr < nsamp)
            due[due] = times[ptr[due]] < clock[due]
            if not due.any():
                break
            idx = np.flatnonzero(due)
            out[idx, ptr[idx]] = state[idx]
            ptr[idx] += 1
        active &= ptr < nsamp
        if not active.any():
            break
        xs, ys, u, v = sampler.draw(rng, size)
        dt = rng.exponential(1.0 / rate, size=size)
        idx = rows[active]
        xs, ys, u, v = xs[idx], ys[idx], u[idx], v[idx]
        sx, sy = state[idx, xs], state[idx, ys]
        if process == "eta":
            state[idx, xs] = u * sx + (1.0 - v) * sy
            state[idx, ys] = (1.0 - u) * sx + v * sy
        else:
            # difference form keeps flat configurations exactly fixed
            nx = sy + u * (sx - sy)
            ny = sx + v * (sy - sx)
            state[idx, xs] = nx
            state[idx, ys] = ny
            bad = ((nx < lo[idx] - THETA_TOL) | (nx > hi[idx] + THETA_TOL)
                   | (ny < lo[idx] - THETA_TOL) | (ny > hi[idx] + THETA_TOL))
            if bad.any():
                raise InvariantViolation("theta left the range of its initial values")
        clock[idx] += dt[idx]
        events += len(idx)
        steps += 1
        if process == "eta" and steps % renorm == 0:
            state /= state.sum(axis=1, keepdims=True)
    return out, events


def simulate(spec: ModelSpec, process: str, x0, times, replicas: int, seed: int,
             policy: TruncationPolicy = TruncationPolicy(),
             threads: int | None = None) -> Trajectory:
    """Simulate ``replicas`` independent copies and record states at ``times``.

    ``x0`` is either one initial state or an array of shape (replicas, n).
    """
    if process not in ("eta", "theta"):
        raise ValueError("process must be 'eta' or 'theta'")
    if replicas < 1:
        raise ValueError("replicas must be positive")
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise ValueError("times must be a nonempty nondecreasing list of nonnegative values")
    x0 = np.asarray(x0, dtype=float)
    if x0.ndim == 1:
        x0 = np.broadcast_to(x0, (replicas, spec.n))
    if x0.shape != (replicas, spec.n):
        raise ValueError("initial state has the wrong shape")
    if process == "theta" and (np.any(x0 < 0) or np.any(x0 > 1)):
        raise InvariantViolation("theta must start in [0, 1]^V")
    if process == "eta" and (np.any(x0 < 0) or np.any(np.abs(x0.sum(axis=1) - 1) > 1e-12)):
        raise InvariantViolation("eta must start on the probability simplex")
    sampler = EventSampler(spec, policy)
    nblocks = math.ceil(replicas / BLOCK)

    def job(b):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))
        sl = slice(b * BLOCK, min(replicas, (b + 1) * BLOCK))
        return _run_block(sampler, np.array(x0[sl]), times, rng, process)

    with ThreadPoolExecutor(max_workers=max(1, threads or 1)) as pool:
        parts = list(pool.map(job, range(nblocks)))
    states = np.concatenate([p[0] for p in parts], axis=0)
    events = sum(p[1] for p in parts)
    return Trajectory(process, times, states, seed, policy.eps, model_hash(spec), events,
                      {"event_rate": sampler.rate})


def simulate_eta(spec, x0, times, replicas, seed, policy=TruncationPolicy(), threads=None):
    return simulate(spec, "eta", x0, times, replicas, seed, policy, threads)


def simulate_theta(spec, x0, times, replicas, seed, policy=TruncationPolicy(), threads=None):
    return simulate(spec, "theta", x0, times, replicas, seed, policy, threads)


MIN_POINTS = 5


def _slope_rate(t: np.ndarray, mean: np.ndarray) -> float:
    slope = np.polyfit(t, np.log(mean), 1)[0]
    return float(-slope)


def _valid(t, mean, window):
    ok = (t <= window * (1 + 1e-12)) & np.isfinite(mean) & (mean > np.finfo(float).tiny)
    return ok


def decay_rate_of_curve(t, mean, window) -> float:
    """Least-squares decay rate of log(mean) over samples in [0, window]."""
    t = np.asarray(t, dtype=float)
    mean = np.asarray(mean, dtype=float)
    ok = _valid(t, mean, window)
    if ok.sum() < MIN_POINTS:
        raise DegenerateWindow(f"only {int(ok.sum())} usable points in the fit window")
    return _slope_rate(t[ok], mean[ok])


def estimate_decay(values: np.ndarray, times, window: float, seed: int = 0,
                   bootstrap: int = 200) -> tuple[float, float]:
    """Decay rate of the replica mean of ``values`` (replicas x samples) with a
    bootstrap standard error."""
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    mean = values.mean(axis=0)
    ok = _valid(times, mean, window)
    if ok.sum() < MIN_POINTS:
        raise DegenerateWindow(f"only {int(ok.sum())} usable points in the fit window")
    rate = _slope_rate(times[ok], mean[ok])
    rng = np.random.default_rng(seed)
    reps = values.shape[0]
    boots = []
    for _ in range(bootstrap):
        m = values[rng.integers(0, reps, reps)].mean(axis=0)[ok]
        if np.all(m > np.finfo(float).tiny):
            boots.append(_slope_rate(times[ok], m))
    stderr = float(np.std(boots, ddof=1)) if len(boots) > 1 else float("nan")
    return rate, stderr


def exact_var_curve(spec: ModelSpec, theta0, times, pi,
                    hier: particles.Hierarchy | None = None) -> np.ndarray:
    """Exact E[Var_pi(theta(t))] from the two-particle generator."""
    hier = hier or particles.Hierarchy(spec)
    l2 = hier.generator(2).dense()
    coeff = var_pi_coeffs(pi, hier.space(2)).levels[2]
    mono = monomials(hier.space(2), np.asarray(theta0, dtype=float))
    return np.array([coeff @ expm(t * l2) @ mono for t in times])


def exact_dual_mean(spec: ModelSpec, xi, theta0, t: float,
                    hier: particles.Hierarchy | None = None) -> float:
    """sum_zeta [exp(t L_k)](xi, zeta) theta0^zeta with k = |xi|."""
    hier = hier or particles.Hierarchy(spec)
    k = int(sum(xi))
    space = hier.space(k)
    row = expm(t * hier.generator(k).dense())[space.index[tuple(int(a) for a in xi)]]
    return float(row @ monomials(space, np.asarray(theta0, dtype=float)))


def duality_mc_check(spec: ModelSpec, xi, theta0, t: float, replicas: int, seed: int,
                     policy: TruncationPolicy = TruncationPolicy(),
                     hier: particles.Hierarchy | None = None, threads=None) -> float:
    """z-score of the simulated mean of prod theta(t)^xi against the dual semigroup."""
    if t == 0:
        return 0.0
    exact = exact_dual_mean(spec, xi, theta0, t, hier)
    traj = simulate_theta(spec, theta0, [t], replicas, seed, policy, threads)
    vals = np.prod(traj.states[:, 0, :] ** np.asarray(xi), axis=1)
    se = vals.std(ddof=1) / math.sqrt(replicas)
    if se == 0:
        return 0.0 if vals.mean() == exact else math.copysign(math.inf, vals.mean() - exact)
    return float((vals.mean() - exact) / se)


def export_csv(traj: Trajectory, path, observable: str, labels, pi=None) -> Path:
    """Write ``replica,t,<observable columns>`` and a JSON metadata sidecar."""
    path = Path(path)
    vals = traj.observable(observable, pi)
    if vals.ndim == 2:
        vals = vals[..., None]
    names = traj.observable_names(observable, labels)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(["replica", "t"] + names) + "\n")
        for r in range(traj.replicas):
            for s, t in enumerate(traj.times):
                fh.write(",".join([str(r), repr(float(t))]
                                  + [repr(float(v)) for v in vals[r, s]]) + "\n")
    meta = path.with_suffix(".meta.json")
    meta.write_text(json.dumps({
        "seed": traj.seed, "eps": traj.eps, "model_hash": traj.model_hash,
        "process": traj.process, "observable": observable, "replicas": traj.replicas,
        "events": traj.events, **traj.meta}, indent=1) + "\n", encoding="utf-8")
    return meta
