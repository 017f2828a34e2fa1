"""Problem instances: weighted graph, vertex weights and exchange-kernel choice.

Model files are JSON documents of the form::

    {
      "vertices": ["a", "b", ...],
      "alpha": {"a": 1.0, ...},
      "edges": [{"u": "a", "v": "b", "c": 0.25}, ...],
      "model": {"type": "kmp"} | {"type": "hp"} | {"type": "iem", "kappa": 0.5}
               | {"type": "discrete", "atoms": {"a->b": [{"u": 0.3, "v": 0.7, "w": 1.0}]}}
    }

Vertices are addressed internally by their position in ``vertices``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvalidModel, ParseError

FAMILIES = ("kmp", "hp", "iem", "discrete")


@dataclass(frozen=True)
class Graph:
    """Undirected graph with nonnegative conductances on unordered pairs.

    ``edges`` holds ``(i, j, c)`` with ``i < j``; each unordered pair appears
    at most once.
    """

    labels: tuple[str, ...]
    edges: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if len(self.labels) < 2:
            raise InvalidModel("vertices: need at least 2 vertices")
        if len(set(self.labels)) != len(self.labels):
            raise InvalidModel("vertices: labels must be unique")
        seen = set()
        for i, j, c in self.edges:
            if not (0 <= i < j < len(self.labels)):
                raise InvalidModel(f"edges: bad vertex pair ({i}, {j})")
            if (i, j) in seen:
                raise InvalidModel(
                    f"edges: pair {self.labels[i]}-{self.labels[j]} listed twice")
            if not math.isfinite(c) or c < 0:
                raise InvalidModel(
                    f"edges: conductance c={c} on {self.labels[i]}-{self.labels[j]} "
                    "must be finite and nonnegative")
            seen.add((i, j))

    @property
    def n(self) -> int:
        return len(self.labels)

    def conductance_matrix(self) -> np.ndarray:
        c = np.zeros((self.n, self.n))
        for i, j, w in self.edges:
            c[i, j] = c[j, i] = w
        return c

    def conductance(self, x: int, y: int) -> float:
        a, b = min(x, y), max(x, y)
        for i, j, w in self.edges:
            if i == a and j == b:
                return w
        return 0.0

    def is_connected(self) -> bool:
        c = self.conductance_matrix()
        ncomp, _ = connected_components(csr_matrix(c > 0), directed=False)
        return ncomp == 1


@dataclass(frozen=True)
class KMP:
    family = "kmp"


@dataclass(frozen=True)
class HP:
    family = "hp"


@dataclass(frozen=True)
class IEM:
    kappa: float
    family = "iem"


@dataclass(frozen=True)
class Discrete:
    """User-defined kernel: finitely many atoms ``(u, v, w)`` per ordered pair.

    ``atoms`` maps an ordered index pair to a tuple of atoms; absent pairs
    carry the zero measure.
    """

    atoms: Mapping[tuple[int, int], tuple[tuple[float, float, float], ...]] = field(
        default_factory=dict)
    family = "discrete"

    def __hash__(self):
        return hash(tuple(sorted(self.atoms.items())))


Kernel = KMP | HP | IEM | Discrete


@dataclass(frozen=True)
class ModelSpec:
    graph: Graph
    alpha: tuple[float, ...]
    kernel: Kernel

    def __post_init__(self):
        alpha = tuple(float(a) for a in self.alpha)
        object.__setattr__(self, "alpha", alpha)
        if len(alpha) != self.graph.n:
            raise InvalidModel("alpha: one weight per vertex required")
        for lab, a in zip(self.graph.labels, alpha):
            if not math.isfinite(a) or a <= 0:
                raise InvalidModel(f"alpha: alpha[{lab}]={a} must be positive")
        k = self.kernel
        if isinstance(k, IEM):
            if not math.isfinite(k.kappa) or not 0 < k.kappa < min(alpha):
                raise InvalidModel(
                    f"model.kappa: kappa={k.kappa} must lie in (0, min alpha={min(alpha)})")
        elif isinstance(k, Discrete):
            for (x, y), atoms in k.atoms.items():
                if x == y or not (0 <= x < self.graph.n and 0 <= y < self.graph.n):
                    raise InvalidModel(f"model.atoms: bad ordered pair ({x}, {y})")
                if self.graph.conductance(x, y) <= 0:
                    raise InvalidModel(
                        f"model.atoms: pair {self.graph.labels[x]}->{self.graph.labels[y]} "
                        "is not an edge with positive conductance")
                for u, v, w in atoms:
                    if not (0 <= u <= 1 and 0 <= v <= 1):
                        raise InvalidModel(
                            f"model.atoms: atom (u={u}, v={v}) outside [0,1]^2")
                    if not (math.isfinite(w) and w > 0):
                        raise InvalidModel(f"model.atoms: weight w={w} must be positive")
        elif not isinstance(k, (KMP, HP)):
            raise InvalidModel(f"model: unknown kernel {k!r}")

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def family(self) -> str:
        return self.kernel.family

    @property
    def total_alpha(self) -> float:
        return math.fsum(self.alpha)

    @property
    def reversible(self) -> bool:
        """Named families are reversible with respect to a Dirichlet law."""
        return self.family != "discrete"


def make_spec(n_or_labels, edges, alpha, kernel: Kernel) -> ModelSpec:
    """Build a spec from index-based edges ``[(i, j, c), ...]``."""
    labels = (tuple(str(i) for i in range(n_or_labels))
              if isinstance(n_or_labels, int) else tuple(n_or_labels))
    norm = tuple(sorted((min(i, j), max(i, j), float(c)) for i, j, c in edges))
    for i, j, _ in norm:
        if i == j:
            raise InvalidModel("edges: self-loops are not allowed")
    return ModelSpec(Graph(labels, norm), tuple(alpha), kernel)


def _expect(cond, msg):
    if not cond:
        raise ParseError(msg)


def _number(x, where):
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool),
            f"{where}: expected a number, got {x!r}")
    return float(x)


def from_dict(doc) -> ModelSpec:
    """Validate a decoded JSON document and build a ModelSpec."""
    _expect(isinstance(doc, dict), "top level must be an object")
    for key in ("vertices", "alpha", "edges", "model"):
        _expect(key in doc, f"missing field '{key}'")
    labels = doc["vertices"]
    _expect(isinstance(labels, list) and all(isinstance(s, str) for s in labels),
            "vertices: expected a list of strings")
    if len(labels) < 2:
        raise InvalidModel("vertices: need at least 2 vertices")
    if len(set(labels)) != len(labels):
        raise InvalidModel("vertices: labels must be unique")
    index = {s: i for i, s in enumerate(labels)}

    alpha_doc = doc["alpha"]
    _expect(isinstance(alpha_doc, dict), "alpha: expected an object")
    for key in alpha_doc:
        if key not in index:
            raise InvalidModel(f"alpha: unknown vertex '{key}'")
    alpha = []
    for s in labels:
        if s not in alpha_doc:
            raise InvalidModel(f"alpha: missing weight for vertex '{s}'")
        alpha.append(_number(alpha_doc[s], f"alpha.{s}"))

    _expect(isinstance(doc["edges"], list), "edges: expected a list")
    edges = []
    for e in doc["edges"]:
        _expect(isinstance(e, dict) and {"u", "v", "c"} <= set(e),
                "edges: each edge needs 'u', 'v' and 'c'")
        a, b = e["u"], e["v"]
        for s in (a, b):
            if s not in index:
                raise InvalidModel(f"edges: unknown vertex {s!r}")
        if a == b:
            raise InvalidModel(f"edges: self-loop at '{a}'")
        edges.append((index[a], index[b], _number(e["c"], "edges.c")))

    m = doc["model"]
    _expect(isinstance(m, dict) and "type" in m, "model: expected an object with 'type'")
    kind = m["type"]
    _expect(kind in FAMILIES, f"model.type: unknown family {kind!r}")
    if kind == "kmp":
        kernel = KMP()
    elif kind == "hp":
        kernel = HP()
    elif kind == "iem":
        _expect("kappa" in m, "model: iem requires 'kappa'")
        kernel = IEM(_number(m["kappa"], "model.kappa"))
    else:
        _expect(isinstance(m.get("atoms"), dict), "model: discrete requires 'atoms'")
        keys = {f"{a}->{b}": (index[a], index[b])
                for a in labels for b in labels if a != b}
        atoms = {}
        for key, lst in m["atoms"].items():
            if key not in keys:
                raise InvalidModel(f"model.atoms: unknown ordered pair '{key}'")
            _expect(isinstance(lst, list), f"model.atoms.{key}: expected a list")
            parsed = []
            for at in lst:
                _expect(isinstance(at, dict) and {"u", "v", "w"} <= set(at),
                        f"model.atoms.{key}: atoms need 'u', 'v' and 'w'")
                parsed.append(tuple(_number(at[f], f"model.atoms.{key}.{f}")
                                    for f in ("u", "v", "w")))
            if parsed:
                atoms[keys[key]] = tuple(parsed)
        kernel = Discrete(atoms)
    return make_spec(labels, edges, alpha, kernel)


def load_model(path) -> ModelSpec:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    return from_dict(doc)


def to_dict(spec: ModelSpec) -> dict:
    labels = spec.graph.labels
    k = spec.kernel
    if isinstance(k, IEM):
        model = {"type": "iem", "kappa": k.kappa}
    elif isinstance(k, Discrete):
        model = {"type": "discrete", "atoms": {
            f"{labels[x]}->{labels[y]}": [{"u": u, "v": v, "w": w} for u, v, w in atoms]
            for (x, y), atoms in sorted(k.atoms.items())}}
    else:
        model = {"type": k.family}
    return {
        "vertices": list(labels),
        "alpha": {s: a for s, a in zip(labels, spec.alpha)},
        "edges": [{"u": labels[i], "v": labels[j], "c": c} for i, j, c in spec.graph.edges],
        "model": model,
    }


def dump_model(spec: ModelSpec, path) -> None:
    Path(path).write_text(json.dumps(to_dict(spec), indent=2) + "\n", encoding="utf-8")


def model_hash(spec: ModelSpec) -> str:
    canon = json.dumps(to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


@dataclass(frozen=True)
class ValidationReport:
    moments_finite: bool
    infinite_pairs: tuple[tuple[int, int], ...]
    strongly_connected: bool
    n_components: int

    @property
    def ok(self) -> bool:
        return self.moments_finite and self.strongly_connected

    def to_dict(self) -> dict:
        return {
            "moments_finite": self.moments_finite,
            "infinite_pairs": [list(p) for p in self.infinite_pairs],
            "strongly_connected": self.strongly_connected,
            "n_components": self.n_components,
            "ok": self.ok,
        }


def validate(spec: ModelSpec) -> ValidationReport:
    """Check finiteness of the first-order jump moments and irreducibility.

    Irreducibility is tested on the ordered digraph with an arc x -> y
    whenever the second-order rate s_xy is positive.
    """
    from .kernels import INFINITE, MomentOracle

    oracle = MomentOracle(spec)
    n = spec.n
    bad = []
    s = np.zeros((n, n))
    for x in range(n):
        for y in range(n):
            if x == y:
                continue
            first = [oracle.bracket(x, y, 0, 1, 0, 0), oracle.bracket(x, y, 0, 0, 0, 1)]
            if any(v is INFINITE for v in first):
                bad.append((x, y))
            s[x, y] = oracle.bracket(x, y, 1, 1, 0, 0)
    ncomp, _ = connected_components(csr_matrix(s > 0), directed=True, connection="strong")
    return ValidationReport(not bad, tuple(bad), ncomp == 1, int(ncomp))
