import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exgap.errors import InvalidModel, ParseError
from exgap.model import (HP, IEM, KMP, Discrete, from_dict, load_model, make_spec,
                         model_hash, to_dict, validate)

from _instances import complete, path


def k4_doc(model=None):
    labels = list("abcd")
    return {
        "vertices": labels,
        "alpha": {s: 1.0 for s in labels},
        "edges": [{"u": a, "v": b, "c": 0.25} for a, b in itertools.combinations(labels, 2)],
        "model": model or {"type": "kmp"},
    }


def write(tmp_path, doc, name="m.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def test_load_k4(tmp_path):
    spec = load_model(write(tmp_path, k4_doc()))
    assert spec.n == 4
    assert len(spec.graph.edges) == 6
    assert all(c == 0.25 for _, _, c in spec.graph.edges)
    assert spec.family == "kmp"
    assert spec.total_alpha == 4.0


def test_iem_kappa_at_alpha_min_rejected(tmp_path):
    with pytest.raises(InvalidModel, match="kappa"):
        load_model(write(tmp_path, k4_doc({"type": "iem", "kappa": 1.0})))


def test_negative_conductance_rejected(tmp_path):
    doc = k4_doc()
    doc["edges"][0]["c"] = -0.1
    with pytest.raises(InvalidModel, match="conductance"):
        load_model(write(tmp_path, doc))


@pytest.mark.parametrize("mutate, err", [
    (lambda d: d.pop("edges"), ParseError),
    (lambda d: d.__setitem__("vertices", "abcd"), ParseError),
    (lambda d: d["alpha"].__setitem__("a", "x"), ParseError),
    (lambda d: d["alpha"].__setitem__("a", 0.0), InvalidModel),
    (lambda d: d["alpha"].pop("b"), InvalidModel),
    (lambda d: d.__setitem__("vertices", ["a", "a", "c", "d"]), InvalidModel),
    (lambda d: d["edges"].append({"u": "a", "v": "b", "c": 1.0}), InvalidModel),
    (lambda d: d["edges"].append({"u": "a", "v": "a", "c": 1.0}), InvalidModel),
    (lambda d: d["edges"].append({"u": "a", "v": "z", "c": 1.0}), InvalidModel),
    (lambda d: d.__setitem__("model", {"type": "foo"}), ParseError),
    (lambda d: d.__setitem__("model", {"type": "discrete", "atoms": {
        "a->b": [{"u": 1.5, "v": 0.2, "w": 1.0}]}}), InvalidModel),
    (lambda d: d.__setitem__("model", {"type": "discrete", "atoms": {
        "a->b": [{"u": 0.5, "v": 0.2, "w": 0.0}]}}), InvalidModel),
])
def test_invalid_documents(tmp_path, mutate, err):
    doc = k4_doc()
    mutate(doc)
    with pytest.raises(err):
        load_model(write(tmp_path, doc))


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        load_model(p)
    with pytest.raises(ParseError):
        load_model(tmp_path / "missing.json")


def test_discrete_atoms_need_an_edge():
    with pytest.raises(InvalidModel, match="not an edge"):
        make_spec(3, path(3), [1, 1, 1], Discrete({(0, 2): ((0.5, 0.5, 1.0),)}))


def test_validate_connected_kmp():
    rep = validate(make_spec(4, path(4), [1, 2, 3, 4], KMP()))
    assert rep.moments_finite and rep.strongly_connected and rep.ok


def test_validate_two_components():
    spec = make_spec(4, [(0, 1, 1.0), (2, 3, 1.0)], [1] * 4, HP())
    rep = validate(spec)
    assert not rep.strongly_connected
    assert rep.n_components == 2
    assert not rep.ok


def test_validate_discrete_with_degenerate_atom():
    # u = v = 1 gives s = 0 on that pair, so the pair adds no arc
    atoms = {(0, 1): ((1.0, 1.0, 3.0),), (1, 0): ((1.0, 1.0, 3.0),),
             (1, 2): ((0.4, 0.6, 1.0),), (2, 1): ((0.3, 0.2, 1.0),)}
    rep = validate(make_spec(3, path(3), [1, 1, 1], Discrete(atoms)))
    assert not rep.strongly_connected
    atoms[(0, 1)] = ((1.0, 1.0, 3.0), (0.5, 0.5, 1.0))
    atoms[(1, 0)] = ((0.2, 0.9, 1.0),)
    assert validate(make_spec(3, path(3), [1, 1, 1], Discrete(atoms))).strongly_connected


def test_validate_is_pure():
    spec = make_spec(5, complete(5, 0.3), [0.5, 1, 1.5, 2, 2.5], IEM(0.2))
    assert validate(spec) == validate(spec)


labels_st = st.lists(st.text(alphabet="abcxyz01", min_size=1, max_size=4),
                     min_size=2, max_size=5, unique=True)


@st.composite
def specs(draw):
    labels = draw(labels_st)
    n = len(labels)
    pairs = list(itertools.combinations(range(n), 2))
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    cs = draw(st.lists(st.floats(0.0, 5.0), min_size=len(chosen), max_size=len(chosen)))
    alpha = draw(st.lists(st.floats(0.05, 10.0), min_size=n, max_size=n))
    fam = draw(st.sampled_from(["kmp", "hp", "iem", "discrete"]))
    if fam == "kmp":
        kernel = KMP()
    elif fam == "hp":
        kernel = HP()
    elif fam == "iem":
        kernel = IEM(min(alpha) * draw(st.floats(0.01, 0.99)))
    else:
        atoms = {}
        for (i, j), c in zip(chosen, cs):
            if c > 0:
                atoms[(i, j)] = ((draw(st.floats(0, 1)), draw(st.floats(0, 1)),
                                  draw(st.floats(0.01, 3))),)
        kernel = Discrete(atoms)
    edges = [(i, j, c) for (i, j), c in zip(chosen, cs)]
    return make_spec(labels, edges, alpha, kernel)


@settings(max_examples=60, deadline=None)
@given(specs())
def test_round_trip(spec):
    again = from_dict(json.loads(json.dumps(to_dict(spec))))
    assert again == spec
    assert again.graph.edges == spec.graph.edges
    assert again.alpha == spec.alpha
    assert model_hash(again) == model_hash(spec)


def test_conductance_matrix_symmetric():
    spec = make_spec(4, [(0, 1, 0.3), (3, 1, 0.7)], [1] * 4, KMP())
    c = spec.graph.conductance_matrix()
    assert np.array_equal(c, c.T)
    assert c[1, 3] == 0.7 and np.all(np.diag(c) == 0)
