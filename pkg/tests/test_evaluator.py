import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import precision_recall_fscore_support

from emosynth.errors import InvalidArgument
from emosynth.evaluator import (
    PredictionMatrix,
    load_task,
    map_taxonomy,
    read_task_matrix,
    relabel_others,
    report_from_per_class,
    score,
    sweep_boundary,
)
from emosynth.taxonomy import default_taxonomy
from oracles import grid_search_boundary

TAX = default_taxonomy()


def _matrix(scores, truth, classes=None):
    scores = np.asarray(scores, dtype=float)
    classes = classes or tuple(f"c{j}" for j in range(scores.shape[1]))
    return PredictionMatrix([f"r{i}" for i in range(len(scores))], classes, scores,
                            [frozenset(t) for t in truth])


def test_sweep_single_class():
    res = sweep_boundary(_matrix([[0.9], [0.2]], [{"c0"}, set()]))
    assert res.boundary == 0.21 and res.report.macro.f1 == 1.0
    assert len(res.curve) == 91 and res.curve_csv().startswith("boundary,precision,recall,f1,micro_f1\n")


def test_sweep_all_ones():
    res = sweep_boundary(_matrix([[1.0], [1.0], [1.0]], [{"c0"}] * 3))
    assert res.boundary == 0.05 and res.report.macro.f1 == 1.0


def test_sweep_single_row():
    res = sweep_boundary(_matrix([[0.5]], [{"c0"}]))
    assert res.boundary == 0.05 and res.report.macro.f1 == 1.0


def test_sweep_errors():
    with pytest.raises(InvalidArgument):
        sweep_boundary(_matrix(np.zeros((0, 2)), []))
    with pytest.raises(InvalidArgument):
        sweep_boundary(_matrix([[0.4, 0.6]], [set()]))


@st.composite
def _instances(draw):
    n_cls = draw(st.integers(1, 5))
    n_rows = draw(st.integers(1, 50))
    grid = st.integers(0, 100).map(lambda k: k / 100)
    scores = draw(st.lists(st.lists(grid, min_size=n_cls, max_size=n_cls), min_size=n_rows, max_size=n_rows))
    truth = draw(st.lists(st.sets(st.integers(0, n_cls - 1)), min_size=n_rows, max_size=n_rows))
    if not any(truth):
        truth[0] = {0}
    return scores, truth, n_cls


@settings(max_examples=100, deadline=None)
@given(_instances())
def test_sweep_matches_grid_oracle(inst):
    scores, truth, n_cls = inst
    m = _matrix(scores, [{f"c{c}" for c in t} for t in truth])
    res = sweep_boundary(m)
    b, f1 = grid_search_boundary(scores, truth, n_cls)
    assert res.boundary == b
    assert res.report.macro.f1 == float(f1)


def test_score_perfect_and_arithmetic():
    perfect = score(_matrix([[0.9, 0.1], [0.2, 0.8]], [{"c0"}, {"c1"}]), 0.5)
    assert perfect.macro.f1 == perfect.micro.f1 == 1.0
    rep = report_from_per_class({"a": (0.5, 0.5, 0.5), "b": (0.7, 0.7, 0.7)})
    assert rep.macro.f1 == pytest.approx(0.6, abs=1e-12)


def test_score_zero_division_and_sklearn():
    rng = np.random.default_rng(2)
    scores = rng.random((40, 4))
    truth = [{f"c{j}" for j in range(4) if rng.random() < 0.3} for _ in range(40)]
    truth[0] = set()
    m = _matrix(scores, truth)
    rep = score(m, 0.6)
    p, r, f, s = precision_recall_fscore_support(m.truth_matrix(), scores >= 0.6, average=None, zero_division=0)
    for j, c in enumerate(m.classes):
        assert rep.per_class[c].precision == pytest.approx(p[j], abs=1e-12)
        assert rep.per_class[c].recall == pytest.approx(r[j], abs=1e-12)
        assert rep.per_class[c].f1 == pytest.approx(f[j], abs=1e-12)
        assert rep.support[c] == s[j]
    micro = precision_recall_fscore_support(m.truth_matrix(), scores >= 0.6, average="micro", zero_division=0)
    assert rep.micro.f1 == pytest.approx(micro[2], abs=1e-12)
    assert rep.macro.f1 == pytest.approx(np.mean(f), abs=1e-12)


def test_never_predicted_class_scores_zero():
    rep = score(_matrix([[0.1], [0.2]], [{"c0"}, set()]), 0.5)
    assert rep.per_class["c0"] == type(rep.per_class["c0"])(0.0, 0.0, 0.0)


@settings(max_examples=50, deadline=None)
@given(_instances(), st.randoms(), st.integers(5, 95))
def test_score_permutation_invariance(inst, rnd, k):
    scores, truth, n_cls = inst
    truth = [{f"c{c}" for c in t} for t in truth]
    m = _matrix(scores, truth)
    rows = list(range(len(scores)))
    rnd.shuffle(rows)
    cols = list(range(n_cls))
    rnd.shuffle(cols)
    base = score(m, k / 100)
    assert score(m.take(rows), k / 100).per_class == base.per_class
    permuted = PredictionMatrix(m.ids, tuple(m.classes[j] for j in cols), m.scores[:, cols], m.truth)
    again = score(permuted, k / 100)
    assert again.macro.f1 == pytest.approx(base.macro.f1, abs=1e-12)
    assert base.micro.f1 >= 0


def test_micro_equals_macro_for_identical_counts():
    scores = [[0.9, 0.9], [0.1, 0.1], [0.9, 0.9]]
    truth = [{"c0", "c1"}, {"c0", "c1"}, set()]
    rep = score(_matrix(scores, truth), 0.5)
    assert rep.micro.f1 == pytest.approx(rep.macro.f1)


def test_score_errors():
    m = _matrix([[0.5]], [{"c0"}])
    with pytest.raises(InvalidArgument):
        score(m, 1.5)
    with pytest.raises(InvalidArgument):
        score(m, 0.5, expected_classes=("other",))
    with pytest.raises(InvalidArgument):
        _matrix([[1.2]], [set()])
    with pytest.raises(InvalidArgument):
        _matrix([[0.2]], [{"zz"}])


def test_report_layout_and_format():
    rep = score(_matrix([[0.9], [0.2]], [{"c0"}, set()]), 0.21)
    names = [r[0] for r in rep.rows()]
    assert names == ["c0", "Micro average", "Macro average", "STD"]
    table = rep.format("table")
    assert table.splitlines()[0] == "boundary 0.21"
    assert "class=Macro_average P=1.00 R=1.00 F1=1.00" in rep.format("lines")


def test_csv_roundtrip(tmp_path):
    m = _matrix([[0.25, 0.5], [1.0, 0.0]], [{"c0"}, {"c0", "c1"}])
    m.write(tmp_path / "p.csv")
    back = PredictionMatrix.read(tmp_path / "p.csv", expected_classes=m.classes)
    assert back.ids == m.ids and back.truth == m.truth and np.array_equal(back.scores, m.scores)
    with pytest.raises(InvalidArgument):
        PredictionMatrix.read(tmp_path / "p.csv", expected_classes=("c1", "c0"))


# -- task mappings ---------------------------------------------------------


def _full_matrix(n=6, seed=0):
    rng = np.random.default_rng(seed)
    truth = [{TAX.names[int(rng.integers(28))]} for _ in range(n)]
    return PredictionMatrix([f"r{i}" for i in range(n)], TAX.names, rng.random((n, 28)), [frozenset(t) for t in truth])


def test_isear_mapping():
    task = load_task("isear")
    assert task.mapping["shame"] == "embarrassment" and task.mapping["guilt"] == "remorse"
    for c in ("anger", "disgust", "fear", "sadness", "joy"):
        assert task.mapping[c] == c
    m = _full_matrix()
    m.truth = [frozenset({"embarrassment"})] * len(m.ids)
    mapped = map_taxonomy(m, task)
    j = TAX.names.index("embarrassment")
    assert np.array_equal(mapped.scores[:, mapped.classes.index("shame")], m.scores[:, j])
    assert mapped.truth == [frozenset({"shame"})] * len(m.ids)


def test_identity_mapping():
    m = _full_matrix()
    mapped = map_taxonomy(m, {c: c for c in TAX.names})
    assert mapped.classes == m.classes and np.array_equal(mapped.scores, m.scores) and mapped.truth == m.truth


def test_mapping_errors(tmp_path):
    with pytest.raises(InvalidArgument):
        map_taxonomy(_full_matrix(), {"shame": "shamefulness"})
    bad = tmp_path / "t.yaml"
    bad.write_text("name: t\nmapping:\n  shame: dishonour\n")
    with pytest.raises(InvalidArgument):
        load_task(bad)
    with pytest.raises(InvalidArgument):
        load_task("no-such-task")


def test_read_task_matrix(tmp_path):
    m = _full_matrix(3)
    m.truth = [frozenset({"joy"}), frozenset({"sadness"}), frozenset({"anger"})]
    lines = m.to_csv().splitlines()
    lines[1] = lines[1].rsplit(",", 1)[0] + ",happy"
    lines[2] = lines[2].rsplit(",", 1)[0] + ",sad"
    lines[3] = lines[3].rsplit(",", 1)[0] + ",angry"
    (tmp_path / "p.csv").write_text("\n".join(lines) + "\n")
    out = read_task_matrix(tmp_path / "p.csv", load_task("emocontext"))
    assert out.classes == ("happy", "sad", "angry")
    assert out.truth == [frozenset({"happy"}), frozenset({"sad"}), frozenset({"angry"})]


# -- others relabelling ----------------------------------------------------


def _one_row(values):
    s = np.full((1, 28), 0.1)
    for name, v in values.items():
        s[0, TAX.names.index(name)] = v
    return PredictionMatrix(["x"], TAX.names, s, [frozenset()])


def test_relabel_examples():
    assert relabel_others({"x": "others"}, _one_row({"confusion": 0.97})) == {"x": "confusion"}
    assert relabel_others({"x": "others"}, _one_row({})) == {"x": "neutral"}
    assert relabel_others({"x": "others"}, _one_row({"curiosity": 0.3})) == {"x": "curiosity"}


@given(st.dictionaries(st.sampled_from([f"r{i}" for i in range(6)]),
                       st.sampled_from(["happy", "sad", "angry", "others"])), st.integers(0, 100))
def test_relabel_leaves_other_rows(labels, seed):
    m = _full_matrix(6, seed)
    out = relabel_others(labels, m)
    assert set(out) == set(labels)
    for k, v in labels.items():
        if v != "others":
            assert out[k] == v
        else:
            assert out[k] in TAX
