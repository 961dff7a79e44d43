import math
import random

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.metrics import cohen_kappa_score
from statsmodels.stats.inter_rater import aggregate_raters, fleiss_kappa as sm_fleiss

from conftest import make_example
from emosynth.errors import InvalidArgument
from emosynth.humaneval import (
    AnnotationResult,
    GoldAnswer,
    check_task,
    cohen_kappa,
    fleiss_kappa,
    generate_tasks,
    read_answers,
    read_results,
    score,
    validated_labels,
    write_tasks,
)
from emosynth.taxonomy import default_taxonomy

TAX = default_taxonomy()
CLUMSY = "Look at them, they're so clumsy! I can't stop laughing."


def test_single_label_task():
    (task,) = generate_tasks([make_example({"amusement": 0.9}, orig=CLUMSY)], seed=1).tasks
    assert len(task.options) == 7 and task.options[-1] == ("none",)
    assert all(len(o) == 1 for o in task.options[:6])
    flat = [o[0] for o in task.options[:6]]
    assert flat.count("amusement") == 1
    assert task.options[task.validated_option_index - 1] == ("amusement",)
    assert check_task(task) == []


def test_illustration_pool_shape():
    group = set(TAX.group_of("amusement").members)
    for seed in range(20):
        (task,) = generate_tasks([make_example({"amusement": 0.9}, orig=CLUMSY)], seed=seed).tasks
        shown = {o[0] for o in task.options[:6]}
        assert len(shown) == 6 and "neutral" not in shown
        assert len(shown & group) >= 4
        assert task.utterance == CLUMSY


def test_pure_neutral_task():
    (task,) = generate_tasks([make_example({"neutral": 0.8}, primary="neutral")], seed=0).tasks
    assert task.pure_neutral and task.validated_option_index == 7
    assert all(len(o) == 1 and o[0] != "neutral" for o in task.options[:6])
    assert check_task(task) == []


def test_validated_labels_top_three():
    ex = make_example({"joy": 0.5, "love": 0.9, "pride": 0.7, "relief": 0.4, "neutral": 1.0})
    assert validated_labels(ex) == ["love", "pride", "joy"]


def test_skipped_and_ranked_block():
    exs = [make_example({"joy": 0.9}, ordinal=i) for i in range(11)]
    exs.append(make_example({"joy": 0.1}, ordinal=99))
    out = generate_tasks(exs, seed=0, ranked_fraction=0.2)
    assert len(out.tasks) == 11 and len(out.skipped) == 1
    assert [t.ranked_block for t in out.tasks] == [True] * 3 + [False] * 8


def test_ranked_block_keeps_order():
    ex = make_example({"joy": 0.5, "love": 0.9, "pride": 0.7})
    (task,) = generate_tasks([ex], seed=3, ranked_fraction=1.0).tasks
    assert task.options[task.validated_option_index - 1] == ("love", "pride", "joy")


_labels = st.dictionaries(st.sampled_from(TAX.names), st.integers(3, 10).map(lambda k: k / 10), min_size=1, max_size=5)


@settings(max_examples=200, deadline=None)
@given(st.lists(_labels, min_size=1, max_size=8), st.integers(0, 10**6), st.booleans())
def test_task_invariants(label_sets, seed, with_rewr):
    exs = [make_example(ls, ordinal=i, rewr="r" if with_rewr else None, context="c" if with_rewr else None)
           for i, ls in enumerate(label_sets)]
    a = generate_tasks(exs, seed=seed)
    for t, ex in zip(a.tasks, exs):
        assert check_task(t) == []
        sets = t.option_sets()
        if not t.pure_neutral:
            assert sets.count(frozenset(validated_labels(ex))) == 1
            assert len(sets[0]) == len(validated_labels(ex))
    assert a == generate_tasks(exs, seed=seed)
    assert sum(t.ranked_block for t in a.tasks) == math.ceil(0.2 * len(a.tasks))


def test_task_files(tmp_path):
    exs = [make_example({"fear": 0.9, "nervousness": 0.4}, ordinal=i, context="ctx") for i in range(3)]
    tasks = generate_tasks(exs, seed=0).tasks
    write_tasks(tasks, tmp_path / "tasks.csv", tmp_path / "answers.csv")
    header = (tmp_path / "tasks.csv").read_text().splitlines()[0]
    assert header == "task_id,example_id,utterance,context," + ",".join(f"option_{i}" for i in range(1, 8))
    assert "validated" not in (tmp_path / "tasks.csv").read_text()
    gold = read_answers(tmp_path / "answers.csv")
    assert [g.validated_option for g in gold.values()] == [t.validated_option_index for t in tasks]


# -- kappa -----------------------------------------------------------------


def test_kappa_fixtures():
    assert cohen_kappa([1, 2, 3, 4, 5, 6, 7, 1, 2, 3], [1, 2, 3, 4, 5, 6, 7, 1, 2, 3]) == 1
    assert cohen_kappa([1, 1, 2, 2], [1, 2, 1, 2]) == 0
    assert cohen_kappa([3, 3, 3], [3, 3, 3]) == 1


@settings(max_examples=200)
@given(st.integers(1, 40).flatmap(lambda n: st.tuples(st.lists(st.integers(1, 7), min_size=n, max_size=n),
                                                      st.lists(st.integers(1, 7), min_size=n, max_size=n))))
def test_kappa_matches_sklearn(pair):
    a, b = pair
    k = cohen_kappa(a, b)
    assert -1 <= k <= 1
    if len(set(a) | set(b)) > 1:
        assert float(k) == pytest.approx(cohen_kappa_score(a, b), abs=1e-12)
    if a == b:
        assert k == 1


def test_fleiss_matches_statsmodels():
    rng = random.Random(0)
    items = [[rng.randint(1, 4) for _ in range(3)] for _ in range(30)]
    table, _ = aggregate_raters(np.array(items))
    assert float(fleiss_kappa(items)) == pytest.approx(sm_fleiss(table), abs=1e-12)


# -- scoring ---------------------------------------------------------------


def _gold(n, neutral=(), ranked=0, variant="orig"):
    return {f"t{i}": GoldAnswer(f"t{i}", 7 if i in neutral else 1, i < ranked, i in neutral, variant) for i in range(n)}


def test_all_agree_accuracy_fixture():
    gold = _gold(50)
    results = []
    for i in range(50):
        choice = 1 if i < 43 else 2
        results += [AnnotationResult(f"t{i}", a, choice) for a in ("x", "y", "z")]
    rep = score(results, gold)
    assert rep.accuracy_all_agree == pytest.approx(0.86) and rep.n_all_agree == 50
    assert rep.kappa == 1.0


def test_majority_and_kappa_average():
    gold = _gold(4)
    results = [
        AnnotationResult("t0", "x", 1), AnnotationResult("t0", "y", 1), AnnotationResult("t0", "z", 2),
        AnnotationResult("t1", "x", 2), AnnotationResult("t1", "y", 3), AnnotationResult("t1", "z", 4),
        AnnotationResult("t2", "x", 1), AnnotationResult("t2", "y", 1), AnnotationResult("t2", "z", 1),
        AnnotationResult("t3", "x", 5), AnnotationResult("t3", "y", 5), AnnotationResult("t3", "z", 6),
    ]
    rep = score(results, gold)
    assert (rep.n_all_agree, rep.accuracy_all_agree) == (1, 1.0)
    assert (rep.n_majority, rep.accuracy_majority) == (3, pytest.approx(2 / 3))
    assert set(rep.kappa_pairs) == {"x~y", "x~z", "y~z"}
    assert rep.kappa == pytest.approx(sum(rep.kappa_pairs.values()) / 3)


def test_neutrality_and_exclusion():
    gold = _gold(4, neutral=(0, 1), ranked=2)
    results = [
        AnnotationResult("t0", "x", 7, neutral_flag=True), AnnotationResult("t0", "y", 7),
        AnnotationResult("t1", "x", 7, neutral_flag=True), AnnotationResult("t1", "y", 7, neutral_flag=True),
        AnnotationResult("t2", "x", 1), AnnotationResult("t2", "y", 1),
        AnnotationResult("t3", "x", 1, consulted_context=True), AnnotationResult("t3", "y", 2),
        AnnotationResult("t3", "loner", 1),
    ]
    rep = score(results, gold)
    assert rep.neutral_counts == {"loner": 0, "x": 2, "y": 1}
    assert rep.neutrality_recall == {"loner": None, "x": 1.0, "y": 0.5}
    assert rep.n_scored_tasks == 2
    assert rep.shuffled_accuracy["y"] == 0.5 and rep.ranked_accuracy["y"] is None
    assert rep.context_consultations == {"orig": 1, "rewr": 0}
    alone = score([AnnotationResult("t2", "x", 1), AnnotationResult("t3", "y", 1)], gold)
    assert alone.kappa is None and alone.excluded_annotators == ["x", "y"]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 7), st.integers(1, 7), st.integers(1, 7)), min_size=1, max_size=20),
       st.randoms())
def test_score_order_invariant(choices, rnd):
    gold = _gold(len(choices))
    results = [AnnotationResult(f"t{i}", a, c[k]) for i, c in enumerate(choices) for k, a in enumerate("xyz")]
    shuffled = results[:]
    rnd.shuffle(shuffled)
    a, b = score(results, gold, fleiss=True), score(shuffled, gold, fleiss=True)
    assert a.rows() == b.rows()
    assert a.kappa is None or -1 <= a.kappa <= 1


def test_results_file(tmp_path):
    p = tmp_path / "results.csv"
    p.write_text("task_id,annotator_id,choice,neutral_flag,consulted_context,suggested\n"
                 "t0,x,3,yes,0,awe\nt0,y,7,1,true,\n")
    rows = read_results(p)
    assert rows[0] == AnnotationResult("t0", "x", 3, True, False, "awe")
    assert rows[1].consulted_context
    p.write_text("task_id,annotator_id,choice,neutral_flag,consulted_context,suggested\nt0,x,8,0,0,\n")
    with pytest.raises(InvalidArgument):
        read_results(p)


def test_unknown_task_rejected():
    with pytest.raises(InvalidArgument):
        score([AnnotationResult("zz", "x", 1)], _gold(1))
