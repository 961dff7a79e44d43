import json
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from conftest import make_example
from emosynth.dataset import (
    DatasetExample,
    SplitManifest,
    assemble,
    assemble_records,
    export_rows,
    load_dataset,
    refilter,
    split,
    stats,
    target_sizes,
)
from emosynth.errors import InvalidArgument
from emosynth.gateway import Gateway, MockBackend
from emosynth.pipeline import Journal, PipelineRunner, RunOptions, Stages, fixtures
from emosynth.taxonomy import default_taxonomy

TAX = default_taxonomy()
EMOS = TAX.emotional_names


def _ok(stage, ordinal, data, actor="A"):
    return {"plot_id": "p", "actor": actor, "ordinal": ordinal, "stage": stage, "status": "ok", "data": data}


def _chain_records(n_drafts, broken=(), actor="A"):
    drafts = [
        {"plot_id": "p", "actor": actor, "ordinal": i, "text": f"line {i}", "primary_emotion": EMOS[i],
         "raw_label": EMOS[i], "flags": []}
        for i in range(1, n_drafts + 1)
    ]
    recs = [_ok("utterances", None, {"drafts": drafts}, actor)]
    for d in drafts:
        i = d["ordinal"]
        recs.append(_ok("soft_labels", i, {"labels": [
            {"name": d["primary_emotion"], "expressiveness": 0.9, "explanation": "e", "raw_label": d["primary_emotion"]},
            {"name": "neutral", "expressiveness": 0.1, "explanation": "", "raw_label": "neutral"},
        ], "flags": []}, actor))
        recs.append(_ok("context", i, {"text": f"ctx {i}"}, actor))
        recs.append(_ok("cleaning", i, {"text": f"clean {i}", "emotive_clauses_removed": True, "flags": []}, actor))
        if i not in broken:
            recs.append(_ok("rewriting", i, {"text": f"rewr {i}", "flags": []}, actor))
    return recs


def test_assemble_counts_complete_and_incomplete():
    examples, quarantine, report = assemble_records(_chain_records(12, broken=(3, 7)))
    assert report.examples == 10 and len(examples) == 10
    assert report.quarantined == 2 and report.quarantine_reasons == {"incomplete:rewriting": 2}
    assert {q["ordinal"] for q in quarantine} == {3, 7}
    assert all(ex.context_full for ex in examples)
    assert all(ex.labels == {ex.primary_emotion: 0.9} for ex in examples)
    assert all(len(ex.soft_labels) == 2 for ex in examples)


def test_assemble_orig_only_and_empty_context():
    recs = [r for r in _chain_records(3) if r["stage"] in ("utterances", "soft_labels")]
    recs.append({**_ok("context", 2, None), "status": "empty", "raw": ""})
    examples, _, report = assemble_records(recs)
    assert report.orig_only == 3 and report.context_full == 0
    assert "context-empty" in examples[1].flags
    assert examples[0].utterance_rewr is None and examples[0].context_clean is None


def test_assemble_errors_then_retry_succeeds():
    recs = _chain_records(1)
    err = {**recs[-1], "status": "error", "data": None}
    examples, _, _ = assemble_records(recs[:-1] + [err])
    assert not examples
    examples, _, _ = assemble_records(recs[:-1] + [err, recs[-1]])
    assert len(examples) == 1


def test_assemble_file(tmp_path):
    j = tmp_path / "journal.jsonl"
    lines = [json.dumps(r) for r in _chain_records(4)]
    lines.insert(2, "{broken")
    j.write_text("\n".join(lines) + "\n")
    report = assemble(j, tmp_path / "d.jsonl")
    assert report.bad_lines == [3]
    assert report.examples == 4
    assert (tmp_path / "d.quarantine.jsonl").exists()
    assert [e.ordinal for e in load_dataset(tmp_path / "d.jsonl")] == [1, 2, 3, 4]


def test_mock_run_thirty_examples_reproducible(tmp_path):
    gw = Gateway(MockBackend(fixtures.bundled_dir()), retries=0)
    with Journal(tmp_path / "j.jsonl") as j:
        PipelineRunner(Stages(gw), j, RunOptions(max_actors=3)).run([fixtures.plot_record()])
    report = assemble(tmp_path / "j.jsonl", tmp_path / "a.jsonl")
    assert report.examples == 30 and report.context_full == 30
    assemble(tmp_path / "j.jsonl", tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    for ex in load_dataset(tmp_path / "a.jsonl"):
        assert ex.context_clean is None or ex.context_orig is not None
        assert ex.utterance_rewr is None or ex.context_clean is not None
        assert ex.soft_labels[0]["name"] == ex.primary_emotion


def test_unknown_primary_quarantined():
    recs = _chain_records(2)
    recs[0]["data"]["drafts"][1].update(primary_emotion=None, raw_label="Serenity", flags=["unknown-label"])
    examples, quarantine, report = assemble_records(recs)
    assert len(examples) == 1 and quarantine[0]["reason"] == "unknown-label"
    assert report.unknown_labels == {"serenity": 1}


def test_refilter_strict():
    ex = make_example({"joy": 0.3, "pride": 0.6})
    (strict,) = refilter([ex], 0.3, inclusive=False)
    assert strict.labels == {"pride": 0.6}
    (none,) = refilter([ex], 0.9)
    assert none.labels == {} and "label-less" in none.flags and not none.exportable


def test_export_variants():
    full = make_example({"joy": 0.9}, orig="Yay!", rewr="Nice.", context="Ann won.")
    bare = make_example({"fear": 0.5}, ordinal=2)
    assert [r["text"] for r in export_rows([full, bare], "orig")] == ["Yay!", "an utterance"]
    assert [r["text"] for r in export_rows([full, bare], "crewr", sep=" || ")] == ["Ann won. || Nice."]
    assert export_rows([full], "corig")[0] == {"id": full.example_id, "text": "Ann won. [SEP] Yay!", "labels": ["joy"]}
    with pytest.raises(InvalidArgument):
        export_rows([full], "mixed")


def test_example_json_roundtrip():
    ex = make_example({"joy": 0.9, "love": 0.4}, rewr="r", context="c")
    assert DatasetExample.from_dict(json.loads(ex.to_json())) == ex


# -- splits ----------------------------------------------------------------


def _singletons(n):
    return [make_example({"joy": 0.9}, plot_id=f"p{i}") for i in range(n)]


@pytest.mark.parametrize("scheme, sizes", [("80-10-10", (80, 10, 10)), ("90-5-5", (90, 5, 5))])
def test_split_sizes(scheme, sizes):
    m = split(_singletons(100), scheme, seed=1)
    assert tuple(m.sizes().values()) == sizes


def test_split_deterministic_and_roundtrip(tmp_path):
    ds = _singletons(40)
    a, b = split(ds, seed=5), split(ds, seed=5)
    assert a.to_csv() == b.to_csv()
    assert a.to_csv().splitlines()[0] == "example_id,scheme,split"
    a.write(tmp_path / "m.csv")
    assert SplitManifest.read(tmp_path / "m.csv", seed=5) == a


def test_split_errors():
    with pytest.raises(InvalidArgument):
        split(_singletons(9))
    with pytest.raises(InvalidArgument):
        split(_singletons(20), "70-15-15")


@st.composite
def _grouped(draw):
    sizes = draw(st.lists(st.integers(1, 10), min_size=3, max_size=40))
    out = []
    for g, size in enumerate(sizes):
        for k in range(size):
            out.append(make_example({EMOS[k]: 0.8}, plot_id=f"p{g % 5}", actor=f"a{g}", ordinal=k + 1))
    return out


@settings(max_examples=60, deadline=None)
@given(_grouped(), st.sampled_from(["80-10-10", "90-5-5"]), st.integers(0, 1000), st.booleans())
def test_split_grouping_property(ds, scheme, seed, stratify):
    if len(ds) < 10:
        return
    m = split(ds, scheme, seed, stratify=stratify)
    assert set(m.assignment) == {e.example_id for e in ds}
    where = {}
    for e in ds:
        where.setdefault((e.plot_id, e.actor), set()).add(m.assignment[e.example_id])
    assert all(len(s) == 1 for s in where.values())


@given(st.integers(0, 5000), st.sampled_from([(0.8, 0.1, 0.1), (0.9, 0.05, 0.05)]))
def test_target_sizes_within_one(n, props):
    sizes = target_sizes(n, props)
    assert sum(sizes) == n
    assert all(abs(s - p * n) < 1 for s, p in zip(sizes, props))


def test_singleton_split_within_one():
    m = split(_singletons(333), "90-5-5", 2)
    assert [abs(v - p * 333) <= 1 for v, p in zip(m.sizes().values(), (0.9, 0.05, 0.05))] == [True] * 3


# -- stats -----------------------------------------------------------------


def test_stats_toy_hist():
    ds = [make_example({"joy": 0.9}), make_example({"joy": 0.5}, ordinal=2), make_example({"fear": 0.7}, ordinal=3)]
    rep = stats(ds)
    assert {k: v for k, v in rep.primary_hist.items() if v} == {"joy": 2, "fear": 1}
    assert "primary hist {joy:2, fear:1}" in rep.summary()
    assert len(rep.primary_hist) == 28


def test_stats_values():
    ds = [
        make_example({"joy": 0.9, "fear": 0.5, "neutral": 0.1}),
        make_example({"anger": 0.9, "curiosity": 0.4, "neutral": 0.6}, ordinal=2),
    ]
    rep = stats(ds)
    assert rep.neutral_share_pre == 1.0 and rep.neutral_share_post == 0.5
    assert rep.polarity_balance == {"positive": 25.0, "negative": 50.0, "ambiguous": 25.0}
    assert rep.labels_per_example_mean == 2.5 and rep.labels_per_example_std == 0.5


_label_sets = st.dictionaries(st.sampled_from(TAX.names), st.integers(0, 10).map(lambda k: k / 10), min_size=1, max_size=5)


@settings(max_examples=50, deadline=None)
@given(st.lists(_label_sets, min_size=1, max_size=30), st.randoms())
def test_stats_permutation_invariant(label_sets, rnd):
    ds = [make_example(ls, ordinal=i) for i, ls in enumerate(label_sets)]
    shuffled = ds[:]
    rnd.shuffle(shuffled)
    a, b = stats(ds), stats(shuffled)
    assert a == b
    if sum(a.polarity_balance.values()):
        assert abs(sum(a.polarity_balance.values()) - 100) < 1e-9
    assert Counter(a.soft_hist) == Counter(b.soft_hist)
