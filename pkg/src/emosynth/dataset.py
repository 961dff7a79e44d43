"""Dataset assembly from the run journal, training exports, splits and statistics."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import random
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

from .errors import InvalidArgument
from .pipeline.extractors import filter_expressive
from .pipeline.journal import latest, scan
from .pipeline.models import SoftLabel, SoftLabelSet
from .taxonomy import NEUTRAL, Taxonomy, default_taxonomy

log = logging.getLogger(__name__)

CONTEXT_STAGES = ("context", "cleaning", "rewriting")
SCHEMES = {"80-10-10": (0.8, 0.1, 0.1), "90-5-5": (0.9, 0.05, 0.05)}
SPLITS = ("train", "dev", "test")
DEFAULT_SEP = " [SEP] "


@dataclass
class DatasetExample:
    example_id: str
    plot_id: str
    actor: str
    ordinal: int
    primary_emotion: str
    utterance_orig: str
    utterance_rewr: str | None = None
    context_orig: str | None = None
    context_clean: str | None = None
    labels: dict[str, float] = field(default_factory=dict)
    soft_labels: list[dict] = field(default_factory=list)
    raw_labels: list[str] = field(default_factory=list)
    explanations: dict[str, str] = field(default_factory=dict)
    flags: list[str] = field(default_factory=list)

    @property
    def context_full(self) -> bool:
        return self.context_clean is not None

    @property
    def exportable(self) -> bool:
        return 1 <= len(self.labels) <= 5

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetExample":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def example_id_for(plot_id: str, actor: str, ordinal: int) -> str:
    actor_h = hashlib.sha256(actor.encode("utf-8")).hexdigest()[:8]
    return f"{plot_id}-{actor_h}-{ordinal:02d}"


@dataclass
class AssemblyReport:
    examples: int = 0
    orig_only: int = 0
    context_full: int = 0
    label_less: int = 0
    quarantined: int = 0
    quarantine_reasons: Counter = field(default_factory=Counter)
    bad_lines: list[int] = field(default_factory=list)
    unknown_labels: Counter = field(default_factory=Counter)

    def lines(self) -> list[str]:
        out = [
            f"examples={self.examples}",
            f"orig_only={self.orig_only}",
            f"context_full={self.context_full}",
            f"label_less={self.label_less}",
            f"quarantined={self.quarantined}",
        ]
        out += [f"quarantine.{k}={v}" for k, v in sorted(self.quarantine_reasons.items())]
        if self.bad_lines:
            out.append("bad_lines=" + ",".join(map(str, self.bad_lines)))
        out += [f"unknown_label.{k}={v}" for k, v in self.unknown_labels.most_common()]
        return out


def _build_example(draft: dict, labels_rec: dict, chain: dict, threshold: float, inclusive: bool):
    """Returns (example, None) or (None, quarantine reason)."""
    data = labels_rec["data"]
    soft = SoftLabelSet([SoftLabel(**l) for l in data["labels"]], list(data.get("flags", [])))
    kept = filter_expressive(soft, threshold, inclusive)
    ex = DatasetExample(
        example_id=example_id_for(draft["plot_id"], draft["actor"], draft["ordinal"]),
        plot_id=draft["plot_id"],
        actor=draft["actor"],
        ordinal=draft["ordinal"],
        primary_emotion=draft["primary_emotion"],
        utterance_orig=draft["text"],
        labels=kept.as_mapping(),
        soft_labels=[l.to_dict() for l in soft.labels],
        raw_labels=[l.raw_label for l in soft.labels],
        explanations={l.name: l.explanation for l in soft.labels},
        flags=list(draft.get("flags", [])) + soft.flags + kept.flags,
    )
    if draft["primary_emotion"] not in ex.labels:
        ex.flags.append("primary-filtered")

    statuses = [chain.get(s, {}).get("status") for s in CONTEXT_STAGES]
    if statuses == ["ok", "ok", "ok"]:
        ex.context_orig = chain["context"]["data"]["text"]
        ex.context_clean = chain["cleaning"]["data"]["text"]
        ex.utterance_rewr = chain["rewriting"]["data"]["text"]
        for s in ("cleaning", "rewriting"):
            ex.flags += chain[s]["data"].get("flags", [])
        if not chain["cleaning"]["data"].get("emotive_clauses_removed"):
            ex.flags.append("context-unchanged")
    elif statuses == [None, None, None]:
        pass
    elif statuses[0] == "empty" and statuses[1:] == [None, None]:
        ex.flags.append("context-empty")
    else:
        missing = next(s for s, st in zip(CONTEXT_STAGES, statuses) if st != "ok")
        return None, f"incomplete:{missing}"
    return ex, None


def assemble_records(
    records: Iterable[dict],
    threshold: float = 0.3,
    inclusive: bool = True,
) -> tuple[list[DatasetExample], list[dict], AssemblyReport]:
    report = AssemblyReport()
    best = latest(list(records))
    by_unit: dict[tuple, dict[str, dict]] = defaultdict(dict)
    for (plot_id, actor, ordinal, stage), rec in best.items():
        if ordinal is not None:
            by_unit[(plot_id, actor, ordinal)][stage] = rec

    examples: list[DatasetExample] = []
    quarantine: list[dict] = []
    utter = sorted(
        (k, r) for k, r in best.items() if k[3] == "utterances" and r.get("status") == "ok"
    )
    for (plot_id, actor, _, _), rec in utter:
        for draft in rec["data"]["drafts"]:
            chain = by_unit.get((plot_id, actor, draft["ordinal"]), {})
            reason = None
            if draft.get("primary_emotion") is None:
                flags = draft.get("flags") or ["unknown-label"]
                reason = flags[0]
                if "unknown-label" in flags:
                    report.unknown_labels[draft["raw_label"].strip().lower()] += 1
            else:
                lab = chain.get("soft_labels")
                if lab is None or lab.get("status") == "error":
                    reason = "incomplete:soft_labels"
                elif lab["status"] == "empty":
                    reason = "empty:soft_labels"
            ex = None
            if reason is None:
                ex, reason = _build_example(draft, chain["soft_labels"], chain, threshold, inclusive)
            if ex is None:
                quarantine.append({"plot_id": plot_id, "actor": actor, "ordinal": draft["ordinal"],
                                   "reason": reason, "draft": draft})
                report.quarantined += 1
                report.quarantine_reasons[reason] += 1
                continue
            for f in ex.flags:
                if f.startswith("unknown-label:"):
                    report.unknown_labels[f.split(":", 1)[1].strip().lower()] += 1
            examples.append(ex)
            report.examples += 1
            report.context_full += ex.context_full
            report.orig_only += not ex.context_full
            report.label_less += not ex.labels
    return examples, quarantine, report


def assemble(
    journal_path: Path | str,
    out_path: Path | str,
    quarantine_path: Path | str | None = None,
    threshold: float = 0.3,
    inclusive: bool = True,
) -> AssemblyReport:
    s = scan(journal_path)
    examples, quarantine, report = assemble_records(s.records, threshold, inclusive)
    report.bad_lines = s.bad_lines
    for n in s.bad_lines:
        log.warning("journal line %d is corrupt; skipped", n)
    write_dataset(examples, out_path)
    qpath = Path(quarantine_path) if quarantine_path else Path(out_path).with_suffix(".quarantine.jsonl")
    with open(qpath, "w", encoding="utf-8") as fh:
        for q in quarantine:
            fh.write(json.dumps(q, ensure_ascii=False) + "\n")
    return report


def write_dataset(examples: Iterable[DatasetExample], path: Path | str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(ex.to_json() + "\n")


def load_dataset(path: Path | str) -> list[DatasetExample]:
    with open(path, encoding="utf-8") as fh:
        return [DatasetExample.from_dict(json.loads(l)) for l in fh if l.strip()]


def refilter(examples: Iterable[DatasetExample], threshold: float, inclusive: bool = True) -> list[DatasetExample]:
    """Recompute filtered labels from the stored unfiltered ones."""
    out = []
    for ex in examples:
        soft = SoftLabelSet([SoftLabel(**l) for l in ex.soft_labels])
        kept = filter_expressive(soft, threshold, inclusive).as_mapping()
        flags = [f for f in ex.flags if f != "label-less"] + ([] if kept else ["label-less"])
        out.append(DatasetExample.from_dict({**asdict(ex), "labels": kept, "flags": flags}))
    return out


# -- exports ---------------------------------------------------------------

VARIANTS = ("orig", "rewr", "corig", "crewr")


def export_rows(examples: Iterable[DatasetExample], variant: str = "orig", sep: str = DEFAULT_SEP) -> list[dict]:
    """Flattened ``{text, labels}`` rows; label-less rows are never exported."""
    if variant not in VARIANTS:
        raise InvalidArgument(f"variant must be one of {VARIANTS}")
    rows = []
    for ex in examples:
        if not ex.exportable:
            continue
        if variant == "orig":
            text = ex.utterance_orig
        elif not ex.context_full:
            continue
        elif variant == "rewr":
            text = ex.utterance_rewr
        elif variant == "corig":
            text = ex.context_clean + sep + ex.utterance_orig
        else:
            text = ex.context_clean + sep + ex.utterance_rewr
        rows.append({"id": ex.example_id, "text": text, "labels": sorted(ex.labels)})
    return rows


# -- splits ----------------------------------------------------------------


@dataclass
class SplitManifest:
    scheme: str
    seed: int
    assignment: dict[str, str]

    def sizes(self) -> dict[str, int]:
        c = Counter(self.assignment.values())
        return {s: c.get(s, 0) for s in SPLITS}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["example_id", "scheme", "split"])
        for eid, sp in self.assignment.items():
            w.writerow([eid, self.scheme, sp])
        return buf.getvalue()

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read(cls, path: Path | str, seed: int = 0) -> "SplitManifest":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.DictReader(fh))
        scheme = rows[0]["scheme"] if rows else "80-10-10"
        return cls(scheme, seed, {r["example_id"]: r["split"] for r in rows})


def target_sizes(n: int, proportions: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of ``n`` items."""
    exact = [Fraction(str(p)) * n for p in proportions]
    sizes = [int(e) for e in exact]
    order = sorted(range(len(exact)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def _allocate(groups: list[tuple[str, list[str]]], targets: list[int], assignment: dict[str, str]) -> None:
    current = [0, 0, 0]
    for _, members in groups:
        k = max(range(3), key=lambda i: (targets[i] - current[i], -i))
        current[k] += len(members)
        for eid in members:
            assignment[eid] = SPLITS[k]


def split(
    examples: Sequence[DatasetExample],
    scheme: str = "80-10-10",
    seed: int = 0,
    grouped: bool = True,
    stratify: bool = False,
) -> SplitManifest:
    """Seeded train/dev/test assignment.

    With ``grouped`` every (plot_id, actor) pair lands in a single split.
    Groups are shuffled, ordered largest first and greedily given to the
    split with the largest remaining deficit, which is exact for singleton
    groups. ``stratify`` runs the same allocation per primary emotion, so the
    overall sizes may drift by a few examples.
    """
    if scheme not in SCHEMES:
        raise InvalidArgument(f"unknown split scheme {scheme!r}; expected one of {sorted(SCHEMES)}")
    if len(examples) < 10:
        raise InvalidArgument("need at least 10 examples to split")
    gmap: dict[tuple, list[DatasetExample]] = defaultdict(list)
    for ex in examples:
        key = (ex.plot_id, ex.actor) if grouped else (ex.example_id,)
        gmap[key].append(ex)
    strata: dict[str, list[tuple]] = defaultdict(list)
    for key, members in gmap.items():
        strata[members[0].primary_emotion if stratify else ""].append(key)

    rng = random.Random(seed)
    raw: dict[str, str] = {}
    for stratum in sorted(strata):
        keys = sorted(strata[stratum])
        rng.shuffle(keys)
        keys.sort(key=lambda k: -len(gmap[k]))
        groups = [("|".join(map(str, k)), [e.example_id for e in gmap[k]]) for k in keys]
        n = sum(len(m) for _, m in groups)
        _allocate(groups, target_sizes(n, SCHEMES[scheme]), raw)
    assignment = {ex.example_id: raw[ex.example_id] for ex in examples}
    return SplitManifest(scheme, seed, assignment)


# -- statistics ------------------------------------------------------------


@dataclass
class DistributionReport:
    primary_hist: dict[str, int]
    soft_hist: dict[str, int]
    polarity_balance: dict[str, float]
    neutral_share_pre: float
    neutral_share_post: float
    neutral_label_share: float
    labels_per_example_mean: float
    labels_per_example_std: float
    examples: int

    def rows(self) -> list[tuple[str, str, float]]:
        out: list[tuple[str, str, float]] = [("examples", "", self.examples)]
        out += [("primary", k, v) for k, v in self.primary_hist.items()]
        out += [("soft", k, v) for k, v in self.soft_hist.items()]
        out += [("polarity", k, v) for k, v in self.polarity_balance.items()]
        out += [
            ("neutral_share", "pre", self.neutral_share_pre),
            ("neutral_share", "post", self.neutral_share_post),
            ("neutral_label_share", "", self.neutral_label_share),
            ("labels_per_example", "mean", self.labels_per_example_mean),
            ("labels_per_example", "std", self.labels_per_example_std),
        ]
        return out

    def summary(self) -> str:
        def hist(h: dict[str, int]) -> str:
            items = sorted(((k, v) for k, v in h.items() if v), key=lambda kv: (-kv[1], kv[0]))
            return "{" + ", ".join(f"{k}:{v}" for k, v in items) + "}"

        pol = "|".join(f"{self.polarity_balance[p]:.0f}" for p in ("positive", "negative", "ambiguous"))
        return "\n".join([
            f"examples {self.examples}",
            f"primary hist {hist(self.primary_hist)}",
            f"soft hist {hist(self.soft_hist)}",
            f"polarity positive|negative|ambiguous {pol}",
            f"neutral share pre {self.neutral_share_pre:.3f} post {self.neutral_share_post:.3f}",
            f"labels per example mean {self.labels_per_example_mean:.2f} std {self.labels_per_example_std:.2f}",
        ])


def stats(examples: Iterable[DatasetExample], taxonomy: Taxonomy | None = None) -> DistributionReport:
    """Distribution statistics; all sums are integer/rational so row order never matters."""
    tax = taxonomy or default_taxonomy()
    primary = Counter()
    soft = Counter()
    pre = post = n = 0
    lengths: list[int] = []
    for ex in examples:
        n += 1
        primary[ex.primary_emotion] += 1
        soft.update(ex.labels.keys())
        pre += any(l["name"] == NEUTRAL for l in ex.soft_labels)
        post += NEUTRAL in ex.labels
        if ex.labels:
            lengths.append(len(ex.labels))
    polar = Counter()
    for name, count in soft.items():
        if name != NEUTRAL:
            polar[tax.polarity(name)] += count
    total_polar = sum(polar.values())
    balance = {
        p: (100.0 * polar[p] / total_polar if total_polar else 0.0) for p in ("positive", "negative", "ambiguous")
    }
    m = len(lengths)
    if m:
        mean = Fraction(sum(lengths), m)
        var = Fraction(sum(x * x for x in lengths), m) - mean * mean
        mean_f, std_f = float(mean), float(var) ** 0.5
    else:
        mean_f = std_f = 0.0
    total_soft = sum(soft.values())
    return DistributionReport(
        primary_hist={c: primary.get(c, 0) for c in tax.names},
        soft_hist={c: soft.get(c, 0) for c in tax.names},
        polarity_balance=balance,
        neutral_share_pre=pre / n if n else 0.0,
        neutral_share_post=post / n if n else 0.0,
        neutral_label_share=soft.get(NEUTRAL, 0) / total_soft if total_soft else 0.0,
        labels_per_example_mean=mean_f,
        labels_per_example_std=std_f,
        examples=n,
    )
