"""Multiple-choice annotation tasks built from dataset labels, and scoring of returned annotations.

Task file (``tasks.csv``), one row per task::

    task_id,example_id,utterance,context,option_1,...,option_7

Options 1-6 are emotion sets joined with `` & ``; option 7 is always ``none``.
The answer key (``answers.csv``) holds the withheld columns::

    task_id,example_id,validated_option,ranked_block,pure_neutral,variant

Results (``results.csv``)::

    task_id,annotator_id,choice,neutral_flag,consulted_context,suggested

``choice`` is 1-7; the two flags accept 1/0, true/false or yes/no.
"""

from __future__ import annotations

import csv
import io
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

from .dataset import DatasetExample
from .errors import InvalidArgument
from .taxonomy import NEUTRAL, Taxonomy, default_taxonomy

NONE_OPTION = "none"
N_OPTIONS = 7
OPTION_JOIN = " & "
POOL_SIZE = 6
MAX_VALIDATED = 3
MAX_LABELS = 5


@dataclass
class AnnotationTask:
    task_id: str
    example_id: str
    utterance: str
    variant: str
    context: str | None
    options: list[tuple[str, ...]]
    validated_option_index: int  # 1-based; 7 means `none`
    ranked_block: bool
    pure_neutral: bool
    show_context: bool = False
    neutral_question: bool = True

    def option_sets(self) -> list[frozenset[str]]:
        return [frozenset(o) for o in self.options[: N_OPTIONS - 1]]


@dataclass
class GenerationResult:
    tasks: list[AnnotationTask]
    skipped: list[str] = field(default_factory=list)


def validated_labels(ex: DatasetExample) -> list[str]:
    """At most three non-neutral labels with the highest expressiveness, strongest first."""
    ranked = sorted(((n, v) for n, v in ex.labels.items() if n != NEUTRAL), key=lambda kv: -kv[1])
    return [n for n, _ in ranked[:MAX_VALIDATED]]


def _emotion_pool(validated: list[str], rng: random.Random, tax: Taxonomy) -> list[str]:
    pool = list(validated)
    same_group = sorted({m for v in validated for m in tax.group_of(v).members} - set(pool))
    extra = min(3, MAX_LABELS - len(pool), len(same_group))
    pool += rng.sample(same_group, extra)
    rest = sorted(set(tax.emotional_names) - set(pool))
    pool += rng.sample(rest, POOL_SIZE - len(pool))
    return pool


def _shuffled(items: Sequence[str], rng: random.Random) -> tuple[str, ...]:
    items = list(items)
    rng.shuffle(items)
    return tuple(items)


def build_task(
    ex: DatasetExample, index: int, ranked: bool, seed: int, tax: Taxonomy, show_context: bool = False
) -> AnnotationTask:
    rng = random.Random(f"{seed}:{ex.example_id}")
    variant = "orig"
    if ex.utterance_rewr is not None and rng.random() < 0.5:
        variant = "rewr"
    utterance = ex.utterance_rewr if variant == "rewr" else ex.utterance_orig
    validated = validated_labels(ex)
    pure_neutral = not validated
    if pure_neutral:
        options = [(e,) for e in rng.sample(sorted(tax.emotional_names), POOL_SIZE)]
        gold = N_OPTIONS
    else:
        pool = _emotion_pool(validated, rng, tax)
        k = len(validated)
        target = frozenset(validated)
        candidates = [c for c in combinations(sorted(pool), k) if frozenset(c) != target]
        distractors = [_shuffled(c, rng) for c in rng.sample(candidates, POOL_SIZE - 1)]
        answer = tuple(validated) if ranked else _shuffled(validated, rng)
        slots = distractors + [answer]
        order = list(range(POOL_SIZE))
        rng.shuffle(order)
        options = [slots[i] for i in order]
        gold = order.index(POOL_SIZE - 1) + 1
    return AnnotationTask(
        task_id=f"t{index + 1:04d}",
        example_id=ex.example_id,
        utterance=utterance,
        variant=variant,
        context=ex.context_clean,
        options=options + [(NONE_OPTION,)],
        validated_option_index=gold,
        ranked_block=ranked,
        pure_neutral=pure_neutral,
        show_context=show_context,
    )


def generate_tasks(
    examples: Iterable[DatasetExample],
    taxonomy: Taxonomy | None = None,
    seed: int = 0,
    ranked_fraction: float = 0.2,
    show_context: bool = False,
) -> GenerationResult:
    """One task per labelled example; the first ceil(fraction * N) tasks form the ranked block."""
    if not 0.0 <= ranked_fraction <= 1.0:
        raise InvalidArgument("ranked_fraction must lie in [0, 1]")
    tax = taxonomy or default_taxonomy()
    usable, skipped = [], []
    for ex in examples:
        (usable if ex.labels else skipped).append(ex)
    n_ranked = math.ceil(Fraction(repr(float(ranked_fraction))) * len(usable))
    tasks = [build_task(ex, i, i < n_ranked, seed, tax, show_context) for i, ex in enumerate(usable)]
    return GenerationResult(tasks, [ex.example_id for ex in skipped])


def check_task(task: AnnotationTask) -> list[str]:
    """Violated task invariants, empty when the task is well formed."""
    problems = []
    if len(task.options) != N_OPTIONS or task.options[-1] != (NONE_OPTION,):
        problems.append("expected 6 emotion options followed by none")
    sets = task.option_sets()
    sizes = {len(s) for s in sets}
    if len(sizes) != 1 or not 1 <= next(iter(sizes), 0) <= MAX_VALIDATED:
        problems.append("options differ in size or size outside 1-3")
    if len(set(sets)) != len(sets):
        problems.append("duplicate option sets")
    if any(NEUTRAL in s or NONE_OPTION in s for s in sets):
        problems.append("neutral or none inside an emotion option")
    if any(len(o) != len(set(o)) for o in task.options):
        problems.append("repeated emotion inside an option")
    if not 1 <= task.validated_option_index <= N_OPTIONS:
        problems.append("validated index out of range")
    if task.pure_neutral != (task.validated_option_index == N_OPTIONS):
        problems.append("pure-neutral examples must be validated by none")
    return problems


# -- files -----------------------------------------------------------------


def tasks_csv(tasks: Sequence[AnnotationTask]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task_id", "example_id", "utterance", "context"] + [f"option_{i}" for i in range(1, N_OPTIONS + 1)])
    for t in tasks:
        context = t.context if (t.show_context and t.context) else ""
        w.writerow([t.task_id, t.example_id, t.utterance, context] + [OPTION_JOIN.join(o) for o in t.options])
    return buf.getvalue()


def answers_csv(tasks: Sequence[AnnotationTask]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["task_id", "example_id", "validated_option", "ranked_block", "pure_neutral", "variant"])
    for t in tasks:
        w.writerow([t.task_id, t.example_id, t.validated_option_index, int(t.ranked_block),
                    int(t.pure_neutral), t.variant])
    return buf.getvalue()


def write_tasks(tasks: Sequence[AnnotationTask], tasks_path: Path | str, answers_path: Path | str) -> None:
    Path(tasks_path).write_text(tasks_csv(tasks), encoding="utf-8")
    Path(answers_path).write_text(answers_csv(tasks), encoding="utf-8")


def _flag(value: str) -> bool:
    v = value.strip().lower()
    if v in ("1", "true", "yes", "y"):
        return True
    if v in ("0", "false", "no", "n", ""):
        return False
    raise InvalidArgument(f"not a boolean flag: {value!r}")


@dataclass(frozen=True)
class GoldAnswer:
    task_id: str
    validated_option: int
    ranked_block: bool
    pure_neutral: bool
    variant: str


@dataclass(frozen=True)
class AnnotationResult:
    task_id: str
    annotator_id: str
    chosen_option: int
    neutral_flag: bool = False
    consulted_context: bool = False
    suggested: str = ""

    def __post_init__(self) -> None:
        if not 1 <= self.chosen_option <= N_OPTIONS:
            raise InvalidArgument(f"task {self.task_id}: choice must be 1-{N_OPTIONS}")


def read_answers(path: Path | str) -> dict[str, GoldAnswer]:
    with open(path, encoding="utf-8", newline="") as fh:
        return {
            r["task_id"]: GoldAnswer(r["task_id"], int(r["validated_option"]), _flag(r["ranked_block"]),
                                     _flag(r["pure_neutral"]), r.get("variant", "orig"))
            for r in csv.DictReader(fh)
        }


def read_results(path: Path | str) -> list[AnnotationResult]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for r in csv.DictReader(fh):
            try:
                choice = int(r["choice"])
            except (KeyError, ValueError):
                raise InvalidArgument(f"bad choice in results row {r}") from None
            out.append(AnnotationResult(r["task_id"], r["annotator_id"], choice,
                                        _flag(r.get("neutral_flag", "0")),
                                        _flag(r.get("consulted_context", "0")),
                                        r.get("suggested", "") or ""))
    return out


# -- agreement -------------------------------------------------------------


def cohen_kappa(a: Sequence[int], b: Sequence[int]) -> Fraction:
    """Exact Cohen's kappa; identical constant raters count as perfect agreement."""
    if len(a) != len(b) or not a:
        raise InvalidArgument("kappa needs two equally long non-empty rating lists")
    n = len(a)
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    ca, cb = Counter(a), Counter(b)
    p_e = sum((Fraction(ca[k], n) * Fraction(cb[k], n) for k in ca), Fraction(0))
    if p_e == 1:
        return Fraction(1)
    return (p_o - p_e) / (1 - p_e)


def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> Fraction:
    """Fleiss' kappa over items that all carry the same number of ratings."""
    if not ratings:
        raise InvalidArgument("no rated items")
    n = len(ratings[0])
    if n < 2 or any(len(r) != n for r in ratings):
        raise InvalidArgument("every item needs the same number (>= 2) of ratings")
    N = len(ratings)
    totals: Counter = Counter()
    p_bar = Fraction(0)
    for item in ratings:
        c = Counter(item)
        totals.update(c)
        p_bar += Fraction(sum(v * (v - 1) for v in c.values()), n * (n - 1))
    p_bar /= N
    p_e = sum((Fraction(v, N * n) ** 2 for v in totals.values()), Fraction(0))
    if p_e == 1:
        return Fraction(1)
    return (p_bar - p_e) / (1 - p_e)


@dataclass
class HumanEvalReport:
    kappa: float | None
    kappa_pairs: dict[str, float]
    excluded_annotators: list[str]
    fleiss: float | None
    accuracy_all_agree: float | None
    n_all_agree: int
    accuracy_majority: float | None
    n_majority: int
    n_scored_tasks: int
    neutral_counts: dict[str, int]
    neutrality_recall: dict[str, float | None]
    ranked_accuracy: dict[str, float | None]
    shuffled_accuracy: dict[str, float | None]
    total_accuracy: dict[str, float | None]
    context_consultations: dict[str, int]
    rewr_consultation_share: float | None

    def rows(self) -> list[tuple[str, str, object]]:
        out: list[tuple[str, str, object]] = [
            ("kappa", "mean", self.kappa),
            *(("kappa", k, v) for k, v in self.kappa_pairs.items()),
            ("fleiss", "", self.fleiss),
            ("accuracy", "all_agree", self.accuracy_all_agree),
            ("accuracy", "n_all_agree", self.n_all_agree),
            ("accuracy", "majority", self.accuracy_majority),
            ("accuracy", "n_majority", self.n_majority),
            ("tasks", "scored", self.n_scored_tasks),
        ]
        for a in sorted(self.neutral_counts):
            out += [
                ("neutral_count", a, self.neutral_counts[a]),
                ("neutrality_recall", a, self.neutrality_recall[a]),
                ("ranked_accuracy", a, self.ranked_accuracy[a]),
                ("shuffled_accuracy", a, self.shuffled_accuracy[a]),
                ("total_accuracy", a, self.total_accuracy[a]),
            ]
        out += [("context", k, v) for k, v in sorted(self.context_consultations.items())]
        out.append(("context", "rewr_share", self.rewr_consultation_share))
        return out

    def format(self, fmt: str = "table") -> str:
        def val(v):
            if v is None:
                return "-"
            return f"{v:.4f}" if isinstance(v, float) else str(v)

        if fmt == "lines":
            return "\n".join(f"{m}{'.' + k if k else ''}={val(v)}" for m, k, v in self.rows())
        if fmt != "table":
            raise InvalidArgument("format must be table or lines")
        return "\n".join(f"{m:<20} {k:<12} {val(v)}" for m, k, v in self.rows())


def _acc(hits: int, n: int) -> float | None:
    return hits / n if n else None


def score(
    results: Sequence[AnnotationResult],
    gold: dict[str, GoldAnswer],
    exclude_neutral: bool = True,
    fleiss: bool = False,
) -> HumanEvalReport:
    """Agreement and accuracy over annotated tasks.

    With ``exclude_neutral`` the agreement and accuracy figures skip tasks
    that any annotator flagged as neutral. For each annotator pair, Cohen's
    kappa uses the tasks both answered. The report averages kappa over the
    pairs. An annotator who shares no task with anyone is excluded.
    """
    by_task: dict[str, dict[str, AnnotationResult]] = defaultdict(dict)
    for r in results:
        if r.task_id not in gold:
            raise InvalidArgument(f"result for unknown task {r.task_id!r}")
        by_task[r.task_id][r.annotator_id] = r
    annotators = sorted({r.annotator_id for r in results})
    neutral_tasks = {t for t, rs in by_task.items() if any(r.neutral_flag for r in rs.values())}
    scored = {t: rs for t, rs in by_task.items() if not (exclude_neutral and t in neutral_tasks)}

    pairs: dict[str, float] = {}
    fr: list[Fraction] = []
    paired: set[str] = set()
    for a, b in combinations(annotators, 2):
        common = sorted(t for t, rs in scored.items() if a in rs and b in rs)
        if not common:
            continue
        k = cohen_kappa([scored[t][a].chosen_option for t in common], [scored[t][b].chosen_option for t in common])
        pairs[f"{a}~{b}"] = float(k)
        fr.append(k)
        paired.update((a, b))
    kappa = float(sum(fr, Fraction(0)) / len(fr)) if fr else None

    fleiss_value = None
    if fleiss and scored:
        width = max(len(rs) for rs in scored.values())
        items = [[r.chosen_option for r in rs.values()] for rs in scored.values() if len(rs) == width]
        if width >= 2 and items:
            fleiss_value = float(fleiss_kappa(items))

    all_hits = all_n = maj_hits = maj_n = 0
    for t, rs in scored.items():
        if len(rs) < 2:
            continue
        counts = Counter(r.chosen_option for r in rs.values())
        top, top_n = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))
        if top_n == len(rs):
            all_n += 1
            all_hits += top == gold[t].validated_option
        if top_n >= 2:
            maj_n += 1
            maj_hits += top == gold[t].validated_option

    gold_neutral = {t for t, g in gold.items() if g.pure_neutral}
    neutral_counts, recall = {}, {}
    ranked, shuffled, total = {}, {}, {}
    for a in annotators:
        mine = {t: rs[a] for t, rs in by_task.items() if a in rs}
        neutral_counts[a] = sum(r.neutral_flag for r in mine.values())
        answered_neutral = [t for t in mine if t in gold_neutral]
        recall[a] = _acc(sum(mine[t].neutral_flag for t in answered_neutral), len(answered_neutral))
        own = [t for t in mine if t in scored]
        hit = {t: mine[t].chosen_option == gold[t].validated_option for t in own}
        r_block = [t for t in own if gold[t].ranked_block]
        s_block = [t for t in own if not gold[t].ranked_block]
        ranked[a] = _acc(sum(hit[t] for t in r_block), len(r_block))
        shuffled[a] = _acc(sum(hit[t] for t in s_block), len(s_block))
        total[a] = _acc(sum(hit.values()), len(own))

    consult = Counter(gold[r.task_id].variant for r in results if r.consulted_context)
    n_consult = sum(consult.values())
    return HumanEvalReport(
        kappa=kappa,
        kappa_pairs=pairs,
        excluded_annotators=[a for a in annotators if a not in paired],
        fleiss=fleiss_value,
        accuracy_all_agree=_acc(all_hits, all_n),
        n_all_agree=all_n,
        accuracy_majority=_acc(maj_hits, maj_n),
        n_majority=maj_n,
        n_scored_tasks=len(scored),
        neutral_counts=neutral_counts,
        neutrality_recall=recall,
        ranked_accuracy=ranked,
        shuffled_accuracy=shuffled,
        total_accuracy=total,
        context_consultations={"orig": consult.get("orig", 0), "rewr": consult.get("rewr", 0)},
        rewr_consultation_share=_acc(consult.get("rewr", 0), n_consult),
    )
