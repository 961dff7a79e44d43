"""Multi-label evaluation over prediction files produced elsewhere."""

from __future__ import annotations

import csv
import io
import statistics
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import InvalidArgument
from .taxonomy import NEUTRAL, Taxonomy, default_taxonomy

GRID = tuple(range(5, 96))  # boundaries k/100
LABEL_SEP = ";"


@dataclass
class PredictionMatrix:
    ids: list[str]
    classes: tuple[str, ...]
    scores: np.ndarray
    truth: list[frozenset[str]]

    def __post_init__(self) -> None:
        self.scores = np.asarray(self.scores, dtype=float).reshape(len(self.ids), len(self.classes))
        if len(self.truth) != len(self.ids):
            raise InvalidArgument("truth and ids differ in length")
        if len(set(self.classes)) != len(self.classes):
            raise InvalidArgument("duplicate class columns")
        if self.scores.size and (np.isnan(self.scores).any() or self.scores.min() < 0 or self.scores.max() > 1):
            raise InvalidArgument("scores must lie in [0, 1]")
        known = set(self.classes)
        for i, labels in enumerate(self.truth):
            bad = set(labels) - known
            if bad:
                raise InvalidArgument(f"row {self.ids[i]}: truth labels not among columns: {sorted(bad)}")

    def __len__(self) -> int:
        return len(self.ids)

    def truth_matrix(self) -> np.ndarray:
        index = {c: j for j, c in enumerate(self.classes)}
        out = np.zeros(self.scores.shape, dtype=bool)
        for i, labels in enumerate(self.truth):
            for c in labels:
                out[i, index[c]] = True
        return out

    def take(self, rows: Sequence[int]) -> "PredictionMatrix":
        return PredictionMatrix([self.ids[i] for i in rows], self.classes, self.scores[list(rows)],
                                [self.truth[i] for i in rows])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["example_id", *self.classes, "labels"])
        for i, eid in enumerate(self.ids):
            w.writerow([eid, *(repr(float(x)) for x in self.scores[i]), LABEL_SEP.join(sorted(self.truth[i]))])
        return buf.getvalue()

    def write(self, path: Path | str) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")

    @classmethod
    def read(cls, path: Path | str, expected_classes: Sequence[str] | None = None) -> "PredictionMatrix":
        """Header ``example_id,<classes...>,labels``; truth labels joined with ``;``."""
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise InvalidArgument(f"{path}: empty prediction file") from None
            if len(header) < 3 or header[0] != "example_id" or header[-1] != "labels":
                raise InvalidArgument(f"{path}: header must be example_id,<classes>,labels")
            classes = tuple(header[1:-1])
            if expected_classes is not None and tuple(expected_classes) != classes:
                raise InvalidArgument(f"{path}: class columns do not match the taxonomy order")
            ids, rows, truth = [], [], []
            for lineno, rec in enumerate(reader, 2):
                if not rec:
                    continue
                if len(rec) != len(header):
                    raise InvalidArgument(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
                try:
                    rows.append([float(x) for x in rec[1:-1]])
                except ValueError:
                    raise InvalidArgument(f"{path}:{lineno}: non-numeric score") from None
                ids.append(rec[0])
                truth.append(frozenset(t.strip() for t in rec[-1].split(LABEL_SEP) if t.strip()))
        return cls(ids, classes, np.array(rows, dtype=float).reshape(len(ids), len(classes)), truth)


# -- reports ---------------------------------------------------------------


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float


@dataclass
class EvalReport:
    boundary: float | None
    classes: tuple[str, ...]
    per_class: dict[str, PRF]
    support: dict[str, int]
    macro: PRF
    micro: PRF | None
    std: PRF

    def rows(self) -> list[tuple[str, float | None, float | None, float | None]]:
        """Per-class rows, then micro average, macro average and population std."""
        out = [(c, p.precision, p.recall, p.f1) for c, p in self.per_class.items()]
        m = self.micro
        out.append(("Micro average",) + ((m.precision, m.recall, m.f1) if m else (None, None, None)))
        out.append(("Macro average", self.macro.precision, self.macro.recall, self.macro.f1))
        out.append(("STD", self.std.precision, self.std.recall, self.std.f1))
        return out

    def format(self, fmt: str = "table", digits: int = 2) -> str:
        def num(x):
            return "-" if x is None else f"{x:.{digits}f}"

        rows = self.rows()
        if fmt == "lines":
            head = [f"boundary={self.boundary}"] if self.boundary is not None else []
            return "\n".join(head + [f"class={r[0].replace(' ', '_')} P={num(r[1])} R={num(r[2])} F1={num(r[3])}"
                                     for r in rows])
        if fmt != "table":
            raise InvalidArgument("format must be table or lines")
        width = max(len(r[0]) for r in rows)
        lines = [] if self.boundary is None else [f"boundary {self.boundary:.2f}"]
        lines.append(f"{'class':<{width}}  {'P':>5}  {'R':>5}  {'F1':>5}")
        for r in rows:
            lines.append(f"{r[0]:<{width}}  {num(r[1]):>5}  {num(r[2]):>5}  {num(r[3]):>5}")
        return "\n".join(lines)


def _ratio(num: int, den: int) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def _pstdev(xs: Sequence[float]) -> float:
    return statistics.pstdev(xs) if len(xs) > 1 else 0.0


def _mean(xs: Sequence[Fraction]) -> Fraction:
    return sum(xs, Fraction(0)) / len(xs) if xs else Fraction(0)


def report_from_per_class(
    per_class: Mapping[str, tuple[float, float, float]],
    micro: tuple[float, float, float] | None = None,
    boundary: float | None = None,
    support: Mapping[str, int] | None = None,
) -> EvalReport:
    """Build a report from already computed per-class P/R/F1 triples."""
    if not per_class:
        raise InvalidArgument("no classes")
    prf = {c: PRF(*map(float, v)) for c, v in per_class.items()}
    cols = list(zip(*[(p.precision, p.recall, p.f1) for p in prf.values()]))
    macro = PRF(*(float(_mean([Fraction(repr(x)) for x in col])) for col in cols))
    std = PRF(*(_pstdev(col) for col in cols))
    return EvalReport(boundary, tuple(prf), prf, dict(support or {c: 0 for c in prf}), macro,
                      PRF(*micro) if micro else None, std)


def confusion(pred: np.ndarray, truth: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tp = np.sum(pred & truth, axis=0)
    fp = np.sum(pred & ~truth, axis=0)
    fn = np.sum(~pred & truth, axis=0)
    return tp, fp, fn


def _exact_report(
    classes: Sequence[str], tp, fp, fn, boundary: float | None
) -> tuple[EvalReport, Fraction]:
    per, fracs = {}, []
    for j, c in enumerate(classes):
        t, f_p, f_n = int(tp[j]), int(fp[j]), int(fn[j])
        p, r, f1 = _ratio(t, t + f_p), _ratio(t, t + f_n), _ratio(2 * t, 2 * t + f_p + f_n)
        fracs.append((p, r, f1))
        per[c] = PRF(float(p), float(r), float(f1))
    macro_f = tuple(_mean([x[k] for x in fracs]) for k in range(3))
    T, FP, FN = int(tp.sum()), int(fp.sum()), int(fn.sum())
    micro = PRF(float(_ratio(T, T + FP)), float(_ratio(T, T + FN)), float(_ratio(2 * T, 2 * T + FP + FN)))
    std = PRF(*(_pstdev([float(x[k]) for x in fracs]) for k in range(3)))
    support = {c: int(tp[j] + fn[j]) for j, c in enumerate(classes)}
    report = EvalReport(boundary, tuple(classes), per, support, PRF(*map(float, macro_f)), micro, std)
    return report, macro_f[2]


def score(test: PredictionMatrix, boundary: float, expected_classes: Sequence[str] | None = None) -> EvalReport:
    """Predict every class whose score is >= boundary; 0/0 ratios count as 0."""
    if not 0.0 <= boundary <= 1.0:
        raise InvalidArgument("boundary must lie in [0, 1]")
    if expected_classes is not None and tuple(expected_classes) != test.classes:
        raise InvalidArgument("prediction columns do not match the expected classes")
    pred = test.scores >= boundary
    return _exact_report(test.classes, *confusion(pred, test.truth_matrix()), boundary)[0]


@dataclass
class SweepResult:
    boundary: float
    report: EvalReport
    curve: list[dict] = field(default_factory=list)

    def curve_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=["boundary", "precision", "recall", "f1", "micro_f1"], lineterminator="\n")
        w.writeheader()
        w.writerows(self.curve)
        return buf.getvalue()


def sweep_boundary(dev: PredictionMatrix, grid: Sequence[int] = GRID) -> SweepResult:
    """Pick the single lower boundary (k/100) that maximises macro F1 on ``dev``.

    Macro F1 is compared as an exact rational, so ties are real ties and go
    to the smallest boundary.
    """
    if not len(dev):
        raise InvalidArgument("empty prediction matrix")
    truth = dev.truth_matrix()
    if not truth.any():
        raise InvalidArgument("all truth label sets are empty")
    best = None
    curve = []
    for k in grid:
        b = k / 100
        report, macro_f1 = _exact_report(dev.classes, *confusion(dev.scores >= b, truth), b)
        curve.append({"boundary": f"{b:.2f}", "precision": report.macro.precision,
                      "recall": report.macro.recall, "f1": report.macro.f1, "micro_f1": report.micro.f1})
        if best is None or macro_f1 > best[0]:
            best = (macro_f1, b, report)
    return SweepResult(best[1], best[2], curve)


# -- task mappings ---------------------------------------------------------


@dataclass(frozen=True)
class TaskMapping:
    name: str
    mapping: dict[str, str]  # task class -> taxonomy class

    @property
    def classes(self) -> tuple[str, ...]:
        return tuple(self.mapping)


def load_task(name_or_path: str | Path, taxonomy: Taxonomy | None = None) -> TaskMapping:
    p = Path(name_or_path)
    if not p.exists():
        ref = resources.files("emosynth.data").joinpath(f"tasks/{name_or_path}.yaml")
        if not ref.is_file():
            raise InvalidArgument(f"unknown task mapping {name_or_path!r}")
        data = yaml.safe_load(ref.read_text(encoding="utf-8"))
    else:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    task = TaskMapping(str(data.get("name", p.stem)), {str(k): str(v) for k, v in data["mapping"].items()})
    tax = taxonomy or default_taxonomy()
    for target in task.mapping.values():
        if target not in tax:
            raise InvalidArgument(f"task {task.name}: mapping target {target!r} is not a taxonomy class")
    return task


def map_taxonomy(matrix: PredictionMatrix, task: TaskMapping | Mapping[str, str]) -> PredictionMatrix:
    """Project taxonomy columns onto task classes; other columns are ignored.

    Truth labels may be given either as task classes or as the taxonomy
    classes they map to.
    """
    mapping = dict(task.mapping if isinstance(task, TaskMapping) else task)
    col = {c: j for j, c in enumerate(matrix.classes)}
    missing = [t for t in mapping.values() if t not in col]
    if missing:
        raise InvalidArgument(f"mapping targets without a score column: {missing}")
    inverse: dict[str, str] = {}
    for task_cls, tax_cls in mapping.items():
        inverse.setdefault(tax_cls, task_cls)
    classes = tuple(mapping)
    scores = matrix.scores[:, [col[mapping[c]] for c in classes]]
    truth = []
    for i, labels in enumerate(matrix.truth):
        mapped = set()
        for label in labels:
            if label in mapping:
                mapped.add(label)
            elif label in inverse:
                mapped.add(inverse[label])
            else:
                raise InvalidArgument(f"row {matrix.ids[i]}: truth label {label!r} is outside the task")
        truth.append(frozenset(mapped))
    return PredictionMatrix(list(matrix.ids), classes, scores, truth)


def read_task_matrix(path: Path | str, task: TaskMapping) -> PredictionMatrix:
    """Read a 28-column file whose truth labels use the task's own classes."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgument(f"{path}: empty prediction file")
    header = rows[0]
    classes = tuple(header[1:-1])
    ids, scores, raw_truth = [], [], []
    for rec in rows[1:]:
        if not rec:
            continue
        ids.append(rec[0])
        scores.append([float(x) for x in rec[1:-1]])
        raw_truth.append([t.strip() for t in rec[-1].split(LABEL_SEP) if t.strip()])
    # stand-in truth keeps PredictionMatrix validation happy before projection
    stand_in = [frozenset(task.mapping.get(t, t) for t in labels) for labels in raw_truth]
    full = PredictionMatrix(ids, classes, np.array(scores).reshape(len(ids), len(classes)), stand_in)
    return map_taxonomy(full, task)


def relabel_others(
    labels: Mapping[str, str],
    scores: PredictionMatrix,
    floor: float = 0.3,
    others: str = "others",
) -> dict[str, str]:
    """Replace ``others`` with the arg-max class, or neutral when the max is below ``floor``."""
    row = {eid: i for i, eid in enumerate(scores.ids)}
    out = {}
    for eid, label in labels.items():
        if label != others:
            out[eid] = label
            continue
        if eid not in row:
            raise InvalidArgument(f"no scores for example {eid!r}")
        s = scores.scores[row[eid]]
        j = int(np.argmax(s))
        out[eid] = scores.classes[j] if s[j] >= floor else NEUTRAL
    return out
