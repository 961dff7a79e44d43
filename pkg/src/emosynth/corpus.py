"""Seed narrative corpus: ingestion, streaming iteration and seeded sampling.

Accepted inputs for :func:`ingest`:

* a directory holding WikiPlots-style ``titles`` and ``plots`` files (one
  title per line; plot sentences one per line, plots separated by ``<EOS>``);
* a directory of ``*.txt`` files, one plot per file, titled by file stem;
* a single JSONL file with ``title`` and ``body`` (or ``plot``) fields.

The corpus is written as JSONL, one ``{plot_id, title, body}`` object per line.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import EmptyCorpusError, InvalidArgument

log = logging.getLogger(__name__)

EOS = "<EOS>"


@dataclass(frozen=True)
class PlotRecord:
    plot_id: str
    title: str
    body: str

    @property
    def token_estimate(self) -> int:
        return len(self.body.split())

    def to_json(self) -> str:
        return json.dumps(
            {"plot_id": self.plot_id, "title": self.title, "body": self.body}, ensure_ascii=False
        )


@dataclass
class IngestReport:
    count: int = 0
    skipped: int = 0
    duplicates: int = 0


def plot_id_for(title: str, body: str) -> str:
    digest = hashlib.sha256(f"{title}\x00{body}".encode("utf-8")).hexdigest()
    return digest[:16]


def make_record(title: str, body: str) -> PlotRecord:
    body = body.rstrip()
    title = title.strip()
    return PlotRecord(plot_id_for(title, body), title, body)


def _wikiplots_pairs(directory: Path) -> Iterator[tuple[str, str]]:
    titles = (directory / "titles").read_text(encoding="utf-8").splitlines()
    lines: list[str] = []
    i = 0
    with open(directory / "plots", encoding="utf-8") as fh:
        for line in fh:
            if line.strip() == EOS:
                yield (titles[i] if i < len(titles) else f"untitled-{i}"), "\n".join(lines)
                lines = []
                i += 1
            else:
                lines.append(line.rstrip("\n"))
    if lines:
        yield (titles[i] if i < len(titles) else f"untitled-{i}"), "\n".join(lines)


def _jsonl_pairs(path: Path) -> Iterator[tuple[str, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InvalidArgument(f"{path}:{lineno}: not valid JSON ({exc})") from None
            yield str(obj.get("title", "")), str(obj.get("body", obj.get("plot", "")))


def _source_pairs(source: Path) -> Iterator[tuple[str, str]]:
    if source.is_dir():
        if (source / "plots").is_file() and (source / "titles").is_file():
            yield from _wikiplots_pairs(source)
        else:
            for p in sorted(source.glob("*.txt")):
                yield p.stem, p.read_text(encoding="utf-8")
    else:
        yield from _jsonl_pairs(source)


def ingest(source: Path | str, out_path: Path | str) -> IngestReport:
    source = Path(source)
    if not source.exists():
        raise FileNotFoundError(f"corpus source not found: {source}")
    report = IngestReport()
    seen: set[str] = set()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as out:
        for title, body in _source_pairs(source):
            if not body.strip():
                report.skipped += 1
                continue
            rec = make_record(title, body)
            if rec.plot_id in seen:
                report.duplicates += 1
                continue
            seen.add(rec.plot_id)
            out.write(rec.to_json() + "\n")
            report.count += 1
    if report.count == 0:
        raise EmptyCorpusError(f"no valid plots in {source}")
    log.info("ingest count=%d skipped=%d duplicates=%d", report.count, report.skipped, report.duplicates)
    return report


def iter_corpus(path: Path | str) -> Iterator[PlotRecord]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                yield PlotRecord(obj["plot_id"], obj["title"], obj["body"])


def load_corpus(path: Path | str) -> list[PlotRecord]:
    return list(iter_corpus(path))


def sample(corpus: Iterable[PlotRecord], n: int, seed: int, strategy: str = "random") -> list[PlotRecord]:
    """Pick ``n`` distinct plots.

    ``random`` shuffles the plots (ordered by id, so file order does not
    matter) with ``seed`` and takes a prefix; ``first`` keeps file order.
    """
    records = list(corpus)
    if not 1 <= n <= len(records):
        raise InvalidArgument(f"sample size {n} outside [1, {len(records)}]")
    if strategy == "first":
        return records[:n]
    if strategy != "random":
        raise InvalidArgument(f"unknown sampling strategy {strategy!r}")
    ordered = sorted(records, key=lambda r: r.plot_id)
    random.Random(seed).shuffle(ordered)
    return ordered[:n]
