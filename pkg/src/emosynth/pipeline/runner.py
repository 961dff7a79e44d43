"""Resumable, journal-driven execution of the six stages over a corpus."""

from __future__ import annotations

import hashlib
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Iterable

from ..corpus import PlotRecord
from ..errors import GatewayError, InvalidArgument, ProtocolError, StageEmpty
from ..gateway import STAGES, prompt_hash
from .extractors import filter_expressive
from .journal import Journal, Key
from .models import Actor, ActorList, ContextRecord, SoftLabel, SoftLabelSet, UtteranceDraft
from .stages import Stage, Stages

log = logging.getLogger(__name__)


@dataclass
class RunOptions:
    stages: tuple[str, ...] = STAGES
    threshold: float = 0.3
    inclusive: bool = True
    context_fraction: float = 1.0
    max_actors: int | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise InvalidArgument(f"unknown stages: {', '.join(bad)}")
        if not 0.0 <= self.threshold <= 1.0:
            raise InvalidArgument("threshold must lie in [0, 1]")
        if not 0.0 <= self.context_fraction <= 1.0:
            raise InvalidArgument("context_fraction must lie in [0, 1]")
        if self.workers < 1:
            raise InvalidArgument("workers must be >= 1")


@dataclass
class RunReport:
    counts: dict[str, Counter] = field(default_factory=lambda: {s: Counter() for s in STAGES})
    unknown_labels: Counter = field(default_factory=Counter)
    gateway_errors: int = 0

    def lines(self) -> list[str]:
        out = []
        for s in STAGES:
            c = self.counts[s]
            out.append(
                f"stage={s} ok={c['ok']} empty={c['empty']} error={c['error']} "
                f"cached={c['cached']} skipped={c['skipped']}"
            )
        return out


def in_context_subset(plot_id: str, actor: str, ordinal: int, fraction: float) -> bool:
    if fraction >= 1.0:
        return True
    h = hashlib.sha256(f"{plot_id}\x00{actor}\x00{ordinal}".encode()).hexdigest()
    return int(h[:8], 16) / 0xFFFFFFFF < fraction


# -- journal (de)serialisation of parsed values ---------------------------


def _dump(stage: str, value) -> dict:
    if stage == "actors":
        return {"actors": [asdict(a) for a in value.actors]}
    if stage == "utterances":
        return {"drafts": [d.to_dict() for d in value]}
    if stage == "soft_labels":
        return {"labels": [l.to_dict() for l in value.labels], "flags": value.flags}
    if stage == "context":
        return {"text": value}
    if stage == "cleaning":
        return {"text": value.cleaned, "emotive_clauses_removed": value.emotive_clauses_removed, "flags": value.flags}
    if stage == "rewriting":
        text, flags = value
        return {"text": text, "flags": flags}
    raise InvalidArgument(stage)


def _load(stage: str, data: dict, key: Key, context: str | None = None):
    if stage == "actors":
        return ActorList(key[0], [Actor(**a) for a in data["actors"]])
    if stage == "utterances":
        return [UtteranceDraft(**d) for d in data["drafts"]]
    if stage == "soft_labels":
        return SoftLabelSet([SoftLabel(**l) for l in data["labels"]], list(data.get("flags", [])))
    if stage == "context":
        return data["text"]
    if stage == "cleaning":
        return ContextRecord(context or "", data["text"], data["emotive_clauses_removed"], list(data.get("flags", [])))
    if stage == "rewriting":
        return data["text"], list(data.get("flags", []))
    raise InvalidArgument(stage)


class PipelineRunner:
    def __init__(self, stages: Stages, journal: Journal, options: RunOptions | None = None):
        if stages.gateway is None:
            raise InvalidArgument("runner needs a gateway")
        self.stages = stages
        self.journal = journal
        self.options = options or RunOptions()
        self.report = RunReport()

    def _unit(self, key: Key, stage: Stage, context: str | None = None):
        """Return the parsed value for ``key``, from the journal when possible."""
        name = stage.name
        cached = self.journal.done(key)
        if cached is not None:
            self.report.counts[name]["cached"] += 1
            if cached["status"] == "empty":
                return None
            return _load(name, cached["data"], key, context)
        if name not in self.options.stages:
            self.report.counts[name]["skipped"] += 1
            return None
        rec = {"plot_id": key[0], "actor": key[1], "ordinal": key[2], "stage": name,
               "prompt_sha": prompt_hash(stage.prompt)}
        value = None
        try:
            raw, value = self.stages.call(stage)
            rec.update(status="ok", raw=raw, data=_dump(name, value))
        except StageEmpty as exc:
            rec.update(status="empty", raw=exc.raw, error=str(exc))
            self.report.counts[name]["empty"] += 1
            log.info("stage=%s key=%s empty: %s", name, key[:3], exc)
            self.journal.append(rec)
            return None
        except (GatewayError, ProtocolError) as exc:
            rec.update(status="error", error=str(exc))
            self.report.counts[name]["error"] += 1
            self.report.gateway_errors += 1
            log.warning("stage=%s key=%s error: %s", name, key[:3], exc)
            self.journal.append(rec)
            return None
        self.report.counts[name]["ok"] += 1
        self.journal.append(rec)
        return value

    def _plot_actors(self, plot: PlotRecord) -> list[str]:
        actors = self._unit((plot.plot_id, None, None, "actors"), self.stages.actors(plot))
        if actors is None:
            return []
        names = actors.names
        if self.options.max_actors is not None:
            names = names[: self.options.max_actors]
        return names

    def _chain(self, plot: PlotRecord, actor: str) -> None:
        opts = self.options
        drafts = self._unit((plot.plot_id, actor, None, "utterances"), self.stages.utterances(plot, actor))
        if not drafts:
            return
        for draft in drafts:
            for f in draft.flags:
                if f == "unknown-label":
                    self.report.unknown_labels[draft.raw_label.strip().lower()] += 1
            if not draft.labelable:
                continue
            base = (plot.plot_id, actor, draft.ordinal)
            labels = self._unit(base + ("soft_labels",), self.stages.soft_labels(draft))
            if labels is None:
                continue
            for f in labels.flags:
                if f.startswith("unknown-label:"):
                    self.report.unknown_labels[f.split(":", 1)[1].strip().lower()] += 1
            kept = filter_expressive(labels, opts.threshold, opts.inclusive)
            if not len(kept) or not in_context_subset(plot.plot_id, actor, draft.ordinal, opts.context_fraction):
                continue
            context = self._unit(base + ("context",), self.stages.context(plot, actor, draft, kept))
            if context is None:
                continue
            cleaned = self._unit(base + ("cleaning",), self.stages.cleaning(actor, context, kept), context=context)
            if cleaned is None:
                continue
            self._unit(base + ("rewriting",), self.stages.rewriting(actor, cleaned.cleaned, draft, kept))

    def run(self, plots: Iterable[PlotRecord]) -> RunReport:
        plots = list(plots)
        workers = self.options.workers
        if workers == 1:
            for plot in plots:
                for actor in self._plot_actors(plot):
                    self._chain(plot, actor)
            return self.report
        pool = ThreadPoolExecutor(max_workers=workers)
        try:
            actor_lists = list(pool.map(self._plot_actors, plots))
            pairs = [(p, a) for p, names in zip(plots, actor_lists) for a in names]
            futures = [pool.submit(self._chain, p, a) for p, a in pairs]
            for f in futures:
                f.result()
        except BaseException:
            pool.shutdown(wait=True, cancel_futures=True)
            raise
        pool.shutdown(wait=True)
        return self.report


def group_counts(records: Iterable[dict]) -> dict[str, Counter]:
    out: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        out[r["stage"]][r.get("status", "?")] += 1
    return dict(out)
