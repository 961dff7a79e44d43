"""The six synthesis stages as prompt builders plus reply parsers.

:class:`Stages` binds them to a gateway so each stage can be called on its
own; the resumable runner reuses the same ``Stage`` objects through the
journal.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from ..corpus import PlotRecord
from ..errors import StageEmpty
from ..gateway import ChatRequest, Gateway, GenerationParams, STAGES
from ..taxonomy import Taxonomy, default_taxonomy
from .extractors import filter_expressive, parse_actors, parse_free_text, parse_soft_labels, parse_utterances
from .models import ActorList, ContextRecord, SoftLabelSet, UtteranceDraft
from .prompts import PromptSet, emotions_phrase


@dataclass
class Stage:
    name: str
    prompt: str
    parse: Callable[[str], object]


class Stages:
    def __init__(
        self,
        gateway: Gateway | None = None,
        taxonomy: Taxonomy | None = None,
        prompts: PromptSet | None = None,
        params: dict[str, GenerationParams] | None = None,
    ):
        self.gateway = gateway
        self.taxonomy = taxonomy or default_taxonomy()
        self.prompts = prompts or PromptSet()
        self.params = {s: GenerationParams(s) for s in STAGES}
        if params:
            self.params.update(params)

    # -- stage constructors ---------------------------------------------

    def actors(self, plot: PlotRecord) -> Stage:
        return Stage("actors", self.prompts.actors(plot.body), lambda r: parse_actors(plot.plot_id, r))

    def utterances(self, plot: PlotRecord, actor: str) -> Stage:
        return Stage(
            "utterances",
            self.prompts.utterances(plot.body, actor, self.taxonomy),
            lambda r: parse_utterances(plot.plot_id, actor, r, self.taxonomy),
        )

    def soft_labels(self, draft: UtteranceDraft) -> Stage:
        if draft.primary_emotion is None:
            raise StageEmpty("soft_labels", f"draft has no usable primary emotion ({draft.raw_label!r})")
        primary = draft.primary_emotion
        return Stage(
            "soft_labels",
            self.prompts.soft_labels(draft.text, primary, self.taxonomy),
            lambda r: parse_soft_labels(r, primary, self.taxonomy),
        )

    def context(self, plot: PlotRecord, actor: str, draft: UtteranceDraft, labels: SoftLabelSet) -> Stage:
        if not len(labels):
            raise StageEmpty("context", "no expressive labels to explain")
        return Stage(
            "context",
            self.prompts.context(plot.body, actor, draft.text, emotions_phrase(labels.names())),
            lambda r: parse_free_text("context", r),
        )

    def cleaning(self, actor: str, context: str, labels: SoftLabelSet) -> Stage:
        def parse(reply: str) -> ContextRecord:
            try:
                cleaned = parse_free_text("cleaning", reply)
            except StageEmpty:
                return ContextRecord(context, context, False, ["cleaning-fallback"])
            return ContextRecord(context, cleaned, cleaned != context)

        return Stage("cleaning", self.prompts.cleaning(actor, context, emotions_phrase(labels.names())), parse)

    def rewriting(self, actor: str, cleaned: str, draft: UtteranceDraft, labels: SoftLabelSet) -> Stage:
        def parse(reply: str) -> tuple[str, list[str]]:
            try:
                return parse_free_text("rewriting", reply), []
            except StageEmpty:
                return draft.text, ["rewrite-fallback"]

        return Stage(
            "rewriting",
            self.prompts.rewriting(cleaned, actor, draft.text, emotions_phrase(labels.names())),
            parse,
        )

    # -- direct execution -----------------------------------------------

    def call(self, stage: Stage) -> tuple[str, object]:
        """Send ``stage`` through the gateway; returns (raw reply, parsed value)."""
        if self.gateway is None:
            raise RuntimeError("no gateway configured")
        reply = self.gateway.complete(ChatRequest.single(stage.prompt, self.params[stage.name]))
        try:
            return reply.text, stage.parse(reply.text)
        except StageEmpty as exc:
            exc.raw = reply.text
            raise

    def extract_actors(self, plot: PlotRecord) -> ActorList:
        return self.call(self.actors(plot))[1]

    def generate_utterances(self, plot: PlotRecord, actor: str) -> list[UtteranceDraft]:
        return self.call(self.utterances(plot, actor))[1]

    def assign_soft_labels(self, draft: UtteranceDraft) -> SoftLabelSet:
        return self.call(self.soft_labels(draft))[1]

    def generate_context(self, plot: PlotRecord, actor: str, draft: UtteranceDraft, labels: SoftLabelSet) -> str:
        return self.call(self.context(plot, actor, draft, labels))[1]

    def clean_context(self, actor: str, context: str, labels: SoftLabelSet) -> ContextRecord:
        return self.call(self.cleaning(actor, context, labels))[1]

    def rewrite_utterance(self, actor: str, cleaned: str, draft: UtteranceDraft, labels: SoftLabelSet) -> str:
        return self.call(self.rewriting(actor, cleaned, draft, labels))[1][0]


__all__ = ["Stage", "Stages", "filter_expressive"]
