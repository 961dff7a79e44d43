"""Prompt templates for the six stages, filled by plain placeholder substitution."""

from __future__ import annotations

import re
from functools import lru_cache
from importlib import resources
from pathlib import Path

from ..errors import InvalidArgument
from ..gateway import STAGES
from ..taxonomy import Taxonomy

PLOT = "<text of the plot>"
ACTOR = "<extracted actor>"
UTTERANCE = "<utterance>"
EMOTIONS = "<emotions>"
CONTEXT = "<generated context>"
CLEANED = "<cleaned context>"
DEFINITIONS = "<emotions and their definitions>"
ALL_DEFINITIONS = "<classes (incl. neutral) and their definitions>"
PRIMARY = "<primary emotion>"


@lru_cache(maxsize=None)
def _bundled(stage: str) -> str:
    return resources.files("emosynth.data").joinpath(f"prompts/{stage}.txt").read_text("utf-8")


class PromptSet:
    """Stage templates; ``directory`` overrides any bundled file it contains."""

    def __init__(self, directory: Path | str | None = None):
        self.templates = {s: _bundled(s) for s in STAGES}
        if directory is not None:
            for s in STAGES:
                p = Path(directory) / f"{s}.txt"
                if p.is_file():
                    self.templates[s] = p.read_text(encoding="utf-8")

    def render(self, stage: str, **values: str) -> str:
        try:
            text = self.templates[stage]
        except KeyError:
            raise InvalidArgument(f"unknown stage {stage!r}") from None
        if not values:
            return text
        # single pass, so placeholder-like text inside a plot is never re-expanded
        pattern = re.compile("|".join(re.escape(k) for k in sorted(values, key=len, reverse=True)))
        return pattern.sub(lambda m: values[m.group(0)], text)

    def actors(self, plot: str) -> str:
        return self.render("actors", **{PLOT: plot})

    def utterances(self, plot: str, actor: str, taxonomy: Taxonomy) -> str:
        return self.render(
            "utterances",
            **{PLOT: plot, ACTOR: actor, DEFINITIONS: taxonomy.definitions_block(include_neutral=False)},
        )

    def soft_labels(self, utterance: str, primary: str, taxonomy: Taxonomy) -> str:
        return self.render(
            "soft_labels",
            **{ALL_DEFINITIONS: taxonomy.definitions_block(), UTTERANCE: utterance, PRIMARY: primary},
        )

    def context(self, plot: str, actor: str, utterance: str, emotions: str) -> str:
        return self.render("context", **{PLOT: plot, ACTOR: actor, UTTERANCE: utterance, EMOTIONS: emotions})

    def cleaning(self, actor: str, context: str, emotions: str) -> str:
        return self.render("cleaning", **{ACTOR: actor, CONTEXT: context, EMOTIONS: emotions})

    def rewriting(self, cleaned: str, actor: str, utterance: str, emotions: str) -> str:
        return self.render(
            "rewriting", **{CLEANED: cleaned, ACTOR: actor, UTTERANCE: utterance, EMOTIONS: emotions}
        )


def emotions_phrase(names: list[str]) -> str:
    return ", ".join(names)
