"""28-class emotion taxonomy, marker groups and out-of-taxonomy label mapping."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Literal, Mapping

import yaml

from .errors import InvalidArgument

log = logging.getLogger(__name__)

NEUTRAL = "neutral"
DROP = "DROP"
POLARITIES = ("negative", "ambiguous", "positive", "neutral")


@dataclass(frozen=True)
class MarkerGroup:
    name: str
    polarity: str
    members: tuple[str, ...]

    def __contains__(self, item: object) -> bool:
        name = item.name if isinstance(item, EmotionClass) else item
        return name in self.members


@dataclass(frozen=True)
class EmotionClass:
    name: str
    definition: str
    polarity: str
    group: str


@dataclass(frozen=True)
class NormalizedLabel:
    """Outcome of mapping a raw LLM label onto the taxonomy.

    ``raw`` is always kept so the original string can be released next to
    the mapped class.
    """

    status: Literal["class", "dropped", "unknown"]
    raw: str
    name: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "class"


@dataclass
class Taxonomy:
    classes: tuple[EmotionClass, ...]
    groups: tuple[MarkerGroup, ...]
    mapping: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._by_name = {c.name: c for c in self.classes}
        self._group_by_name = {g.name: g for g in self.groups}
        self.validate()

    # -- construction ----------------------------------------------------

    @classmethod
    def from_config(cls, data: Mapping, extra_mapping: Mapping[str, str] | None = None) -> "Taxonomy":
        groups = tuple(
            MarkerGroup(g["name"], g["polarity"], tuple(g["members"])) for g in data["groups"]
        )
        group_of = {m: g for g in groups for m in g.members}
        classes = []
        for name, definition in data["classes"].items():
            if name == NEUTRAL:
                classes.append(EmotionClass(name, definition, "neutral", NEUTRAL))
                continue
            if name not in group_of:
                raise InvalidArgument(f"class {name!r} belongs to no marker group")
            g = group_of[name]
            classes.append(EmotionClass(name, definition, g.polarity, g.name))
        mapping = {_key(k): str(v) for k, v in (data.get("mapping") or {}).items()}
        if extra_mapping:
            mapping.update({_key(k): str(v) for k, v in extra_mapping.items()})
        return cls(tuple(classes), groups, mapping)

    def validate(self) -> None:
        names = [c.name for c in self.classes]
        if len(names) != 28 or len(set(names)) != 28:
            raise InvalidArgument(f"expected 28 unique classes, got {len(set(names))}")
        if NEUTRAL not in self._by_name:
            raise InvalidArgument("taxonomy must contain 'neutral'")
        members = [m for g in self.groups for m in g.members]
        non_neutral = {n for n in names if n != NEUTRAL}
        if sorted(members) != sorted(non_neutral):
            raise InvalidArgument("marker groups must partition the non-neutral classes")
        for g in self.groups:
            if g.polarity not in POLARITIES[:3]:
                raise InvalidArgument(f"bad polarity {g.polarity!r} for group {g.name}")
        for raw, target in self.mapping.items():
            if target != DROP and target not in self._by_name:
                raise InvalidArgument(f"mapping {raw!r} -> {target!r}: unknown target class")

    # -- queries ---------------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        """Class names in canonical (column) order."""
        return tuple(c.name for c in self.classes)

    @property
    def emotional_names(self) -> tuple[str, ...]:
        return tuple(n for n in self.names if n != NEUTRAL)

    def __contains__(self, name: object) -> bool:
        return name in self._by_name

    def __getitem__(self, name: str) -> EmotionClass:
        try:
            return self._by_name[name]
        except KeyError:
            raise InvalidArgument(f"unknown emotion class {name!r}") from None

    def polarity(self, name: str) -> str:
        return self[name].polarity

    def group_of(self, emotion: str | EmotionClass) -> MarkerGroup:
        name = emotion.name if isinstance(emotion, EmotionClass) else emotion
        cls_ = self[name]
        if cls_.name == NEUTRAL:
            raise InvalidArgument("neutral has no marker group")
        return self._group_by_name[cls_.group]

    def normalize_label(self, raw: str) -> NormalizedLabel:
        if raw is None or not raw.strip():
            raise InvalidArgument("empty label")
        key = _key(raw)
        if key in self._by_name:
            return NormalizedLabel("class", raw, key)
        target = self.mapping.get(key)
        if target is None:
            return NormalizedLabel("unknown", raw)
        if target == DROP:
            return NormalizedLabel("dropped", raw)
        return NormalizedLabel("class", raw, target)

    def definitions_block(self, include_neutral: bool = True) -> str:
        """``name: definition`` lines, in canonical order, for prompt filling."""
        return "\n".join(
            f"{c.name}: {c.definition}"
            for c in self.classes
            if include_neutral or c.name != NEUTRAL
        )


def _key(raw: str) -> str:
    return " ".join(raw.strip().lower().split())


def polarity_counts(taxonomy: Taxonomy, names: Iterable[str] | None = None) -> dict[str, int]:
    counts = {p: 0 for p in POLARITIES}
    for n in names if names is not None else taxonomy.names:
        counts[taxonomy.polarity(n)] += 1
    return counts


def _read_yaml(path: Path | str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return yaml.safe_load(fh) or {}


def load_taxonomy(path: Path | str | None = None, extra_mapping: Path | str | None = None) -> Taxonomy:
    """Load the taxonomy config; defaults to the bundled file."""
    if path is None and extra_mapping is None:
        return default_taxonomy()
    if path is None:
        data = yaml.safe_load(resources.files("emosynth.data").joinpath("taxonomy.yaml").read_text("utf-8"))
    else:
        data = _read_yaml(path)
    extra = None
    if extra_mapping is not None:
        extra = _read_yaml(extra_mapping)
        extra = extra.get("mapping", extra)
    return Taxonomy.from_config(data, extra)


@lru_cache(maxsize=1)
def default_taxonomy() -> Taxonomy:
    text = resources.files("emosynth.data").joinpath("taxonomy.yaml").read_text("utf-8")
    return Taxonomy.from_config(yaml.safe_load(text))
