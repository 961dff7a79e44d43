from __future__ import annotations

from dataclasses import asdict, dataclass, field


@dataclass
class Actor:
    name: str
    gloss: str | None = None


@dataclass
class ActorList:
    plot_id: str
    actors: list[Actor]

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.actors]


@dataclass
class UtteranceDraft:
    plot_id: str
    actor: str
    ordinal: int
    text: str
    primary_emotion: str | None
    raw_label: str
    flags: list[str] = field(default_factory=list)

    @property
    def labelable(self) -> bool:
        return self.primary_emotion is not None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SoftLabel:
    name: str
    expressiveness: float
    explanation: str = ""
    raw_label: str = ""

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SoftLabelSet:
    labels: list[SoftLabel]
    flags: list[str] = field(default_factory=list)

    def as_mapping(self) -> dict[str, float]:
        return {l.name: l.expressiveness for l in self.labels}

    def names(self) -> list[str]:
        return [l.name for l in self.labels]

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class ContextRecord:
    original: str
    cleaned: str | None = None
    emotive_clauses_removed: bool = False
    flags: list[str] = field(default_factory=list)
