"""Regex extractors for stage replies.

Every pattern the pipeline relies on lives here so provider drift can be
handled by editing one file (and its fixture tests).

Reply shapes
------------
actors       ``N. Name (optional gloss)`` one per line
utterances   ``N. (Emotion) "text"`` lines, then a ``Neutral:`` header followed
             by ``N. "text"`` lines
soft labels  ``N. emotion (score) - explanation``; the prompt seeds ``1. <primary>``
             so replies may start mid-line with ``(score) - ...``
free text    context / cleaning / rewriting replies; leading labels such as
             ``Explanation:`` and wrapping quotes are removed

Each parser either returns a structured value or raises :class:`StageEmpty`
carrying the raw reply.
"""

from __future__ import annotations

import logging
import math
import re

from ..errors import StageEmpty
from ..taxonomy import NEUTRAL, Taxonomy
from .models import Actor, ActorList, SoftLabel, SoftLabelSet, UtteranceDraft

log = logging.getLogger(__name__)

NUMBERED = re.compile(r"^\s*(\d{1,3})\s*[.)]\s*(.+?)\s*$")
GLOSS = re.compile(r"^(?P<name>.*?)\s*\((?P<gloss>[^()]*)\)\s*$")
EMOTION_LINE = re.compile(
    r"^\s*(?P<n>\d{1,3})\s*[.)]\s*[\(\[]\s*(?P<label>[^()\[\]]+?)\s*[\)\]]\s*[:\-\u2013\u2014]?\s*(?P<text>.+?)\s*$"
)
EMOTION_COLON_LINE = re.compile(
    r"^\s*(?P<n>\d{1,3})\s*[.)]\s*\**(?P<label>[A-Za-z][A-Za-z \-]{0,30}?)\**\s*:\s*(?P<text>[\"“].+?)\s*$"
)
NEUTRAL_HEADER = re.compile(r"^\s*[*#]*\s*neutral(?:\s+utterances?)?\s*[*#]*\s*:?\s*[*#]*\s*$", re.I)
SOFT_LABEL_LINE = re.compile(
    r"^\s*(?P<n>\d{1,3})\s*[.)]\s*\**(?P<label>[A-Za-z][A-Za-z \-']*?)\**\s*"
    r"[\(\[]\s*(?P<score>[-+]?(?:\d+(?:\.\d*)?|\.\d+))\s*[\)\]]"
    r"\s*(?:[-\u2013\u2014:]\s*(?P<expl>.*?))?\s*$"
)
LEADING_LABEL = re.compile(
    r"^\s*(?:explanation|context|summary|cleaned context|rewritten(?: utterance)?|"
    r"utterance|answer|response)\s*:\s*",
    re.I,
)
QUOTES = "\"'“”‘’"

MAX_EMOTIONAL = 8
MAX_NEUTRAL = 2
MAX_SOFT_LABELS = 5


def strip_quotes(text: str) -> str:
    text = text.strip()
    if len(text) >= 2 and text[0] in QUOTES and text[-1] in QUOTES:
        text = text[1:-1].strip()
    elif text and text[0] in "\"“" and text.count(text[0]) == 1:
        text = text[1:].strip()
    return text


def parse_actors(plot_id: str, reply: str) -> ActorList:
    actors: list[Actor] = []
    seen: set[str] = set()
    for line in reply.splitlines():
        m = NUMBERED.match(line)
        if not m:
            if line.strip() and line.strip() not in ("...", "…"):
                log.debug("actors: skipped line %r", line)
            continue
        entry = m.group(2).replace("**", "").strip()
        gloss = None
        g = GLOSS.match(entry)
        if g and g.group("name").strip():
            entry, gloss = g.group("name").strip(), g.group("gloss").strip() or None
        name = entry.strip(" -–:").strip()
        if not re.search(r"\w", name) or name.casefold() in seen:
            continue
        seen.add(name.casefold())
        actors.append(Actor(name, gloss))
    if not actors:
        raise StageEmpty("actors", "no numbered actor lines", reply)
    return ActorList(plot_id, actors)


def parse_utterances(plot_id: str, actor: str, reply: str, taxonomy: Taxonomy) -> list[UtteranceDraft]:
    emotional: list[UtteranceDraft] = []
    neutral: list[UtteranceDraft] = []
    seen_primary: set[str] = set()
    in_neutral = False
    for line in reply.splitlines():
        if NEUTRAL_HEADER.match(line):
            in_neutral = True
            continue
        m = EMOTION_LINE.match(line) or EMOTION_COLON_LINE.match(line)
        if m and not in_neutral:
            raw = m.group("label")
            text = strip_quotes(m.group("text"))
            if not text or not raw.strip():
                continue
            norm = taxonomy.normalize_label(raw)
            if norm.ok and norm.name == NEUTRAL:
                if len(neutral) < MAX_NEUTRAL:
                    neutral.append(UtteranceDraft(plot_id, actor, MAX_EMOTIONAL + len(neutral) + 1, text, NEUTRAL, raw))
                continue
            if len(emotional) >= MAX_EMOTIONAL:
                continue
            flags: list[str] = []
            primary = None
            if norm.ok:
                if norm.name in seen_primary:
                    log.info("utterances: duplicate primary %s for %s", norm.name, actor)
                    continue
                seen_primary.add(norm.name)
                primary = norm.name
            elif norm.status == "dropped":
                flags.append("dropped-label")
            else:
                flags.append("unknown-label")
                log.info("utterances: unknown label %r", raw)
            emotional.append(UtteranceDraft(plot_id, actor, len(emotional) + 1, text, primary, raw, flags))
            continue
        if in_neutral:
            n = NUMBERED.match(line)
            if n and len(neutral) < MAX_NEUTRAL:
                body = n.group(2)
                e = re.match(r"^[\(\[]\s*neutral\s*[\)\]]\s*[:\-–]?\s*(.*)$", body, re.I)
                text = strip_quotes(e.group(1) if e else body)
                if text:
                    neutral.append(
                        UtteranceDraft(plot_id, actor, MAX_EMOTIONAL + len(neutral) + 1, text, NEUTRAL, "Neutral")
                    )
    if not emotional:
        raise StageEmpty("utterances", "no emotional utterance lines", reply)
    if len(emotional) < MAX_EMOTIONAL:
        log.info("utterances: %s/%s parsed %d of %d emotional lines", plot_id, actor, len(emotional), MAX_EMOTIONAL)
    return emotional + neutral


def quantize(score: float) -> float:
    """Round to the nearest 0.1 step inside [0, 1] (halves round up)."""
    q = math.floor(min(max(score, 0.0), 1.0) * 10 + 0.5) / 10
    return round(q, 1)


def parse_soft_labels(reply: str, primary: str, taxonomy: Taxonomy) -> SoftLabelSet:
    text = reply.strip()
    if not re.match(r"^\d", text):
        # the prompt already ends with "1. <primary>", so the model may continue mid-line
        text = f"1. {primary} {text}" if text[:1] and text[0] in "([" else f"1. {text}"
    lines = text.splitlines()
    first = next((l for l in lines if l.strip()), "")
    if not SOFT_LABEL_LINE.match(first):
        raise StageEmpty("soft_labels", "first line is not `N. emotion (score)`", reply)

    parsed: list[tuple[str, float, str]] = []
    for line in lines:
        m = SOFT_LABEL_LINE.match(line)
        if m:
            if len(parsed) >= MAX_SOFT_LABELS:
                break
            parsed.append([m.group("label").strip(), float(m.group("score")), (m.group("expl") or "").strip()])
        elif parsed and line.strip() and not NUMBERED.match(line):
            parsed[-1][2] = (parsed[-1][2] + " " + line.strip()).strip()

    flags: list[str] = []
    labels: list[SoftLabel] = []
    seen: set[str] = set()
    for i, (raw, score, expl) in enumerate(parsed):
        q = quantize(score)
        if abs(q - score) > 1e-9:
            flags.append(f"off-grid:{raw}:{score:g}")
        norm = taxonomy.normalize_label(raw)
        name = norm.name
        if i == 0 and name != primary:
            flags.append(f"primary-forced:{raw}")
            name = primary
        elif not norm.ok:
            flags.append(f"{norm.status}-label:{raw}")
            if norm.status == "unknown":
                log.info("soft_labels: unknown label %r", raw)
            continue
        if name in seen:
            flags.append(f"duplicate:{raw}")
            continue
        seen.add(name)
        labels.append(SoftLabel(name, q, expl, raw))
    return SoftLabelSet(labels, flags)


def filter_expressive(labels: SoftLabelSet, threshold: float = 0.3, inclusive: bool = True) -> SoftLabelSet:
    """Keep labels whose expressiveness clears ``threshold``.

    ``inclusive`` keeps scores equal to the threshold; the comparison is done
    on the 0.1 grid so 0.3 is never lost to float noise.
    """
    t = round(threshold * 10, 6)
    kept = [
        l for l in labels.labels
        if (round(l.expressiveness * 10, 6) >= t if inclusive else round(l.expressiveness * 10, 6) > t)
    ]
    flags = [] if kept else ["label-less"]
    return SoftLabelSet(kept, flags)


def parse_free_text(stage: str, reply: str) -> str:
    text = reply.strip()
    text = LEADING_LABEL.sub("", text, count=1)
    text = strip_quotes(text)
    if not text:
        raise StageEmpty(stage, "empty reply", reply)
    return text
