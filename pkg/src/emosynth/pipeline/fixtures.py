"""Worked Blade Runner example used to seed the mock backend.

One reply per stage for the Rick Deckard / anger chain. Lines the original
listings elide (actors 10-15, utterances 4-7, the middle of the cleaned
context) are filled in so each reply is complete. The plot synopsis is
written for this package.

Fixture files are keyed by the SHA-256 of the exact prompt, so they are
generated by replaying the chain through the real prompt builders and
parsers: ``python -m emosynth.pipeline.fixtures OUT_DIR``.
"""

from __future__ import annotations

import json
import sys
from importlib import resources
from pathlib import Path

from ..corpus import PlotRecord, make_record
from ..gateway import prompt_hash
from ..taxonomy import Taxonomy
from .extractors import filter_expressive, parse_free_text
from .prompts import PromptSet
from .stages import Stages

TITLE = "Blade Runner"
PLOT = (
    "In the Los Angeles of 2019, Rick Deckard, a retired police officer and Blade Runner, is pulled "
    "back into service by his former supervisor Bryant. Four Nexus-6 replicants, artificial humans "
    "built by the Tyrell Corporation, have come to Earth illegally: the combat model Roy Batty, the "
    "strong and quick Leon, Zhora, and the pleasure model Pris. Bryant hints that Deckard has no real "
    "choice but to retire them, and Officer Gaff is assigned to follow him.\n"
    "At the Tyrell Corporation Deckard tests Rachael, the assistant of Dr. Eldon Tyrell, with the "
    "Voight-Kampff machine. He finds that she is an experimental replicant who believes she is human "
    "because she carries implanted memories. Rachael later saves Deckard's life when Leon attacks him, "
    "and the two grow close while Bryant orders that she be retired as well.\n"
    "Roy and Pris use the engineer J.F. Sebastian to reach Tyrell, who cannot extend their four-year "
    "lifespan. Roy kills Tyrell. Deckard tracks the replicants to Sebastian's building, retires Pris, "
    "and is spared by the dying Roy on a rooftop. Gaff lets Deckard leave with Rachael."
)

ACTORS_REPLY = """1. Rick Deckard (ex-police officer and Blade Runner)
2. Officer Gaff
3. Supervisor Bryant
4. Leon (Nexus-6 replicant)
5. Roy Batty (Nexus-6 replicant)
6. Zhora (Pris' companion and replicant)
7. Pris (Nexus-6 replicant)
8. Dr. Eldon Tyrell (CEO of Tyrell Corporation)
9. Rachael (experimental replicant)
10. J.F. Sebastian (genetic designer)
11. Hannibal Chew (eye engineer)
12. Holden (Blade Runner)
13. Taffey Lewis (club owner)
14. Abdul Ben-Hassan (snake maker)
15. Bear and Kaiser (Sebastian's toy companions)
16. Crowd members (background characters)"""

UTTERANCES_REPLY = """1. (Anger) "How could they send me after Rachael? She's not a replicant, she's human! I won't let Bryant or anyone else hurt her."
2. (Curiosity) "What's going on at the Tyrell Corporation? Why are these replicants here and what do they want from Tyrell?"
3. (Fear) "I've got Leon cornered, but he's so fast and strong. What if I can't retire him in time?"
4. (Sadness) "Pris is gone. Every one I retire looks more like a person than the last."
5. (Confusion) "Rachael passed every question for a hundred of them. How can memories be fake and still feel this real?"
6. (Disapproval) "Bryant calls them skin-jobs like that settles it. It doesn't settle anything for me."
7. (Love) "When she plays the piano I forget the rain, the badge, all of it. She's all I want to come home to."
8. (Optimism) "Maybe there's a way to save these replicants, to give them the chance to live beyond their four-year lifespan. I have to find a solution before it's too late."
Neutral:
1. "I need to focus, to find the replicants and retire them before they cause any more damage."
2. "I need to gather more information, to understand what's really going on and how best to approach this situation.\""""

SOFT_LABELS_REPLY = """1. anger (1.0) - The speaker expresses strong feelings of displeasureand antagonism towards Bryant and others for sending  him after Rachael, who is perceived as innocent and human.
2. caring (1.0) - The speaker displays strong concern and kindness towards Rachael, expressing a desire to protect her from harm.
3. confusion (0.5) - The speaker seems puzzled or uncertain as to why Rachael is being targeted as a replicant.
4. desire (0.8) - The speaker expresses a strong desire to prevent harm from coming to Rachael.
5. neutral (0.1) - The speaker's tone and language do not indicate any particular expressiveness for the remaining emotion classes."""

CONTEXT_REPLY = (
    "Rick Deckard was initially reluctant to hunt down the replicants, including Rachael, after being "
    "informed by his supervisor Bryant that they had come to Earth illegally. However, after being "
    "threatened ambiguously by Bryant, Deckard agreed to retire them. During his investigation, he "
    "discovered that Rachael was an experimental replicant who believed herself to be human, with "
    "implanted false memories. This revelation led Deckard to question the validity of the Voight-Kampff "
    "test and the distinction between replicants and humans. When he encountered Rachael in person, he was "
    "moved by her emotional response and began to doubt her status as a replicant. The realization that she "
    "was in danger from the other replicants and Bryant fueled his determination to protect her, leading "
    "him to declare that she was human and not a replicant, despite the evidence to the contrary."
)

CLEANING_REPLY = (
    "Rick Deckard was initially hesitant to retire the illegal replicants, including Rachael, as he was "
    "informed of their presence on Earth by his supervisor Bryant. After an ambiguous threat from Bryant, "
    "Deckard agreed to retire them. During his investigation, he discovered that Rachael was an experimental "
    "replicant who believed herself to be human, with implanted false memories. This led Deckard to question "
    "the Voight-Kampff test and the distinction between replicants and humans. Rachael was in danger from "
    "the other replicants and Bryant. Despite the evidence suggesting otherwise, Deckard declared Rachael to "
    "be human."
)

REWRITE_REPLY = "How could they ask me to target Rachael? She's not what I expected. I won't let anyone harm her."

ACTOR = "Rick Deckard"


def plot_record() -> PlotRecord:
    return make_record(TITLE, PLOT)


def blade_runner_fixtures(taxonomy: Taxonomy | None = None, prompts: PromptSet | None = None) -> dict[str, str]:
    """Map prompt hash -> reply for the Deckard/anger chain."""
    st = Stages(taxonomy=taxonomy, prompts=prompts)
    plot = plot_record()
    out: dict[str, str] = {}

    stage = st.actors(plot)
    out[prompt_hash(stage.prompt)] = ACTORS_REPLY

    stage = st.utterances(plot, ACTOR)
    out[prompt_hash(stage.prompt)] = UTTERANCES_REPLY
    drafts = stage.parse(UTTERANCES_REPLY)
    anger = next(d for d in drafts if d.primary_emotion == "anger")

    stage = st.soft_labels(anger)
    out[prompt_hash(stage.prompt)] = SOFT_LABELS_REPLY
    kept = filter_expressive(stage.parse(SOFT_LABELS_REPLY))

    stage = st.context(plot, ACTOR, anger, kept)
    out[prompt_hash(stage.prompt)] = CONTEXT_REPLY
    context = parse_free_text("context", CONTEXT_REPLY)

    stage = st.cleaning(ACTOR, context, kept)
    out[prompt_hash(stage.prompt)] = CLEANING_REPLY
    cleaned = stage.parse(CLEANING_REPLY).cleaned

    stage = st.rewriting(ACTOR, cleaned, anger, kept)
    out[prompt_hash(stage.prompt)] = REWRITE_REPLY
    return out


def write_fixtures(directory: Path | str, fixtures: dict[str, str] | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for h, reply in (fixtures or blade_runner_fixtures()).items():
        (directory / f"{h}.txt").write_text(reply, encoding="utf-8")
    return directory


def bundled_dir() -> Path:
    """Directory of the fixture files shipped inside the package."""
    return Path(str(resources.files("emosynth.data").joinpath("fixtures/blade_runner")))


def write_plot(path: Path | str) -> Path:
    """Write the Blade Runner plot as a one-line corpus file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(plot_record().to_json() + "\n", encoding="utf-8")
    return path


if __name__ == "__main__":  # pragma: no cover
    target = write_fixtures(sys.argv[1] if len(sys.argv) > 1 else bundled_dir())
    print(json.dumps({"written": str(target)}))
