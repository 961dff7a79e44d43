"""Six-stage synthesis pipeline: prompts, extractors, stage calls and the resumable runner."""

from .extractors import filter_expressive, parse_actors, parse_soft_labels, parse_utterances, quantize
from .journal import Journal
from .models import Actor, ActorList, ContextRecord, SoftLabel, SoftLabelSet, UtteranceDraft
from .prompts import PromptSet
from .runner import PipelineRunner, RunOptions, RunReport
from .stages import Stage, Stages

__all__ = [
    "Actor", "ActorList", "ContextRecord", "Journal", "PipelineRunner", "PromptSet", "RunOptions",
    "RunReport", "SoftLabel", "SoftLabelSet", "Stage", "Stages", "UtteranceDraft",
    "filter_expressive", "parse_actors", "parse_soft_labels", "parse_utterances", "quantize",
]
