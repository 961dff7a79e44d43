"""Data-quality analyses over assembled datasets."""

from .dedup import DedupResult, near_duplicate_filter
from .fuzzy import partial_levenshtein_ratio, ratio
from .louvain import LouvainResult, adjacency, louvain, modularity
from .markers import MarkerLexicon, MarkerRow, extract_markers, rows_from_examples, tokenize
from .similarity import PAIRINGS, EmbeddingCache, SimilarityStats, nearest_rank, similarity_stats
from .topics import TopicGraph, build_topic_graph

__all__ = [
    "DedupResult", "near_duplicate_filter", "partial_levenshtein_ratio", "ratio",
    "LouvainResult", "adjacency", "louvain", "modularity",
    "MarkerLexicon", "MarkerRow", "extract_markers", "rows_from_examples", "tokenize",
    "PAIRINGS", "EmbeddingCache", "SimilarityStats", "nearest_rank", "similarity_stats",
    "TopicGraph", "build_topic_graph",
]
