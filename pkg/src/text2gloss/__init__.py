"""Semi-supervised text-to-gloss translation toolkit.

Translates spoken-language text into sign-language gloss sequences with a
compact transformer, trained on gold parallel data plus pseudo-labeled
monolingual text (rule-based and model-based annotation, mixed per sentence
and tagged by origin) under a consistency-regularized two-stage curriculum.
"""

__version__ = "0.1.0"

from .corpus import (
    MonolingualCorpus,
    ParallelCorpus,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    load_monolingual_corpus,
    load_parallel_corpus,
)
from .model import TransformerConfig, init_model, load_checkpoint, save_checkpoint

__all__ = [
    "MonolingualCorpus",
    "ParallelCorpus",
    "TransformerConfig",
    "Vocabulary",
    "build_vocabulary",
    "corpus_stats",
    "init_model",
    "load_checkpoint",
    "load_monolingual_corpus",
    "load_parallel_corpus",
    "save_checkpoint",
]
