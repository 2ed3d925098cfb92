import pytest
import torch

from text2gloss.corpus import ParallelCorpus, Vocabulary, build_vocabulary
from text2gloss.model import TransformerConfig, init_model

TINY_PAIRS = [
    (["ich", "liebe", "regen"], ["ICH", "LIEBEN", "REGEN"]),
    (["es", "regnet", "heute"], ["HEUTE", "REGEN"]),
    (["ich", "gehe", "heute"], ["ICH", "HEUTE", "GEHEN"]),
    (["regen", "kommt"], ["REGEN", "KOMMEN"]),
]


@pytest.fixture
def tiny_gold() -> ParallelCorpus:
    return ParallelCorpus([(list(t), list(g)) for t, g in TINY_PAIRS])


@pytest.fixture
def tiny_vocabs(tiny_gold):
    return build_vocabulary(tiny_gold, "text"), build_vocabulary(tiny_gold, "gloss")


def micro_config(**overrides) -> TransformerConfig:
    base = dict(
        layers=2, embed_dim=8, ffn_dim=16, heads=2,
        dropout=0.1, label_smoothing=0.0, max_len=16,
    )
    base.update(overrides)
    return TransformerConfig(**base)


@pytest.fixture
def micro_model(tiny_vocabs):
    src, tgt = tiny_vocabs
    return init_model(micro_config(), src, tgt, seed=11)


def uniform_head(model) -> None:
    """Force the output distribution to be exactly uniform at every step."""
    with torch.no_grad():
        model.out_proj.weight.zero_()
        model.out_proj.bias.zero_()


def biased_head(model, token_id: int, margin: float = 60.0) -> None:
    """Force probability 1 (exactly, after float rounding) on one token."""
    with torch.no_grad():
        model.out_proj.weight.zero_()
        model.out_proj.bias.zero_()
        model.out_proj.bias[token_id] = margin


def make_vocab(tokens: list[str]) -> Vocabulary:
    return Vocabulary(tokens)
