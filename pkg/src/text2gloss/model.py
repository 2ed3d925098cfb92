"""Transformer encoder-decoder for text-to-gloss translation.

A compact vanilla transformer (sinusoidal positions, untied embeddings) with
deterministic seeded initialization, teacher-forced sequence log-probability,
and optionally seeded dropout so stochastic passes are reproducible.
"""

from __future__ import annotations

import contextlib
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F

from .corpus import RESERVED, GlossSequence, Sentence, Vocabulary

CHECKPOINT_FORMAT = "text2gloss-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class TransformerConfig:
    layers: int = 3  # encoder depth = decoder depth
    embed_dim: int = 512
    ffn_dim: int = 2048
    heads: int = 8
    dropout: float = 0.3
    label_smoothing: float = 0.1
    max_len: int = 128

    def validate(self) -> None:
        if min(self.layers, self.embed_dim, self.ffn_dim, self.heads, self.max_len) <= 0:
            raise ValueError("all transformer dimensions must be positive")
        if self.embed_dim % self.heads != 0:
            raise ValueError(
                f"embed_dim {self.embed_dim} must be divisible by heads {self.heads}"
            )
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ValueError("label_smoothing must be in [0, 1)")


def sinusoidal_positions(max_len: int, dim: int) -> torch.Tensor:
    position = torch.arange(max_len).unsqueeze(1).float()
    div = torch.exp(-math.log(10000.0) * torch.arange(0, dim, 2).float() / dim)
    table = torch.zeros(max_len, dim)
    table[:, 0::2] = torch.sin(position * div)
    table[:, 1::2] = torch.cos(position * div)
    return table


@contextlib.contextmanager
def _mode(model: nn.Module, train: bool):
    prev = model.training
    model.train(train)
    try:
        yield
    finally:
        model.train(prev)


@contextlib.contextmanager
def seeded_rng(seed: int | None):
    """Fork the CPU RNG and seed it, leaving ambient RNG state untouched."""
    if seed is None:
        yield
        return
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        yield


class GlossTransformer(nn.Module):
    """f(theta): spoken sentence -> distribution over gloss sequences."""

    def __init__(self, config: TransformerConfig, src_vocab: Vocabulary, tgt_vocab: Vocabulary):
        super().__init__()
        config.validate()
        self.config = config
        self.src_vocab = src_vocab
        self.tgt_vocab = tgt_vocab
        d = config.embed_dim
        self.src_embed = nn.Embedding(len(src_vocab), d, padding_idx=src_vocab.pad_id)
        self.tgt_embed = nn.Embedding(len(tgt_vocab), d, padding_idx=tgt_vocab.pad_id)
        self.register_buffer("positions", sinusoidal_positions(config.max_len + 2, d))
        self.embed_dropout = nn.Dropout(config.dropout)
        self.encoder = nn.TransformerEncoder(
            nn.TransformerEncoderLayer(
                d, config.heads, config.ffn_dim, config.dropout, batch_first=True
            ),
            config.layers,
            enable_nested_tensor=False,
        )
        self.decoder = nn.TransformerDecoder(
            nn.TransformerDecoderLayer(
                d, config.heads, config.ffn_dim, config.dropout, batch_first=True
            ),
            config.layers,
        )
        self.out_proj = nn.Linear(d, len(tgt_vocab))
        self._scale = math.sqrt(d)
        for module in (self.encoder, self.decoder, self.out_proj):
            for p in module.parameters():
                if p.dim() > 1:
                    nn.init.xavier_uniform_(p)
        for emb in (self.src_embed, self.tgt_embed):
            nn.init.normal_(emb.weight, mean=0.0, std=d ** -0.5)
            with torch.no_grad():
                emb.weight[emb.padding_idx].zero_()

    def _embed(self, table: nn.Embedding, ids: torch.Tensor) -> torch.Tensor:
        x = table(ids) * self._scale
        x = x + self.positions[: ids.size(1)].to(x.dtype)
        return self.embed_dropout(x)

    @staticmethod
    def causal_mask(size: int, device) -> torch.Tensor:
        return torch.triu(torch.ones(size, size, dtype=torch.bool, device=device), diagonal=1)

    def forward(
        self,
        src_ids: torch.Tensor,
        tgt_in_ids: torch.Tensor,
        src_pad_mask: torch.Tensor | None = None,
        tgt_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Teacher-forced logits [batch, tgt_len, |V_gloss|]."""
        memory = self.encoder(
            self._embed(self.src_embed, src_ids), src_key_padding_mask=src_pad_mask
        )
        out = self.decoder(
            self._embed(self.tgt_embed, tgt_in_ids),
            memory,
            tgt_mask=self.causal_mask(tgt_in_ids.size(1), tgt_in_ids.device),
            tgt_key_padding_mask=tgt_pad_mask,
            memory_key_padding_mask=src_pad_mask,
        )
        return self.out_proj(out)

    # --- decoding support -------------------------------------------------

    @torch.no_grad()
    def encode_ids(self, src_ids: torch.Tensor, src_pad_mask: torch.Tensor | None = None):
        return self.encoder(self._embed(self.src_embed, src_ids), src_key_padding_mask=src_pad_mask)

    @torch.no_grad()
    def step_logits(
        self,
        memory: torch.Tensor,
        tgt_in_ids: torch.Tensor,
        src_pad_mask: torch.Tensor | None = None,
    ) -> torch.Tensor:
        """Logits for the next token given the decoded prefix, shape [batch, |V|]."""
        out = self.decoder(
            self._embed(self.tgt_embed, tgt_in_ids),
            memory,
            tgt_mask=self.causal_mask(tgt_in_ids.size(1), tgt_in_ids.device),
            memory_key_padding_mask=src_pad_mask,
        )
        return self.out_proj(out[:, -1])

    def start_decode(self, x: Sentence) -> "DecodeSession":
        return DecodeSession(self, x)

    def encode_source(self, x: Sentence) -> list[int]:
        if len(x) > self.config.max_len:
            raise ValueError(f"source length {len(x)} exceeds max_len {self.config.max_len}")
        return self.src_vocab.encode(x)

    def encode_target(self, y: GlossSequence) -> list[int]:
        if len(y) > self.config.max_len:
            raise ValueError(f"target length {len(y)} exceeds max_len {self.config.max_len}")
        return self.tgt_vocab.encode(y)


class DecodeSession:
    """Caches the encoder memory of one sentence for stepwise decoding."""

    def __init__(self, model: GlossTransformer, x: Sentence):
        self.model = model
        self.eos_id = model.tgt_vocab.eos_id
        self.bos_id = model.tgt_vocab.bos_id
        src = torch.tensor([model.encode_source(x)], dtype=torch.long)
        with _mode(model, False), torch.no_grad():
            self.memory = model.encode_ids(src)

    def logprobs(self, prefix_ids: list[int]):
        """log p(next token | x, BOS + prefix) as a float64 numpy vector."""
        tgt_in = torch.tensor([[self.bos_id, *prefix_ids]], dtype=torch.long)
        with _mode(self.model, False), torch.no_grad():
            logits = self.model.step_logits(self.memory, tgt_in)
        return F.log_softmax(logits.double(), dim=-1)[0].numpy()


def init_model(
    config: TransformerConfig,
    src_vocab: Vocabulary,
    tgt_vocab: Vocabulary,
    seed: int,
) -> GlossTransformer:
    """Freshly initialized model; the same seed reproduces identical parameters."""
    with seeded_rng(seed):
        return GlossTransformer(config, src_vocab, tgt_vocab)


def teacher_forced_logprobs(
    model: GlossTransformer,
    x: Sentence,
    y: GlossSequence,
    stochastic: bool = False,
    dropout_seed: int | None = None,
) -> torch.Tensor:
    """Per-step log-distributions [T_y + 1, |V|] for y framed by BOS/EOS.

    With stochastic=True dropout is active (seeded when dropout_seed is
    given) and the result stays connected to the autograd graph.
    """
    src = torch.tensor([model.encode_source(x)], dtype=torch.long)
    y_ids = model.encode_target(y)
    tgt_in = torch.tensor([[model.tgt_vocab.bos_id, *y_ids]], dtype=torch.long)
    with _mode(model, stochastic), seeded_rng(dropout_seed if stochastic else None):
        if stochastic:
            logits = model(src, tgt_in)
        else:
            with torch.no_grad():
                logits = model(src, tgt_in)
    return F.log_softmax(logits[0].double(), dim=-1)


def forward_logprob(
    model: GlossTransformer,
    x: Sentence,
    y: GlossSequence,
    stochastic: bool = False,
    dropout_seed: int | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Sequence log-probability log p(y | x) and the per-step distributions.

    The chain runs over y plus the closing EOS: sum_t log p(y_t | x, y_<t).
    Returns (scalar log-prob, probabilities of shape [T_y + 1, |V_gloss|]).
    """
    log_dist = teacher_forced_logprobs(model, x, y, stochastic, dropout_seed)
    targets = torch.tensor(model.encode_target(y) + [model.tgt_vocab.eos_id])
    logprob = log_dist.gather(1, targets.unsqueeze(1)).sum()
    return logprob, log_dist.exp()


def save_checkpoint(model: GlossTransformer, path: str | Path, extra: dict | None = None) -> None:
    """Persist parameters + config + vocabularies with a versioned header."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "src_vocab": model.src_vocab.id_to_token,
        "tgt_vocab": model.tgt_vocab.id_to_token,
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    torch.save(payload, path)


def load_checkpoint(path: str | Path) -> tuple[GlossTransformer, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a model checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {payload.get('version')}")

    def rebuild(tokens: list[str]) -> Vocabulary:
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: corrupt vocabulary block")
        return Vocabulary(tokens[len(RESERVED):])

    config = TransformerConfig(**payload["config"])
    model = GlossTransformer(config, rebuild(payload["src_vocab"]), rebuild(payload["tgt_vocab"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model, payload["extra"]
