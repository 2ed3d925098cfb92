"""Losses and the two-stage optimization.

The training objective is cross-entropy (teacher-forced, label-smoothed)
plus a consistency term: the symmetric token-level KL divergence between two
dropout-perturbed forward passes of the same input. The consistency weight
ramps up linearly from zero. Stage one pre-trains on gold + synthetic data
for a fixed number of epochs; stage two fine-tunes on gold only with dev
BLEU-4 early stopping.
"""

from __future__ import annotations

import copy
import json
import random
from dataclasses import dataclass
from pathlib import Path

import torch
import torch.nn.functional as F
from torch import Tensor

from .corpus import TAG_MODEL, TAG_RULE, GlossSequence, ParallelCorpus, Sentence
from .decoding import batch_greedy_decode, beam_search
from .metrics import bleu_n
from .model import GlossTransformer, _mode, seeded_rng
from .rules import SyntheticPair

_TAGS = (TAG_RULE, TAG_MODEL)


@dataclass
class RampSchedule:
    """Linear ramp of the consistency weight from 0 to target_w."""

    target_w: float = 20.0
    ramp_steps: int = 1

    def __post_init__(self):
        if self.target_w < 0:
            raise ValueError("target_w must be >= 0")
        if self.ramp_steps <= 0:
            raise ValueError("ramp_steps must be > 0")

    def weight(self, step: int) -> float:
        if step <= 0:
            return 0.0
        if step >= self.ramp_steps:
            return self.target_w
        return self.target_w * step / self.ramp_steps


@dataclass
class StageConfig:
    learning_rate: float = 5e-5
    batch_size: int = 32
    patience: int = 5  # stage-two early stopping, in dev evaluations
    max_epochs: int = 200  # stage-two safety cap
    eval_beam_width: int = 1  # dev decoding during fine-tune model selection
    cr_in_finetune: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class LossBreakdown:
    ce: float
    cr: float
    w_effective: float
    total: float


class TrainLog:
    """Appends one JSON object per optimizer step to a log file."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.path.write_text("")

    def log(self, **fields) -> None:
        if self.path is None:
            return
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(fields) + "\n")


def symmetric_token_kl(logp_a: Tensor, logp_b: Tensor, mask: Tensor | None = None) -> Tensor:
    """KL(a||b) + KL(b||a) per position, averaged over (unmasked) positions.

    Inputs are log-distributions of shape [..., steps, vocab]; `mask` is a
    boolean [..., steps] tensor marking valid positions.
    """
    kl_ab = (logp_a.exp() * (logp_a - logp_b)).sum(-1)
    kl_ba = (logp_b.exp() * (logp_b - logp_a)).sum(-1)
    both = kl_ab + kl_ba
    if mask is None:
        return both.mean()
    both = both * mask
    per_seq = both.sum(-1) / mask.sum(-1).clamp(min=1)
    return per_seq.mean()


def _frame_batch(model: GlossTransformer, texts, glosses):
    """Encode and pad a batch; returns ids and masks for teacher forcing."""
    src_pad = model.src_vocab.pad_id
    tgt_pad = model.tgt_vocab.pad_id
    bos, eos = model.tgt_vocab.bos_id, model.tgt_vocab.eos_id
    src_seqs = [model.encode_source(t) for t in texts]
    tgt_seqs = [model.encode_target(g) for g in glosses]
    src_width = max(len(s) for s in src_seqs)
    tgt_width = max(len(t) for t in tgt_seqs) + 1  # BOS / EOS framing
    src = torch.full((len(src_seqs), src_width), src_pad, dtype=torch.long)
    tgt_in = torch.full((len(tgt_seqs), tgt_width), tgt_pad, dtype=torch.long)
    tgt_out = torch.full((len(tgt_seqs), tgt_width), tgt_pad, dtype=torch.long)
    for i, (s, t) in enumerate(zip(src_seqs, tgt_seqs)):
        src[i, : len(s)] = torch.tensor(s)
        tgt_in[i, 0] = bos
        if t:
            tgt_in[i, 1 : len(t) + 1] = torch.tensor(t)
            tgt_out[i, : len(t)] = torch.tensor(t)
        tgt_out[i, len(t)] = eos
    return src, tgt_in, tgt_out, src.eq(src_pad), tgt_in.eq(tgt_pad)


def _smoothed_ce(logp: Tensor, tgt_out: Tensor, valid: Tensor, epsilon: float) -> Tensor:
    """Label-smoothed NLL, token-summed per sequence then batch-meaned."""
    nll = -logp.gather(-1, tgt_out.unsqueeze(-1)).squeeze(-1)
    if epsilon > 0.0:
        uniform = -logp.mean(-1)
        nll = (1.0 - epsilon) * nll + epsilon * uniform
    return (nll * valid).sum(-1).mean()


def batch_loss_terms(
    model: GlossTransformer,
    texts: list[Sentence],
    glosses: list[GlossSequence],
    with_consistency: bool,
    dropout_seeds: tuple[int | None, int | None] = (None, None),
    stochastic: bool = True,
) -> tuple[Tensor, Tensor]:
    """Grad-connected (cross-entropy, consistency) terms for one batch.

    Cross-entropy comes from the first pass; the consistency term is the
    symmetric KL between both passes' token distributions. The second pass
    is skipped (cr = 0) when consistency is off or dropout cannot perturb.
    """
    src, tgt_in, tgt_out, src_mask, tgt_mask = _frame_batch(model, texts, glosses)
    valid = ~tgt_in.eq(model.tgt_vocab.pad_id)
    epsilon = model.config.label_smoothing

    def one_pass(seed):
        with _mode(model, stochastic), seeded_rng(seed if stochastic else None):
            logits = model(src, tgt_in, src_mask, tgt_mask)
        return F.log_softmax(logits, dim=-1)

    logp1 = one_pass(dropout_seeds[0])
    ce = _smoothed_ce(logp1, tgt_out, valid, epsilon)
    perturbable = stochastic and model.config.dropout > 0.0
    if with_consistency and perturbable:
        logp2 = one_pass(dropout_seeds[1])
        cr = symmetric_token_kl(logp1, logp2, valid)
    else:
        cr = torch.zeros((), dtype=ce.dtype)
    return ce, cr


def cross_entropy_loss(
    model: GlossTransformer,
    x: Sentence,
    y: GlossSequence,
    stochastic: bool = False,
    dropout_seed: int | None = None,
) -> Tensor:
    """-log p(y | x) with label smoothing per the model config."""
    ce, _ = batch_loss_terms(
        model, [x], [y], with_consistency=False,
        dropout_seeds=(dropout_seed, None), stochastic=stochastic,
    )
    return ce


def consistency_loss(
    model: GlossTransformer,
    x: Sentence,
    y_frame: GlossSequence,
    dropout_seeds: tuple[int | None, int | None] = (None, None),
) -> Tensor:
    """Symmetric KL between two dropout-perturbed teacher-forced passes."""
    _, cr = batch_loss_terms(
        model, [x], [y_frame], with_consistency=True,
        dropout_seeds=dropout_seeds, stochastic=True,
    )
    return cr


def combined_loss(
    model: GlossTransformer,
    x: Sentence,
    y: GlossSequence,
    step: int,
    ramp: RampSchedule,
    dropout_seeds: tuple[int | None, int | None] = (None, None),
) -> LossBreakdown:
    """Cross-entropy plus ramp-weighted consistency at a training step."""
    w = ramp.weight(step)
    ce_t, cr_t = batch_loss_terms(
        model, [x], [y], with_consistency=w > 0.0, dropout_seeds=dropout_seeds,
    )
    ce, cr = float(ce_t.detach()), float(cr_t.detach())
    return LossBreakdown(ce=ce, cr=cr, w_effective=w, total=ce + w * cr)


def augment(x: Sentence, rng: random.Random, p_drop: float, window: int) -> Sentence:
    """Randomly drop and locally shuffle tokens of a source sentence.

    Each token is dropped independently with probability p_drop, never all of
    them; survivors are shuffled by sorting index + U(0, window), so tokens
    move at most `window` positions. A leading provenance tag is kept fixed.
    """
    if not x:
        return []
    start = 1 if x[0] in _TAGS else 0
    body = x[start:]
    if body:
        kept = [tok for tok in body if rng.random() >= p_drop]
        if not kept:
            kept = [body[rng.randrange(len(body))]]
        if window > 1 and len(kept) > 1:
            keyed = [(i + rng.uniform(0, window), tok) for i, tok in enumerate(kept)]
            keyed.sort(key=lambda pair: pair[0])
            kept = [tok for _, tok in keyed]
        body = kept
    return list(x[:start]) + body


def _derive_seeds(seed: int, step: int) -> tuple[int, int]:
    base = (seed * 1_000_003 + step) * 2
    return base & 0x7FFFFFFF, (base + 1) & 0x7FFFFFFF


class _TrainItem:
    __slots__ = ("text", "gloss", "synthetic")

    def __init__(self, text, gloss, synthetic):
        self.text = text
        self.gloss = gloss
        self.synthetic = synthetic


def _run_epochs(
    model: GlossTransformer,
    items: list[_TrainItem],
    epochs: int,
    cfg: StageConfig,
    ramp: RampSchedule,
    with_consistency: bool,
    seed: int,
    start_step: int,
    log: TrainLog | None,
    log_fields: dict,
    p_drop: float = 0.0,
    window: int = 1,
    optimizer: torch.optim.Optimizer | None = None,
) -> int:
    if optimizer is None:
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    step = start_step
    for epoch in range(epochs):
        order = list(range(len(items)))
        random.Random(seed * 1_000_003 + epoch).shuffle(order)
        aug_rng = random.Random(seed * 7_919 + epoch)
        for lo in range(0, len(order), cfg.batch_size):
            batch = [items[i] for i in order[lo : lo + cfg.batch_size]]
            texts = [
                augment(it.text, aug_rng, p_drop, window)
                if it.synthetic and (p_drop > 0 or window > 1)
                else it.text
                for it in batch
            ]
            w = ramp.weight(step)
            ce, cr = batch_loss_terms(
                model,
                texts,
                [it.gloss for it in batch],
                with_consistency=with_consistency and w > 0.0,
                dropout_seeds=_derive_seeds(seed, step),
            )
            total = ce + w * cr
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            if log is not None:
                log.log(
                    **log_fields,
                    step=step,
                    ce=float(ce.detach()),
                    cr=float(cr.detach()),
                    w_effective=w,
                    total=float(total.detach()),
                )
            step += 1
    return step


def train_stage_one(
    model: GlossTransformer,
    gold: ParallelCorpus,
    synthetic: list[SyntheticPair],
    epochs: int,
    cfg: StageConfig,
    ramp: RampSchedule,
    seed: int,
    p_drop: float = 0.1,
    window: int = 3,
    start_step: int = 0,
    log: TrainLog | None = None,
    iteration: int = 0,
) -> tuple[GlossTransformer, int]:
    """Pre-train on gold + synthetic for exactly `epochs` epochs.

    Synthetic source sentences (already carrying their provenance tag) get
    drop/shuffle augmentation; gold pairs do not. Returns the model and the
    global step counter after training.
    """
    items = [_TrainItem(t, g, False) for t, g in gold.pairs]
    items += [_TrainItem(p.text, p.gloss, True) for p in synthetic]
    if not items:
        raise ValueError("stage one needs a non-empty gold + synthetic union")
    step = _run_epochs(
        model,
        items,
        epochs,
        cfg,
        ramp,
        with_consistency=True,
        seed=seed,
        start_step=start_step,
        log=log,
        log_fields={"iteration": iteration, "stage": "pretrain"},
        p_drop=p_drop,
        window=window,
    )
    return model, step


def evaluate_dev_bleu(
    model: GlossTransformer,
    dev: ParallelCorpus,
    beam_width: int = 1,
    length_penalty: float = 1.0,
) -> float:
    """Dev BLEU-4 of the current parameters, decoded deterministically."""
    if beam_width <= 1:
        hyps = [tokens for tokens, _ in batch_greedy_decode(model, dev.texts())]
    else:
        hyps = [
            beam_search(model, x, width=beam_width, length_penalty=length_penalty).tokens
            for x in dev.texts()
        ]
    return bleu_n(hyps, dev.glosses(), 4)


@dataclass
class StageTwoResult:
    model: GlossTransformer
    best_dev_bleu4: float
    history: list[float]  # dev BLEU-4 per evaluation, index 0 = before tuning
    epochs_run: int
    steps: int


def train_stage_two(
    model: GlossTransformer,
    gold: ParallelCorpus,
    dev: ParallelCorpus,
    cfg: StageConfig,
    ramp: RampSchedule,
    seed: int,
    start_step: int = 0,
    log: TrainLog | None = None,
    iteration: int = 0,
) -> StageTwoResult:
    """Fine-tune on gold only, keeping the best checkpoint by dev BLEU-4.

    Evaluates before tuning and after every epoch; stops once `patience`
    consecutive evaluations fail to improve on the best score.
    """
    if len(gold) == 0:
        raise ValueError("stage two needs non-empty gold data")
    items = [_TrainItem(t, g, False) for t, g in gold.pairs]
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    best_score = evaluate_dev_bleu(model, dev, cfg.eval_beam_width)
    best_state = copy.deepcopy(model.state_dict())
    history = [best_score]
    stale = 0
    step = start_step
    epochs_run = 0
    for epoch in range(cfg.max_epochs):
        step = _run_epochs(
            model,
            items,
            1,
            cfg,
            ramp,
            with_consistency=cfg.cr_in_finetune,
            seed=seed + 615_243 + epoch,
            start_step=step,
            log=log,
            log_fields={"iteration": iteration, "stage": "finetune"},
            optimizer=optimizer,
        )
        epochs_run += 1
        score = evaluate_dev_bleu(model, dev, cfg.eval_beam_width)
        history.append(score)
        if score > best_score:
            best_score = score
            best_state = copy.deepcopy(model.state_dict())
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    model.eval()
    return StageTwoResult(
        model=model,
        best_dev_bleu4=best_score,
        history=history,
        epochs_run=epochs_run,
        steps=step,
    )
