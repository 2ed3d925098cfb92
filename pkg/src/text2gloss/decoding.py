"""Decoding: beam search for evaluation, greedy (width 1) for annotation.

Both decoders are deterministic: dropout disabled, argmax ties resolved
toward the lower token id. Beam scores finished hypotheses by
logprob / steps**length_penalty where steps counts the gloss tokens plus the
closing EOS.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .corpus import GlossSequence, Sentence
from .model import GlossTransformer, _mode


@dataclass
class BeamHypothesis:
    tokens: GlossSequence  # decoded gloss tokens, EOS excluded
    logprob: float  # accumulated log-probability incl. the EOS step if finished
    finished: bool  # ended with EOS within max_len
    steps: int  # decode steps taken (len(tokens) + 1 when finished)

    def score(self, length_penalty: float) -> float:
        return self.logprob / (self.steps ** length_penalty)


class _Beam:
    __slots__ = ("ids", "logprob", "finished")

    def __init__(self, ids, logprob, finished):
        self.ids = ids
        self.logprob = logprob
        self.finished = finished


def beam_search(
    model: GlossTransformer,
    x: Sentence,
    width: int = 3,
    length_penalty: float = 1.0,
    max_len: int | None = None,
) -> BeamHypothesis:
    """Best finished hypothesis by length-penalized log-probability.

    Keeps the top `width` hypotheses per step ranked by raw log-probability;
    finished hypotheses are frozen and keep competing. If nothing finishes
    within max_len the best partial comes back with finished=False.
    """
    if width < 1:
        raise ValueError("beam width must be >= 1")
    max_len = model.config.max_len if max_len is None else max_len
    session = model.start_decode(x)
    eos = session.eos_id
    beams = [_Beam((), 0.0, False)]

    def frozen(beam: _Beam) -> bool:
        # finished hypotheses and length-capped partials stop expanding
        return beam.finished or len(beam.ids) >= max_len

    for _ in range(max_len + 1):  # +1: the EOS step of a max_len-long gloss
        if all(frozen(b) for b in beams):
            break
        cand_logprob: list[float] = []
        cand_order: list[int] = []
        cand_token: list[int] = []
        cand_parent: list[_Beam] = []
        for order, beam in enumerate(beams):
            if frozen(beam):
                cand_logprob.append(beam.logprob)
                cand_order.append(order)
                cand_token.append(-1)
                cand_parent.append(beam)
                continue
            step = session.logprobs(list(beam.ids))
            for tok in range(step.shape[0]):
                cand_logprob.append(beam.logprob + float(step[tok]))
                cand_order.append(order)
                cand_token.append(tok)
                cand_parent.append(beam)
        ranking = np.lexsort(
            (np.array(cand_token), np.array(cand_order), -np.array(cand_logprob))
        )
        next_beams = []
        for idx in ranking[:width]:
            parent = cand_parent[idx]
            tok = cand_token[idx]
            if tok < 0:
                next_beams.append(parent)
            elif tok == eos:
                next_beams.append(_Beam(parent.ids, cand_logprob[idx], True))
            else:
                next_beams.append(_Beam(parent.ids + (tok,), cand_logprob[idx], False))
        beams = next_beams

    def to_hypothesis(beam: _Beam) -> BeamHypothesis:
        steps = len(beam.ids) + (1 if beam.finished else 0)
        return BeamHypothesis(
            tokens=model.tgt_vocab.decode(list(beam.ids)),
            logprob=beam.logprob,
            finished=beam.finished,
            steps=max(steps, 1),
        )

    finished = [b for b in beams if b.finished]
    pool = finished if finished else beams
    best = max(
        (to_hypothesis(b) for b in pool),
        key=lambda h: h.score(length_penalty),
    )
    return best


def greedy_decode(
    model: GlossTransformer, x: Sentence, max_len: int | None = None
) -> GlossSequence:
    """Per-step argmax decoding (ties to the lower id), stopping at EOS/max_len."""
    tokens, _ = greedy_decode_flagged(model, x, max_len)
    return tokens


def greedy_decode_flagged(
    model: GlossTransformer, x: Sentence, max_len: int | None = None
) -> tuple[GlossSequence, bool]:
    max_len = model.config.max_len if max_len is None else max_len
    session = model.start_decode(x)
    ids: list[int] = []
    for _ in range(max_len + 1):
        step = session.logprobs(ids)
        tok = int(np.argmax(step))  # first max = lowest id
        if tok == session.eos_id:
            return model.tgt_vocab.decode(ids), True
        ids.append(tok)
        if len(ids) >= max_len:
            break
    return model.tgt_vocab.decode(ids), False


@torch.no_grad()
def batch_greedy_decode(
    model: GlossTransformer,
    sentences: list[Sentence],
    max_len: int | None = None,
    batch_size: int = 64,
) -> list[tuple[GlossSequence, bool]]:
    """Greedy decode of many sentences, batched; order matches the input."""
    max_len = model.config.max_len if max_len is None else max_len
    pad = model.src_vocab.pad_id
    bos = model.tgt_vocab.bos_id
    eos = model.tgt_vocab.eos_id
    results: list[tuple[GlossSequence, bool]] = []
    with _mode(model, False):
        for start in range(0, len(sentences), batch_size):
            chunk = sentences[start : start + batch_size]
            encoded = [model.encode_source(s) for s in chunk]
            width = max(len(e) for e in encoded)
            src = torch.full((len(chunk), width), pad, dtype=torch.long)
            for i, e in enumerate(encoded):
                src[i, : len(e)] = torch.tensor(e)
            pad_mask = src.eq(pad)
            memory = model.encode_ids(src, pad_mask)
            prefix = torch.full((len(chunk), 1), bos, dtype=torch.long)
            done = np.zeros(len(chunk), dtype=bool)
            finished_eos = np.zeros(len(chunk), dtype=bool)
            outputs: list[list[int]] = [[] for _ in chunk]
            for _ in range(max_len + 1):
                logits = model.step_logits(memory, prefix, pad_mask)
                next_ids = np.argmax(logits.double().numpy(), axis=1)
                for i, tok in enumerate(next_ids):
                    if done[i]:
                        continue
                    if tok == eos:
                        done[i] = True
                        finished_eos[i] = True
                    else:
                        outputs[i].append(int(tok))
                        if len(outputs[i]) >= max_len:
                            done[i] = True
                if done.all():
                    break
                prefix = torch.cat([prefix, torch.tensor(next_ids).unsqueeze(1)], dim=1)
            for i, out_ids in enumerate(outputs):
                results.append((model.tgt_vocab.decode(out_ids), bool(finished_eos[i])))
    return results
