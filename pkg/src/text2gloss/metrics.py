"""Evaluation metrics: BLEU-1..4, ROUGE-L, chrF, low-frequency-gloss accuracy.

All scores are scaled to [0, 100]. BLEU is corpus-level with no smoothing:
any zero modified precision yields 0. ROUGE-L is the corpus mean of
per-sentence LCS F-scores. chrF works on character n-grams (orders 1..6,
beta=2) of the whitespace-joined token sequences with whitespace removed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .corpus import GlossSequence


def _check_corpus(hypotheses, references) -> None:
    if len(hypotheses) == 0:
        raise ValueError("empty evaluation corpus")
    if len(hypotheses) != len(references):
        raise ValueError(
            f"hypothesis/reference count mismatch: {len(hypotheses)} vs {len(references)}"
        )


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu_n(
    hypotheses: list[GlossSequence], references: list[GlossSequence], n: int = 4
) -> float:
    """Corpus BLEU with uniform weights over orders 1..n and brevity penalty."""
    if not 1 <= n <= 4:
        raise ValueError("BLEU order must be in 1..4")
    _check_corpus(hypotheses, references)
    correct = [0] * n
    total = [0] * n
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for order in range(1, n + 1):
            hyp_counts = _ngrams(hyp, order)
            ref_counts = _ngrams(ref, order)
            total[order - 1] += sum(hyp_counts.values())
            correct[order - 1] += sum((hyp_counts & ref_counts).values())
    if any(c == 0 or t == 0 for c, t in zip(correct, total)):
        return 0.0
    log_precision = sum(math.log(c / t) for c, t in zip(correct, total)) / n
    brevity = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * brevity * math.exp(log_precision)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for tok_a in a:
        cur = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            cur[j] = prev[j - 1] + 1 if tok_a == tok_b else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(
    hypotheses: list[GlossSequence],
    references: list[GlossSequence],
    beta: float = 1.2,
) -> float:
    """Corpus-mean ROUGE-L F-score (longest common subsequence based)."""
    _check_corpus(hypotheses, references)
    beta2 = beta * beta
    scores = []
    for hyp, ref in zip(hypotheses, references):
        if not hyp or not ref:
            scores.append(1.0 if not hyp and not ref else 0.0)
            continue
        lcs = _lcs_length(hyp, ref)
        if lcs == 0:
            scores.append(0.0)
            continue
        precision = lcs / len(hyp)
        recall = lcs / len(ref)
        scores.append((1 + beta2) * precision * recall / (recall + beta2 * precision))
    return 100.0 * sum(scores) / len(scores)


def _char_ngrams(chars: str, n: int) -> Counter:
    return Counter(chars[i : i + n] for i in range(len(chars) - n + 1))


def chrf(
    hypotheses: list[GlossSequence],
    references: list[GlossSequence],
    order: int = 6,
    beta: float = 2.0,
) -> float:
    """Corpus chrF: macro-averaged character n-gram precision/recall F-score."""
    _check_corpus(hypotheses, references)
    hyp_totals = [0] * order
    ref_totals = [0] * order
    matches = [0] * order
    for hyp, ref in zip(hypotheses, references):
        hyp_chars = "".join(hyp)
        ref_chars = "".join(ref)
        for i in range(order):
            hyp_counts = _char_ngrams(hyp_chars, i + 1)
            ref_counts = _char_ngrams(ref_chars, i + 1)
            hyp_totals[i] += sum(hyp_counts.values())
            ref_totals[i] += sum(ref_counts.values())
            matches[i] += sum((hyp_counts & ref_counts).values())
    precision = 0.0
    recall = 0.0
    effective = 0
    for i in range(order):
        if hyp_totals[i] > 0 and ref_totals[i] > 0:
            precision += matches[i] / hyp_totals[i]
            recall += matches[i] / ref_totals[i]
            effective += 1
    if effective == 0:
        return 0.0
    precision /= effective
    recall /= effective
    if precision + recall == 0.0:
        return 0.0
    beta2 = beta * beta
    return 100.0 * (1 + beta2) * precision * recall / (beta2 * precision + recall)


@dataclass
class LowFreqResult:
    amount: int  # samples whose reference contains a low-frequency gloss
    accuracy: float | None  # 100 * covered / amount, None when amount == 0


def low_freq_accuracy(
    hypotheses: list[GlossSequence],
    references: list[GlossSequence],
    train_gloss_counts: dict[str, int],
    thresholds: list[int],
) -> dict[int, LowFreqResult]:
    """Translation accuracy restricted to low-frequency glosses.

    For each threshold t, a gloss is low-frequency when its gold-train count
    is <= t. A sample counts as correct when the hypothesis contains every
    low-frequency gloss of its reference.
    """
    _check_corpus(hypotheses, references)
    out: dict[int, LowFreqResult] = {}
    for threshold in thresholds:
        amount = 0
        covered = 0
        for hyp, ref in zip(hypotheses, references):
            rare = {g for g in ref if train_gloss_counts.get(g, 0) <= threshold}
            if not rare:
                continue
            amount += 1
            if rare.issubset(set(hyp)):
                covered += 1
        out[threshold] = LowFreqResult(
            amount=amount,
            accuracy=100.0 * covered / amount if amount else None,
        )
    return out


@dataclass
class EvalReport:
    rouge: float
    bleu: dict[int, float]
    chrf: float
    low_freq: dict[int, LowFreqResult] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "rouge": self.rouge,
            "bleu": {str(n): score for n, score in sorted(self.bleu.items())},
            "chrf": self.chrf,
        }
        if self.low_freq:
            out["low_freq"] = {
                str(t): {"amount": r.amount, "accuracy": r.accuracy}
                for t, r in sorted(self.low_freq.items())
            }
        return out


DEFAULT_LOW_FREQ_THRESHOLDS = (3, 6, 8, 10, 15)


def evaluate_corpus(
    hypotheses: list[GlossSequence],
    references: list[GlossSequence],
    train_gloss_counts: dict[str, int] | None = None,
    thresholds: tuple[int, ...] = DEFAULT_LOW_FREQ_THRESHOLDS,
) -> EvalReport:
    """Full report: ROUGE-L, BLEU-1..4, chrF, and low-frequency accuracy."""
    return EvalReport(
        rouge=rouge_l(hypotheses, references),
        bleu={n: bleu_n(hypotheses, references, n) for n in range(1, 5)},
        chrf=chrf(hypotheses, references),
        low_freq=(
            low_freq_accuracy(hypotheses, references, train_gloss_counts, list(thresholds))
            if train_gloss_counts is not None
            else {}
        ),
    )
