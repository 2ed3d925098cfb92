"""Outer self-training loop.

Each iteration re-initializes a fresh model, builds a synthetic dataset for
the monolingual corpus (rule-based pseudo glosses at first, later a 50/50
per-sentence mix of rule-based and model-based ones, each input marked with a
provenance tag), pre-trains on gold + synthetic, fine-tunes on gold, and
keeps the best checkpoint so far by dev BLEU-4. Pre-training epochs grow
linearly across iterations.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import (
    TAG_MODEL,
    TAG_RULE,
    MonolingualCorpus,
    ParallelCorpus,
    Vocabulary,
    build_vocabulary,
)
from .decoding import batch_greedy_decode
from .model import (
    GlossTransformer,
    TransformerConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
)
from .rules import SOURCE_MODEL, SOURCE_RULE, SyntheticPair, write_synthetic
from .training import (
    RampSchedule,
    StageConfig,
    TrainLog,
    train_stage_one,
    train_stage_two,
)

_TAG_FOR_SOURCE = {SOURCE_RULE: TAG_RULE, SOURCE_MODEL: TAG_MODEL}


@dataclass
class SyntheticDataset:
    """Tagged pseudo-labeled pairs used for one iteration's pre-training."""

    pairs: list[SyntheticPair]
    iteration: int  # k - 1: which model (if any) produced the model-based side
    mix_seed: int


@dataclass
class IterationSchedule:
    """Iteration count, growing pre-training epochs, ramp, and seeds."""

    iterations: int = 4  # K
    pretrain_epochs: int = 15  # first-iteration epochs
    epoch_growth: int = 10  # added per subsequent iteration
    ramp: RampSchedule = field(default_factory=RampSchedule)
    seeds: list[int] = field(default_factory=list)

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("need at least one iteration")
        if self.pretrain_epochs < 0 or self.epoch_growth < 0:
            raise ValueError("epoch schedule must be non-negative")
        if not self.seeds:
            self.seeds = [11 + 101 * k for k in range(self.iterations)]
        if len(self.seeds) < self.iterations:
            raise ValueError("need one seed per iteration")

    def epochs_for(self, k: int) -> int:
        if k < 1:
            raise ValueError("iterations are numbered from 1")
        return self.pretrain_epochs + self.epoch_growth * (k - 1)

    def seed_for(self, k: int) -> int:
        return self.seeds[k - 1]

    def mix_seed_for(self, k: int) -> int:
        return self.seeds[k - 1] * 1_009 + k


def model_annotate(
    model: GlossTransformer,
    mono: MonolingualCorpus,
    batch_size: int = 64,
) -> list[SyntheticPair]:
    """Greedy (width-1) pseudo glosses for every monolingual sentence.

    Deterministic given the checkpoint; decodes that hit the length cap are
    flagged truncated rather than dropped.
    """
    decoded = batch_greedy_decode(model, mono.sentences, batch_size=batch_size)
    return [
        SyntheticPair(
            text=list(sent),
            gloss=gloss,
            source=SOURCE_MODEL,
            truncated=not finished,
        )
        for sent, (gloss, finished) in zip(mono.sentences, decoded)
    ]


def _tagged(pair: SyntheticPair, iteration: int) -> SyntheticPair:
    tag = _TAG_FOR_SOURCE[pair.source]
    return SyntheticPair(
        text=[tag, *pair.text],
        gloss=list(pair.gloss),
        source=pair.source,
        iteration=iteration,
        truncated=pair.truncated,
    )


def mix_synthetic(
    rule: list[SyntheticPair] | None,
    model_based: list[SyntheticPair] | None,
    seed: int,
    iteration: int = 0,
) -> SyntheticDataset:
    """Per-sentence 50/50 choice between the aligned rule and model glosses.

    Either side may be absent (then the other is taken wholesale). The chosen
    pair's source sentence gets the tag matching its origin prepended.
    """
    if rule is None and model_based is None:
        raise ValueError("at least one synthetic source is required")
    if rule is not None and model_based is not None:
        if len(rule) != len(model_based):
            raise ValueError(
                f"rule/model datasets are not aligned: {len(rule)} vs {len(model_based)}"
            )
        for i, (r, m) in enumerate(zip(rule, model_based)):
            if r.text != m.text:
                raise ValueError(f"rule/model pair {i} wraps different sentences")
        rng = random.Random(seed)
        chosen = [r if rng.random() < 0.5 else m for r, m in zip(rule, model_based)]
    else:
        chosen = rule if rule is not None else model_based
    return SyntheticDataset(
        pairs=[_tagged(p, iteration) for p in chosen],
        iteration=iteration,
        mix_seed=seed,
    )


@dataclass
class SelfTrainState:
    """Carries the running best checkpoint and cached annotations across iterations."""

    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    rule_pairs: list[SyntheticPair] | None
    best_model: GlossTransformer | None = None
    best_score: float = float("-inf")
    manifests: list[dict] = field(default_factory=list)


def run_iteration(
    k: int,
    state: SelfTrainState,
    gold: ParallelCorpus,
    dev: ParallelCorpus,
    mono: MonolingualCorpus,
    schedule: IterationSchedule,
    model_config: TransformerConfig,
    stage_cfg: StageConfig,
    synthetic_source: str = "both",
    p_drop: float = 0.1,
    window: int = 3,
    output_dir: Path | None = None,
    log: TrainLog | None = None,
) -> tuple[GlossTransformer, dict]:
    """One self-training iteration; updates the running best in `state`."""
    if k < 1:
        raise ValueError("iterations are numbered from 1")
    epochs = schedule.epochs_for(k)
    seed = schedule.seed_for(k)
    mix_seed = schedule.mix_seed_for(k)

    model_pairs = None
    if synthetic_source in ("both", "model") and k > 1:
        if state.best_model is None:
            raise ValueError(f"iteration {k} needs a best checkpoint from earlier iterations")
        model_pairs = model_annotate(state.best_model, mono)
    rule_pairs = state.rule_pairs if synthetic_source in ("both", "rule") else None

    if rule_pairs is None and model_pairs is None:
        dataset = SyntheticDataset(pairs=[], iteration=k - 1, mix_seed=mix_seed)
    else:
        dataset = mix_synthetic(rule_pairs, model_pairs, mix_seed, iteration=k - 1)

    model = init_model(model_config, state.src_vocab, state.tgt_vocab, seed=seed)
    model, step = train_stage_one(
        model,
        gold,
        dataset.pairs,
        epochs,
        stage_cfg,
        schedule.ramp,
        seed=seed,
        p_drop=p_drop,
        window=window,
        log=log,
        iteration=k,
    )
    result = train_stage_two(
        model,
        gold,
        dev,
        stage_cfg,
        schedule.ramp,
        seed=seed,
        start_step=step,
        log=log,
        iteration=k,
    )

    if result.best_dev_bleu4 > state.best_score or state.best_model is None:
        state.best_score = result.best_dev_bleu4
        state.best_model = result.model

    manifest = {
        "iteration": k,
        "pretrain_epochs": epochs,
        "mix_seed": mix_seed,
        "synthetic_size": len(dataset.pairs),
        "dev": {"bleu4": result.best_dev_bleu4},
        "best_dev_bleu4_so_far": state.best_score,
        "finetune_epochs": result.epochs_run,
    }
    if output_dir is not None:
        iter_dir = output_dir / f"iter_{k}"
        iter_dir.mkdir(parents=True, exist_ok=True)
        manifest["checkpoint"] = f"iter_{k}/model.pt"
        manifest["synthetic"] = f"iter_{k}/synthetic.jsonl"
        write_synthetic(dataset.pairs, output_dir / manifest["synthetic"])
        save_checkpoint(
            result.model,
            output_dir / manifest["checkpoint"],
            extra={"iteration": k, "dev_bleu4": result.best_dev_bleu4},
        )
        with open(iter_dir / "manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
    state.manifests.append(manifest)
    return state.best_model, manifest


def _load_completed(output_dir: Path, k: int) -> dict | None:
    manifest_path = output_dir / f"iter_{k}" / "manifest.json"
    if not manifest_path.exists():
        return None
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    ckpt = manifest.get("checkpoint")
    if ckpt is None or not (output_dir / ckpt).exists():
        return None
    return manifest


def run_self_training(
    gold: ParallelCorpus,
    dev: ParallelCorpus,
    mono: MonolingualCorpus,
    schedule: IterationSchedule,
    model_config: TransformerConfig,
    stage_cfg: StageConfig,
    rule_pairs: list[SyntheticPair] | None,
    synthetic_source: str = "both",
    p_drop: float = 0.1,
    window: int = 3,
    output_dir: str | Path | None = None,
    resume: bool = True,
    log: TrainLog | None = None,
) -> tuple[GlossTransformer, list[dict]]:
    """Run iterations 1..K and return the globally best model + manifests.

    With an output directory, each iteration persists its synthetic data,
    checkpoint, and manifest; an interrupted run resumes after the last
    completed iteration.
    """
    if synthetic_source not in ("both", "rule", "model"):
        raise ValueError(f"unknown synthetic_source: {synthetic_source!r}")
    if synthetic_source in ("both", "rule") and rule_pairs is None:
        raise ValueError(f"synthetic_source={synthetic_source!r} requires rule annotations")
    out_path = Path(output_dir) if output_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    src_vocab = build_vocabulary(gold, "text")
    tgt_vocab = build_vocabulary(gold, "gloss")
    state = SelfTrainState(
        src_vocab=src_vocab,
        tgt_vocab=tgt_vocab,
        rule_pairs=rule_pairs if synthetic_source in ("both", "rule") else None,
    )

    for k in range(1, schedule.iterations + 1):
        manifest = _load_completed(out_path, k) if (resume and out_path is not None) else None
        if manifest is not None:
            model, extra = load_checkpoint(out_path / manifest["checkpoint"])
            score = float(extra.get("dev_bleu4", manifest["dev"]["bleu4"]))
            if score > state.best_score or state.best_model is None:
                state.best_score = score
                state.best_model = model
            state.manifests.append(manifest)
            continue
        run_iteration(
            k,
            state,
            gold,
            dev,
            mono,
            schedule,
            model_config,
            stage_cfg,
            synthetic_source=synthetic_source,
            p_drop=p_drop,
            window=window,
            output_dir=out_path,
            log=log,
        )

    if out_path is not None and state.best_model is not None:
        save_checkpoint(
            state.best_model,
            out_path / "best.pt",
            extra={"dev_bleu4": state.best_score},
        )
    return state.best_model, state.manifests


def filter_mono(mono: MonolingualCorpus, max_len: int) -> tuple[MonolingualCorpus, int]:
    """Drop monolingual sentences the model cannot encode; returns (kept, dropped)."""
    kept = [s for s in mono.sentences if len(s) <= max_len]
    return MonolingualCorpus(kept), len(mono.sentences) - len(kept)


def resolve_ramp_steps(
    ramp_steps: int | None,
    gold_size: int,
    synthetic_size: int,
    first_epochs: int,
    batch_size: int,
) -> int:
    """Default ramp length: the number of stage-one steps in iteration 1."""
    if ramp_steps is not None:
        return ramp_steps
    per_epoch = max(1, math.ceil((gold_size + synthetic_size) / batch_size))
    return max(1, per_epoch * first_epochs)
