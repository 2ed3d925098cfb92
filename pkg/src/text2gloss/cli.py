"""Command-line entry points: build-vocab, stats, annotate, train, iterate,
evaluate, decode. Errors leave exit code 1 and a JSON error line on stderr."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import corpus as corpus_mod
from .config import RunConfig, load_config
from .corpus import (
    MonolingualCorpus,
    ParallelCorpus,
    build_vocabulary,
    corpus_stats,
    load_monolingual_corpus,
    load_parallel_corpus,
    token_counts,
)
from .decoding import beam_search
from .metrics import evaluate_corpus
from .model import init_model, load_checkpoint, save_checkpoint
from .rules import (
    EmbeddingLexicon,
    LemmaTable,
    SyntheticPair,
    annotate_corpus_rule,
    read_synthetic,
    write_synthetic,
)
from .selftrain import (
    IterationSchedule,
    filter_mono,
    mix_synthetic,
    model_annotate,
    resolve_ramp_steps,
    run_self_training,
)
from .training import (
    RampSchedule,
    StageConfig,
    TrainLog,
    train_stage_one,
    train_stage_two,
)


def _info(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True))


def _load_gold(config: RunConfig, split: str) -> ParallelCorpus:
    path = getattr(config.data, split)
    if path is None:
        raise ValueError(f"config has no data.{split} path")
    return load_parallel_corpus(path, config.data.format)


def _vocabs(config: RunConfig, gold: ParallelCorpus):
    src = build_vocabulary(gold, "text", config.min_count)
    tgt = build_vocabulary(gold, "gloss", config.min_count)
    return src, tgt


def _stage_config(config: RunConfig) -> StageConfig:
    return StageConfig(
        learning_rate=config.optim.learning_rate,
        batch_size=config.optim.batch_size,
        patience=config.optim.patience,
        max_epochs=config.optim.max_finetune_epochs,
        eval_beam_width=config.optim.eval_beam_width,
        cr_in_finetune=config.consistency.during_finetune,
    )


def _rule_annotations(config: RunConfig, mono: MonolingualCorpus, src_vocab, tgt_vocab):
    if config.language == "zh":
        config.validate(require=("lexicon",))
        lexicon = EmbeddingLexicon.load(config.data.lexicon)
        return annotate_corpus_rule(mono, "zh", src_vocab, tgt_vocab, lexicon=lexicon)
    config.validate(require=("lemmas",))
    lemmas = LemmaTable.load(config.data.lemmas)
    return annotate_corpus_rule(mono, "de", src_vocab, tgt_vocab, lemmas=lemmas)


def _load_mono(config: RunConfig) -> tuple[MonolingualCorpus, int]:
    config.validate(require=("monolingual",))
    mono = load_monolingual_corpus(config.data.monolingual)
    cap = config.mono_max_len
    if cap is None:
        cap = config.model.max_len - 1  # room for the provenance tag
    return filter_mono(mono, cap)


def _ensure_tagged(pairs: list[SyntheticPair]) -> list[SyntheticPair]:
    tags = (corpus_mod.TAG_RULE, corpus_mod.TAG_MODEL)
    out = []
    for pair in pairs:
        if pair.text and pair.text[0] in tags:
            out.append(pair)
        else:
            tag = corpus_mod.TAG_RULE if pair.source == "rule" else corpus_mod.TAG_MODEL
            out.append(
                SyntheticPair(
                    text=[tag, *pair.text],
                    gloss=list(pair.gloss),
                    source=pair.source,
                    iteration=pair.iteration,
                    truncated=pair.truncated,
                )
            )
    return out


def cmd_build_vocab(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train",))
    gold = _load_gold(config, "train")
    src, tgt = _vocabs(config, gold)
    out_dir = Path(args.out or config.data.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    src.save(out_dir / "vocab.src.txt")
    tgt.save(out_dir / "vocab.tgt.txt")
    _emit(
        {
            "src_vocab": str(out_dir / "vocab.src.txt"),
            "tgt_vocab": str(out_dir / "vocab.tgt.txt"),
            "src_size": len(src),
            "tgt_size": len(tgt),
        }
    )


def cmd_stats(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train",))
    gold = _load_gold(config, "train")
    src, tgt = _vocabs(config, gold)
    if args.split == "mono":
        mono = load_monolingual_corpus(config.data.monolingual)
        _emit(corpus_stats(mono, src))
        return
    split = gold if args.split == "train" else _load_gold(config, args.split)
    _emit(corpus_stats(split, src, tgt))


def cmd_annotate(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train",))
    mono, dropped = _load_mono(config)
    if dropped:
        _info(f"dropped {dropped} over-length monolingual sentences")
    if args.mode == "rule":
        gold = _load_gold(config, "train")
        src, tgt = _vocabs(config, gold)
        pairs = _rule_annotations(config, mono, src, tgt)
    else:
        if not args.checkpoint:
            raise ValueError("annotate --mode model requires --checkpoint")
        model, _ = load_checkpoint(args.checkpoint)
        pairs = model_annotate(model, mono)
    write_synthetic(pairs, args.out)
    _emit({"written": args.out, "pairs": len(pairs), "mode": args.mode})


def cmd_train(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train", "dev"))
    gold = _load_gold(config, "train")
    dev = _load_gold(config, "dev")
    src, tgt = _vocabs(config, gold)
    stage_cfg = _stage_config(config)
    synthetic = []
    if args.synthetic:
        synthetic = _ensure_tagged(read_synthetic(args.synthetic))
    epochs = config.schedule.pretrain_epochs if synthetic else 0
    ramp = RampSchedule(
        target_w=config.consistency.weight,
        ramp_steps=resolve_ramp_steps(
            config.consistency.ramp_steps,
            len(gold),
            len(synthetic),
            max(config.schedule.pretrain_epochs, 1),
            stage_cfg.batch_size,
        ),
    )
    out_dir = Path(config.data.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    log = TrainLog(out_dir / "train_log.jsonl")
    model = init_model(config.model, src, tgt, seed=config.seed)
    step = 0
    if epochs > 0:
        model, step = train_stage_one(
            model,
            gold,
            synthetic,
            epochs,
            stage_cfg,
            ramp,
            seed=config.seed,
            p_drop=config.augment.drop_prob,
            window=config.augment.shuffle_window,
            log=log,
        )
    result = train_stage_two(
        model, gold, dev, stage_cfg, ramp, seed=config.seed, start_step=step, log=log
    )
    ckpt = args.out or str(out_dir / "model.pt")
    save_checkpoint(result.model, ckpt, extra={"dev_bleu4": result.best_dev_bleu4})
    _emit(
        {
            "checkpoint": ckpt,
            "dev_bleu4": result.best_dev_bleu4,
            "pretrain_epochs": epochs,
            "finetune_epochs": result.epochs_run,
        }
    )


def cmd_iterate(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train", "dev", "monolingual"))
    gold = _load_gold(config, "train")
    dev = _load_gold(config, "dev")
    mono, dropped = _load_mono(config)
    if dropped:
        _info(f"dropped {dropped} over-length monolingual sentences")
    src, tgt = _vocabs(config, gold)
    out_dir = Path(config.data.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rule_pairs = None
    if config.synthetic_source in ("both", "rule"):
        cache = out_dir / "rule_synthetic.jsonl"
        if args.resume and cache.exists():
            rule_pairs = read_synthetic(cache)
            _info(f"loaded cached rule annotations: {len(rule_pairs)} pairs")
        else:
            rule_pairs = _rule_annotations(config, mono, src, tgt)
            write_synthetic(rule_pairs, cache)

    synthetic_size = len(mono) if config.synthetic_source != "model" else 0
    ramp = RampSchedule(
        target_w=config.consistency.weight,
        ramp_steps=resolve_ramp_steps(
            config.consistency.ramp_steps,
            len(gold),
            synthetic_size,
            config.schedule.pretrain_epochs,
            config.optim.batch_size,
        ),
    )
    schedule = IterationSchedule(
        iterations=config.schedule.iterations,
        pretrain_epochs=config.schedule.pretrain_epochs,
        epoch_growth=config.schedule.epoch_growth,
        ramp=ramp,
        seeds=[config.seed + 101 * k for k in range(config.schedule.iterations)],
    )
    log = TrainLog(out_dir / "train_log.jsonl")
    best_model, manifests = run_self_training(
        gold,
        dev,
        mono,
        schedule,
        config.model,
        _stage_config(config),
        rule_pairs,
        synthetic_source=config.synthetic_source,
        p_drop=config.augment.drop_prob,
        window=config.augment.shuffle_window,
        output_dir=out_dir,
        resume=args.resume,
        log=log,
    )
    _emit(
        {
            "best_checkpoint": str(out_dir / "best.pt"),
            "iterations": [
                {"iteration": m["iteration"], "dev_bleu4": m["dev"]["bleu4"]}
                for m in manifests
            ],
            "best_dev_bleu4": max(m["dev"]["bleu4"] for m in manifests),
        }
    )


def _decode_corpus(model, sentences, width: int, length_penalty: float):
    return [
        beam_search(model, x, width=width, length_penalty=length_penalty).tokens
        for x in sentences
    ]


def cmd_evaluate(args) -> None:
    config = load_config(args.config)
    config.validate(require=("train",))
    split = _load_gold(config, args.split)
    model, _ = load_checkpoint(args.checkpoint)
    hyps = _decode_corpus(
        model, split.texts(), config.decode.beam_width, config.decode.length_penalty
    )
    counts = token_counts(_load_gold(config, "train"), "gloss")
    report = evaluate_corpus(hyps, split.glosses(), train_gloss_counts=counts)
    if args.hyp_out:
        Path(args.hyp_out).write_text(
            "\n".join(" ".join(h) for h in hyps) + "\n", encoding="utf-8"
        )
    _emit(report.to_dict())


def cmd_decode(args) -> None:
    config = load_config(args.config)
    model, _ = load_checkpoint(args.checkpoint)
    sentences = load_monolingual_corpus(args.input).sentences
    width = args.width or config.decode.beam_width
    penalty = config.decode.length_penalty if args.length_penalty is None else args.length_penalty
    hyps = _decode_corpus(model, sentences, width, penalty)
    with open(args.output, "w", encoding="utf-8") as fh:
        for h in hyps:
            fh.write(" ".join(h) + "\n")
    _emit({"written": args.output, "sentences": len(hyps)})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="text2gloss",
        description="Semi-supervised text-to-gloss translation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="write source/target vocabulary files")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None, help="output directory (default: data.output_dir)")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("stats", help="corpus statistics vs the train vocabularies")
    p.add_argument("--config", required=True)
    p.add_argument("--split", choices=["train", "dev", "test", "mono"], default="train")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("annotate", help="write pseudo-gloss JSONL for monolingual text")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=["rule", "model"], required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", default=None, help="required for --mode model")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("train", help="two-stage training (one model, no iteration loop)")
    p.add_argument("--config", required=True)
    p.add_argument("--synthetic", default=None, help="synthetic JSONL for stage one")
    p.add_argument("--out", default=None, help="checkpoint path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("iterate", help="full iterative self-training loop")
    p.add_argument("--config", required=True)
    p.add_argument("--no-resume", dest="resume", action="store_false")
    p.set_defaults(func=cmd_iterate, resume=True)

    p = sub.add_parser("evaluate", help="decode a split and report metrics")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "dev", "test"], default="dev")
    p.add_argument("--hyp-out", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("decode", help="gloss-per-line output for sentence-per-line input")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--width", type=int, default=None)
    p.add_argument("--length-penalty", type=float, default=None)
    p.set_defaults(func=cmd_decode)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(json.dumps({"error": str(exc), "command": args.command}), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
