"""Corpus loading, whitespace tokenization, vocabularies and statistics.

Corpora ship pre-segmented: both the spoken-language side and the gloss side
are tokenized by whitespace. Parallel files are TSV (text TAB gloss) or JSONL
({"text": ..., "gloss": ...}); monolingual files hold one sentence per line.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

# Reserved tokens occupy the lowest vocabulary ids, in this order.
PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
TAG_RULE, TAG_MODEL = "<rule>", "<model>"
RESERVED = (PAD, BOS, EOS, UNK, TAG_RULE, TAG_MODEL)

Sentence = list[str]
GlossSequence = list[str]


class CorpusError(ValueError):
    """Malformed corpus file or record."""


def tokenize(line: str) -> list[str]:
    return line.split()


@dataclass(frozen=True)
class ParallelCorpus:
    """Gold text-gloss pairs. Text tokens are never empty; glosses may be."""

    pairs: list[tuple[Sentence, GlossSequence]]

    def __len__(self) -> int:
        return len(self.pairs)

    def texts(self) -> list[Sentence]:
        return [t for t, _ in self.pairs]

    def glosses(self) -> list[GlossSequence]:
        return [g for _, g in self.pairs]


@dataclass(frozen=True)
class MonolingualCorpus:
    """Unlabeled spoken-language sentences."""

    sentences: list[Sentence]

    def __len__(self) -> int:
        return len(self.sentences)


def load_parallel_corpus(path: str | Path, fmt: str = "tsv") -> ParallelCorpus:
    """Load a parallel corpus from `path` in `fmt` ("tsv" or "jsonl").

    Records are returned in file order. Raises CorpusError naming the line
    number for malformed records, and on empty files.
    """
    path = Path(path)
    if fmt not in ("tsv", "jsonl"):
        raise CorpusError(f"unknown corpus format: {fmt!r}")
    pairs: list[tuple[Sentence, GlossSequence]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n")
            if not line.strip():
                continue
            if fmt == "tsv":
                cols = line.split("\t")
                if len(cols) != 2:
                    raise CorpusError(
                        f"{path}:{lineno}: expected 2 tab-separated columns, got {len(cols)}"
                    )
                text_str, gloss_str = cols
            else:
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                if not isinstance(record, dict) or "text" not in record or "gloss" not in record:
                    raise CorpusError(f"{path}:{lineno}: record must have 'text' and 'gloss' fields")
                text_str, gloss_str = str(record["text"]), str(record["gloss"])
            text = tokenize(text_str)
            if not text:
                raise CorpusError(f"{path}:{lineno}: empty text field")
            pairs.append((text, tokenize(gloss_str)))
    if not pairs:
        raise CorpusError(f"{path}: corpus is empty")
    return ParallelCorpus(pairs)


def load_monolingual_corpus(path: str | Path) -> MonolingualCorpus:
    """Load unlabeled sentences, one per line; blank lines are skipped."""
    sentences = []
    with open(path, encoding="utf-8") as fh:
        for raw in fh:
            tokens = tokenize(raw)
            if tokens:
                sentences.append(tokens)
    return MonolingualCorpus(sentences)


class Vocabulary:
    """Bijective token<->id map with reserved tokens at the lowest ids.

    Out-of-vocabulary tokens encode to the <unk> id; decoding is exact for
    every id the vocabulary holds.
    """

    def __init__(self, tokens: list[str]):
        self.id_to_token: list[str] = list(RESERVED)
        for tok in tokens:
            if tok in RESERVED:
                continue
            self.id_to_token.append(tok)
        self.token_to_id = {tok: i for i, tok in enumerate(self.id_to_token)}
        if len(self.token_to_id) != len(self.id_to_token):
            dupes = [t for t, c in Counter(self.id_to_token).items() if c > 1]
            raise ValueError(f"duplicate vocabulary tokens: {dupes}")

    # reserved ids, fixed by construction
    @property
    def pad_id(self) -> int:
        return self.token_to_id[PAD]

    @property
    def bos_id(self) -> int:
        return self.token_to_id[BOS]

    @property
    def eos_id(self) -> int:
        return self.token_to_id[EOS]

    @property
    def unk_id(self) -> int:
        return self.token_to_id[UNK]

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_id

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.id_to_token == other.id_to_token

    def non_reserved(self) -> list[str]:
        return self.id_to_token[len(RESERVED):]

    def encode(self, tokens: list[str]) -> list[int]:
        unk = self.unk_id
        return [self.token_to_id.get(tok, unk) for tok in tokens]

    def decode(self, ids: list[int]) -> list[str]:
        return [self.id_to_token[i] for i in ids]

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.id_to_token) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if tuple(lines[: len(RESERVED)]) != RESERVED:
            raise ValueError(f"{path}: missing or reordered reserved-token header")
        return cls(lines[len(RESERVED):])


def side_tokens(corpus: ParallelCorpus | MonolingualCorpus, side: str) -> list[list[str]]:
    if isinstance(corpus, MonolingualCorpus):
        if side != "text":
            raise ValueError("monolingual corpora only have a text side")
        return corpus.sentences
    if side == "text":
        return corpus.texts()
    if side == "gloss":
        return corpus.glosses()
    raise ValueError(f"unknown side: {side!r}")


def build_vocabulary(
    corpus: ParallelCorpus, side: str, min_count: int = 1
) -> Vocabulary:
    """Build a vocabulary from one side of a corpus.

    Tokens with frequency >= min_count are kept, ordered by descending
    frequency with lexicographic tie-break; reserved tokens come first.
    """
    if len(corpus) == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    freqs = Counter()
    for tokens in side_tokens(corpus, side):
        freqs.update(tokens)
    kept = [(tok, n) for tok, n in freqs.items() if n >= min_count]
    kept.sort(key=lambda item: (-item[1], item[0]))
    return Vocabulary([tok for tok, _ in kept])


def token_counts(corpus: ParallelCorpus, side: str) -> dict[str, int]:
    """Raw frequency map for one corpus side (used for low-frequency metrics)."""
    freqs = Counter()
    for tokens in side_tokens(corpus, side):
        freqs.update(tokens)
    return dict(freqs)


def _side_stats(sentences: list[list[str]], vocab: Vocabulary) -> dict:
    total = 0
    oov = 0
    distinct = set()
    for tokens in sentences:
        total += len(tokens)
        distinct.update(tokens)
        oov += sum(1 for tok in tokens if tok not in vocab)
    return {"vocab": len(distinct), "total_tokens": total, "total_oov": oov}


def corpus_stats(
    corpus: ParallelCorpus | MonolingualCorpus,
    vocab_text: Vocabulary,
    vocab_gloss: Vocabulary | None = None,
) -> dict:
    """Per-side statistics of a corpus against reference (train) vocabularies.

    Reports the sentence count plus, per side, the number of distinct tokens,
    total tokens, and total occurrences of tokens missing from the reference
    vocabulary.
    """
    out: dict = {"sentences": len(corpus)}
    out["text"] = _side_stats(side_tokens(corpus, "text"), vocab_text)
    if isinstance(corpus, ParallelCorpus) and vocab_gloss is not None:
        out["gloss"] = _side_stats(side_tokens(corpus, "gloss"), vocab_gloss)
    return out
