"""Rule-based pseudo-gloss annotation for monolingual text.

Two language-specific rule sets map a spoken sentence to a gloss sequence of
the same length, token by token:

* zh: words outside the spoken vocabulary become <unk>; every other word is
  replaced by the most embedding-similar gloss in the gloss vocabulary
  (dot product of L2-normalized vectors, ties to the lower gloss id).
* de: words outside the spoken vocabulary become <unk>; the rest are
  lemmatized, matched case-insensitively against the gloss vocabulary, and a
  lemma contained in exactly one compound gloss is promoted to that compound.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .corpus import (
    UNK,
    GlossSequence,
    MonolingualCorpus,
    Sentence,
    Vocabulary,
)

SOURCE_RULE = "rule"
SOURCE_MODEL = "model"


@dataclass
class SyntheticPair:
    """A monolingual sentence paired with a pseudo gloss and its provenance."""

    text: Sentence
    gloss: GlossSequence
    source: str  # SOURCE_RULE | SOURCE_MODEL
    iteration: int = 0
    truncated: bool = False

    def to_json(self) -> str:
        record = {
            "text": " ".join(self.text),
            "gloss": " ".join(self.gloss),
            "source": self.source,
            "iteration": self.iteration,
        }
        if self.truncated:
            record["truncated"] = True
        return json.dumps(record, ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "SyntheticPair":
        record = json.loads(line)
        return cls(
            text=record["text"].split(),
            gloss=record["gloss"].split(),
            source=record["source"],
            iteration=int(record.get("iteration", 0)),
            truncated=bool(record.get("truncated", False)),
        )


def write_synthetic(pairs: list[SyntheticPair], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(pair.to_json() + "\n")


def read_synthetic(path: str | Path) -> list[SyntheticPair]:
    with open(path, encoding="utf-8") as fh:
        return [SyntheticPair.from_json(line) for line in fh if line.strip()]


class EmbeddingLexicon:
    """Word embeddings for lexical similarity, one `token v1 .. vd` per line."""

    def __init__(self, entries: dict[str, np.ndarray]):
        if not entries:
            raise ValueError("empty embedding lexicon")
        dims = {v.shape for v in entries.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dimensions: {sorted(dims)}")
        self.dim = next(iter(dims))[0]
        self._units: dict[str, np.ndarray] = {}
        for tok, vec in entries.items():
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                raise ValueError(f"zero embedding vector for token {tok!r}")
            self._units[tok] = vec.astype(np.float64) / norm

    def __contains__(self, token: str) -> bool:
        return token in self._units

    def __len__(self) -> int:
        return len(self._units)

    def unit(self, token: str) -> np.ndarray:
        """L2-normalized vector for `token`; KeyError signals a lexicon miss."""
        return self._units[token]

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingLexicon":
        entries: dict[str, np.ndarray] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                parts = raw.split()
                if not parts:
                    continue
                try:
                    vec = np.array([float(x) for x in parts[1:]], dtype=np.float64)
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad embedding value: {exc}") from exc
                if vec.size == 0:
                    raise ValueError(f"{path}:{lineno}: token without vector")
                entries[parts[0]] = vec
        return cls(entries)


class LemmaTable:
    """Surface-form -> lemma map; identity for forms outside the table.

    Lemmatization must be idempotent: a lemma that re-enters the table has to
    map to itself, so chained entries are rejected at construction.
    """

    def __init__(self, entries: dict[str, str]):
        for surface, lemma in entries.items():
            if not lemma:
                raise ValueError(f"empty lemma for surface form {surface!r}")
            if lemma in entries and entries[lemma] != lemma:
                raise ValueError(
                    f"non-idempotent lemma chain: {surface!r} -> {lemma!r} -> {entries[lemma]!r}"
                )
        self.entries = dict(entries)

    def lemma(self, token: str) -> str:
        return self.entries.get(token, token)

    @classmethod
    def load(cls, path: str | Path) -> "LemmaTable":
        entries: dict[str, str] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\n")
                if not line.strip():
                    continue
                cols = line.split("\t")
                if len(cols) != 2:
                    raise ValueError(f"{path}:{lineno}: expected 'surface TAB lemma'")
                entries[cols[0]] = cols[1]
        return cls(entries)


def similarity(word: str, gloss: str, lexicon: EmbeddingLexicon) -> float:
    """Lexical similarity: dot product of the L2-normalized embeddings."""
    return float(np.dot(lexicon.unit(word), lexicon.unit(gloss)))


class _GlossMatrix:
    """Unit embeddings of all non-reserved glosses, rows in vocabulary-id order."""

    def __init__(self, gloss_vocab: Vocabulary, lexicon: EmbeddingLexicon):
        glosses = gloss_vocab.non_reserved()
        missing = [g for g in glosses if g not in lexicon]
        if missing:
            raise ValueError(
                f"lexicon does not cover the gloss vocabulary: {len(missing)} missing, "
                f"first few {missing[:5]}"
            )
        self.glosses = glosses
        self.matrix = np.stack([lexicon.unit(g) for g in glosses]) if glosses else None

    def closest(self, unit_vec: np.ndarray) -> str:
        # np.argmax keeps the first (= lowest gloss id) on ties
        scores = self.matrix @ unit_vec
        return self.glosses[int(np.argmax(scores))]


def annotate_rule_zh(
    text: Sentence,
    word_vocab: Vocabulary,
    gloss_vocab: Vocabulary,
    lexicon: EmbeddingLexicon,
    _matrix: _GlossMatrix | None = None,
) -> GlossSequence:
    """Map each word to its most similar gloss; out-of-vocabulary words to <unk>.

    Words present in the spoken vocabulary but absent from the lexicon also
    fall back to <unk> rather than aborting.
    """
    matrix = _matrix if _matrix is not None else _GlossMatrix(gloss_vocab, lexicon)
    gloss: GlossSequence = []
    for word in text:
        if word not in word_vocab or word not in lexicon or matrix.matrix is None:
            gloss.append(UNK)
        else:
            gloss.append(matrix.closest(lexicon.unit(word)))
    return gloss


class _CompoundIndex:
    """Case-insensitive membership and unique-substring lookup over glosses."""

    def __init__(self, gloss_vocab: Vocabulary):
        self.by_fold: dict[str, str] = {}
        for g in gloss_vocab.non_reserved():  # first occurrence = lowest id wins
            self.by_fold.setdefault(g.casefold(), g)
        self.folded = list(self.by_fold.items())

    def member(self, token: str) -> str | None:
        return self.by_fold.get(token.casefold())

    def unique_compound(self, token: str) -> str | None:
        folded = token.casefold()
        hits = [g for gf, g in self.folded if folded in gf and folded != gf]
        return hits[0] if len(hits) == 1 else None


def annotate_rule_de(
    text: Sentence,
    word_vocab: Vocabulary,
    gloss_vocab: Vocabulary,
    lemmas: LemmaTable,
    _index: _CompoundIndex | None = None,
) -> GlossSequence:
    """German rules: <unk> for out-of-vocabulary words, lemmatize the rest,
    then case-insensitively resolve lemmas against the gloss vocabulary and
    promote a lemma contained in exactly one compound gloss to that compound.
    Ambiguous compound matches leave the lemma unchanged.
    """
    index = _index if _index is not None else _CompoundIndex(gloss_vocab)
    gloss: GlossSequence = []
    for word in text:
        if word not in word_vocab:
            gloss.append(UNK)
            continue
        lemma = lemmas.lemma(word)
        member = index.member(lemma)
        if member is not None:
            gloss.append(member)
            continue
        compound = index.unique_compound(lemma)
        gloss.append(compound if compound is not None else lemma)
    return gloss


def annotate_corpus_rule(
    mono: MonolingualCorpus,
    language: str,
    word_vocab: Vocabulary,
    gloss_vocab: Vocabulary,
    lexicon: EmbeddingLexicon | None = None,
    lemmas: LemmaTable | None = None,
) -> list[SyntheticPair]:
    """Annotate a monolingual corpus with the language's rule set.

    One pair per sentence, in corpus order; per-token resource misses become
    <unk> and never abort the batch.
    """
    if language == "zh":
        if lexicon is None:
            raise ValueError("zh rules require an embedding lexicon")
        matrix = _GlossMatrix(gloss_vocab, lexicon)
        return [
            SyntheticPair(
                text=list(sent),
                gloss=annotate_rule_zh(sent, word_vocab, gloss_vocab, lexicon, _matrix=matrix),
                source=SOURCE_RULE,
            )
            for sent in mono.sentences
        ]
    if language == "de":
        if lemmas is None:
            raise ValueError("de rules require a lemma table")
        index = _CompoundIndex(gloss_vocab)
        return [
            SyntheticPair(
                text=list(sent),
                gloss=annotate_rule_de(sent, word_vocab, gloss_vocab, lemmas, _index=index),
                source=SOURCE_RULE,
            )
            for sent in mono.sentences
        ]
    raise ValueError(f"unsupported rule language: {language!r}")
