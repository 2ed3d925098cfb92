"""Rule-annotator tests, including a brute-force argmax oracle for the
embedding-similarity mapping."""

import math
import random

import numpy as np
import pytest

from text2gloss.corpus import UNK, MonolingualCorpus, ParallelCorpus, Vocabulary, build_vocabulary
from text2gloss.rules import (
    SOURCE_RULE,
    EmbeddingLexicon,
    LemmaTable,
    SyntheticPair,
    annotate_corpus_rule,
    annotate_rule_de,
    annotate_rule_zh,
    read_synthetic,
    similarity,
    write_synthetic,
)


def unit(vec):
    arr = np.asarray(vec, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def oracle_closest_gloss(word_vec, gloss_vocab, lexicon):
    """Brute-force argmax of the normalized dot product over the gloss ids."""
    best = None
    best_score = -math.inf
    for gloss in gloss_vocab.non_reserved():  # vocabulary-id order
        score = float(np.dot(unit(word_vec), lexicon.unit(gloss)))
        if score > best_score:
            best = gloss
            best_score = score
    return best


# --- similarity ----------------------------------------------------------------


def test_similarity_identical_direction():
    lex = EmbeddingLexicon({"w": np.array([3.0, 4.0]), "g": np.array([3.0, 4.0])})
    assert similarity("w", "g", lex) == pytest.approx(1.0)


def test_similarity_orthogonal():
    lex = EmbeddingLexicon({"w": np.array([1.0, 0.0]), "g": np.array([0.0, 1.0])})
    assert similarity("w", "g", lex) == pytest.approx(0.0)


def test_similarity_45_degrees():
    lex = EmbeddingLexicon({"w": np.array([1.0, 0.0]), "g": np.array([1.0, 1.0])})
    assert similarity("w", "g", lex) == pytest.approx(0.70710678, abs=1e-8)


def test_similarity_missing_token_raises():
    lex = EmbeddingLexicon({"w": np.array([1.0, 0.0])})
    with pytest.raises(KeyError):
        similarity("w", "absent", lex)


# --- zh rules --------------------------------------------------------------------


def build_zh_world(n_words=8, dim=5, seed=0):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(n_words)]
    glosses = [f"G{i}" for i in range(n_words)]
    pairs = [([w], [g]) for w, g in zip(words, glosses)]
    gold = ParallelCorpus(pairs)
    entries = {}
    for token in words + glosses:
        entries[token] = rng.normal(size=dim)
    lexicon = EmbeddingLexicon(entries)
    return (
        build_vocabulary(gold, "text"),
        build_vocabulary(gold, "gloss"),
        lexicon,
        words,
    )


def test_zh_argmax_matches_oracle():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    rng = random.Random(1)
    for _ in range(50):
        sent = [rng.choice(words) for _ in range(rng.randint(1, 6))]
        got = annotate_rule_zh(sent, word_vocab, gloss_vocab, lexicon)
        want = [oracle_closest_gloss(lexicon.unit(w), gloss_vocab, lexicon) for w in sent]
        assert got == want


def test_zh_oov_becomes_unk():
    word_vocab, gloss_vocab, lexicon, _ = build_zh_world()
    assert annotate_rule_zh(["nicht_im_vokabular"], word_vocab, gloss_vocab, lexicon) == [UNK]


def test_zh_identity_when_word_embeds_equal_gloss():
    # every word's vector equals its gloss's vector -> self-similarity 1 wins
    word_vocab, gloss_vocab, _, words = build_zh_world()
    entries = {}
    rng = np.random.default_rng(3)
    for i, w in enumerate(words):
        vec = rng.normal(size=6)
        entries[w] = vec
        entries[f"G{i}"] = vec.copy()
    lexicon = EmbeddingLexicon(entries)
    sent = words[:4]
    assert annotate_rule_zh(sent, word_vocab, gloss_vocab, lexicon) == [
        f"G{words.index(w)}" for w in sent
    ]


def test_zh_length_preserved_and_closed():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    rng = random.Random(2)
    pool = words + ["oov1", "oov2"]
    for _ in range(40):
        sent = [rng.choice(pool) for _ in range(rng.randint(1, 7))]
        gloss = annotate_rule_zh(sent, word_vocab, gloss_vocab, lexicon)
        assert len(gloss) == len(sent)
        assert all(g == UNK or g in gloss_vocab for g in gloss)


def test_zh_scale_invariance():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world(seed=9)
    scaled = EmbeddingLexicon(
        {tok: 37.5 * lexicon.unit(tok) for tok in words + gloss_vocab.non_reserved()}
    )
    sent = words[:5]
    assert annotate_rule_zh(sent, word_vocab, gloss_vocab, lexicon) == annotate_rule_zh(
        sent, word_vocab, gloss_vocab, scaled
    )


def test_zh_similarity_tie_goes_to_lower_gloss_id():
    pairs = [(["w"], ["GB"]), (["w"], ["GA"]), (["w"], ["GB"])]
    gold = ParallelCorpus(pairs)
    gloss_vocab = build_vocabulary(gold, "gloss")  # GB id < GA id (freq 2 vs 1)
    word_vocab = build_vocabulary(gold, "text")
    lexicon = EmbeddingLexicon(
        {"w": np.array([1.0, 0.0]), "GA": np.array([2.0, 0.0]), "GB": np.array([5.0, 0.0])}
    )
    assert annotate_rule_zh(["w"], word_vocab, gloss_vocab, lexicon) == ["GB"]


def test_zh_word_missing_from_lexicon_falls_back_to_unk():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    # word in the spoken vocabulary but without an embedding
    slim = EmbeddingLexicon(
        {tok: lexicon.unit(tok) for tok in words[1:] + gloss_vocab.non_reserved()}
    )
    assert annotate_rule_zh([words[0]], word_vocab, gloss_vocab, slim) == [UNK]


def test_zh_lexicon_must_cover_gloss_vocabulary():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    missing_gloss = EmbeddingLexicon({w: lexicon.unit(w) for w in words})
    with pytest.raises(ValueError, match="cover"):
        annotate_corpus_rule(
            MonolingualCorpus([[words[0]]]), "zh", word_vocab, gloss_vocab,
            lexicon=missing_gloss,
        )


# --- de rules ---------------------------------------------------------------


def build_de_world():
    pairs = [
        (["es", "regnet", "im", "nord"], ["REGNEN", "NORDWEST"]),
        (["heute", "wind"], ["HEUTE", "WIND"]),
    ]
    gold = ParallelCorpus(pairs)
    lemmas = LemmaTable({"regnet": "regnen", "winde": "wind"})
    return build_vocabulary(gold, "text"), build_vocabulary(gold, "gloss"), lemmas


def test_de_lemma_casefold_membership():
    word_vocab, gloss_vocab, lemmas = build_de_world()
    assert annotate_rule_de(["regnet"], word_vocab, gloss_vocab, lemmas) == ["REGNEN"]


def test_de_oov_word_unk():
    word_vocab, gloss_vocab, lemmas = build_de_world()
    assert annotate_rule_de(["nordwind_oov"], word_vocab, gloss_vocab, lemmas) == [UNK]


def test_de_unique_compound_promotion():
    word_vocab, gloss_vocab, lemmas = build_de_world()
    # "nord" is not a gloss itself and is contained only in NORDWEST
    assert annotate_rule_de(["nord"], word_vocab, gloss_vocab, lemmas) == ["NORDWEST"]


def test_de_ambiguous_compound_left_unchanged():
    pairs = [(["am", "wind"], ["WINDSTILL", "WINDBOEE"])]
    gold = ParallelCorpus(pairs)
    word_vocab = build_vocabulary(gold, "text")
    gloss_vocab = build_vocabulary(gold, "gloss")
    got = annotate_rule_de(["wind"], word_vocab, gloss_vocab, LemmaTable({}))
    assert got == ["wind"]  # matches parts of two compounds -> inert


def test_de_gloss_member_not_promoted_to_compound():
    # WIND is itself a gloss although it is also part of NORDWEST... keep WIND
    pairs = [(["wind", "nord"], ["WIND", "NORDWIND"])]
    gold = ParallelCorpus(pairs)
    word_vocab = build_vocabulary(gold, "text")
    gloss_vocab = build_vocabulary(gold, "gloss")
    assert annotate_rule_de(["wind"], word_vocab, gloss_vocab, LemmaTable({})) == ["WIND"]


def test_de_length_preserved():
    word_vocab, gloss_vocab, lemmas = build_de_world()
    sent = ["es", "regnet", "xxx", "nord", "wind"]
    gloss = annotate_rule_de(sent, word_vocab, gloss_vocab, lemmas)
    assert len(gloss) == len(sent)


def test_lemma_idempotence():
    lemmas = LemmaTable({"regnet": "regnen", "ging": "gehen", "winde": "wind"})
    for surface in list(lemmas.entries) + ["unbekannt"]:
        once = lemmas.lemma(surface)
        assert lemmas.lemma(once) == once


def test_lemma_chain_rejected():
    with pytest.raises(ValueError, match="idempotent"):
        LemmaTable({"winde": "wind", "wind": "winden"})


# --- corpus annotation ---------------------------------------------------------


def test_annotate_corpus_cardinality_and_source():
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    mono = MonolingualCorpus([[words[0]], [words[1], words[2]], ["oov_only"]])
    pairs = annotate_corpus_rule(mono, "zh", word_vocab, gloss_vocab, lexicon=lexicon)
    assert len(pairs) == 3
    assert all(p.source == SOURCE_RULE and p.iteration == 0 for p in pairs)
    assert pairs[2].gloss == [UNK]  # all-OOV sentence still emitted


def test_annotate_corpus_deterministic(tmp_path):
    word_vocab, gloss_vocab, lexicon, words = build_zh_world()
    mono = MonolingualCorpus([[words[i % len(words)]] for i in range(10)])
    first = annotate_corpus_rule(mono, "zh", word_vocab, gloss_vocab, lexicon=lexicon)
    second = annotate_corpus_rule(mono, "zh", word_vocab, gloss_vocab, lexicon=lexicon)
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_synthetic(first, a)
    write_synthetic(second, b)
    assert a.read_bytes() == b.read_bytes()


def test_synthetic_jsonl_roundtrip(tmp_path):
    pairs = [
        SyntheticPair(text=["a", "b"], gloss=["X"], source=SOURCE_RULE, iteration=2),
        SyntheticPair(text=["c"], gloss=["Y", "Z"], source="model", truncated=True),
    ]
    path = tmp_path / "synth.jsonl"
    write_synthetic(pairs, path)
    assert read_synthetic(path) == pairs


# --- resource loaders ----------------------------------------------------------


def test_lexicon_file_roundtrip(tmp_path):
    path = tmp_path / "emb.vec"
    path.write_text("w1 1.0 0.0\nw2 0.5 0.5\n", encoding="utf-8")
    lex = EmbeddingLexicon.load(path)
    assert "w1" in lex and lex.dim == 2
    assert np.allclose(lex.unit("w2"), unit([0.5, 0.5]))


def test_lexicon_rejects_mixed_dims():
    with pytest.raises(ValueError, match="dimension"):
        EmbeddingLexicon({"a": np.array([1.0]), "b": np.array([1.0, 2.0])})


def test_lemma_table_file(tmp_path):
    path = tmp_path / "lemmas.tsv"
    path.write_text("regnet\tregnen\nging\tgehen\n", encoding="utf-8")
    table = LemmaTable.load(path)
    assert table.lemma("regnet") == "regnen"
    assert table.lemma("unbekannt") == "unbekannt"
