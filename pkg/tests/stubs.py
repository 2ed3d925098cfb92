"""Hand-specified decoder stand-ins with enumerable output trees."""

import itertools
import math
from types import SimpleNamespace

import numpy as np

from text2gloss.corpus import Vocabulary


class StubSession:
    def __init__(self, stub):
        self.stub = stub
        self.eos_id = stub.tgt_vocab.eos_id
        self.bos_id = stub.tgt_vocab.bos_id

    def logprobs(self, prefix_ids):
        return np.log(self.stub.distribution(tuple(prefix_ids)))


class StubModel:
    """Decoder-only stand-in: fixed next-token distributions per prefix."""

    def __init__(self, vocab, table, max_len=8, default=None):
        self.tgt_vocab = vocab
        self.config = SimpleNamespace(max_len=max_len)
        self.table = table
        self.default = default

    def distribution(self, prefix):
        probs = self.table.get(prefix, self.default)
        if probs is None:
            raise KeyError(f"no distribution for prefix {prefix}")
        arr = np.asarray(probs, dtype=np.float64) + 1e-12
        return arr / arr.sum()

    def start_decode(self, x):
        return StubSession(self)


def dist(vocab, **probs):
    """Distribution over the full vocab from gloss-name or 'eos' weights."""
    arr = np.zeros(len(vocab))
    for name, p in probs.items():
        idx = vocab.eos_id if name == "eos" else vocab.token_to_id[name]
        arr[idx] = p
    return arr


def random_stub(seed, n_gloss=3, max_len=3, eos_alpha=4.0):
    # EOS-heavy tables so hypotheses finish within max_len
    rng = np.random.default_rng(seed)
    vocab = Vocabulary([f"T{i}" for i in range(n_gloss)])
    ids = [vocab.token_to_id[t] for t in vocab.non_reserved()]
    table = {}
    for k in range(max_len + 1):
        for seq in itertools.product(ids, repeat=k):
            arr = np.zeros(len(vocab))
            weights = rng.dirichlet([eos_alpha] + [1.0] * n_gloss)
            arr[vocab.eos_id] = weights[0]
            for i, g in enumerate(ids):
                arr[g] = weights[i + 1]
            table[seq] = arr
    return StubModel(vocab, table, max_len=max_len)


def greedy_trap_model():
    """Greedy takes A (0.55) but the B branch finishes with higher score."""
    vocab = Vocabulary(["A", "B"])
    table = {
        (): dist(vocab, A=0.55, B=0.45),
        (vocab.token_to_id["A"],): dist(vocab, eos=0.6, A=0.2, B=0.2),
        (vocab.token_to_id["B"],): dist(vocab, eos=0.9, A=0.05, B=0.05),
    }
    default = dist(vocab, eos=1.0)
    return StubModel(vocab, table, max_len=3, default=default)


def enumerate_best(stub, length_penalty, max_len):
    """Brute-force optimum over every finished sequence up to max_len steps."""
    vocab = stub.tgt_vocab
    gloss_ids = [vocab.token_to_id[t] for t in vocab.non_reserved()]
    best = (-math.inf, None)
    for k in range(0, max_len + 1):
        for seq in itertools.product(gloss_ids, repeat=k):
            logprob = 0.0
            for i in range(k):
                logprob += math.log(stub.distribution(seq[:i])[seq[i]])
            logprob += math.log(stub.distribution(seq)[vocab.eos_id])
            score = logprob / (k + 1) ** length_penalty
            if score > best[0]:
                best = (score, list(seq))
    return best
