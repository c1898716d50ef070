import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phonofix.ngram import (
    BOS,
    EOS,
    UNK,
    ARPAFormatError,
    em_interpolation_weights,
    format_arpa,
    interpolated_logprob,
    parse_arpa,
    train_ngram,
)

CORPUS = [
    "play pandora",
    "play the office",
    "the office",
    "play pandorum now",
    "show me the office",
    "play music",
    "pandora",
]


def test_witten_bell_unigram_hand_computed():
    # tokens a a a </s>: N=4, T=2 seen types, |V|=3 (a, </s>, <unk>)
    lm = train_ngram(["a a a"], order=1)
    assert 10 ** lm.logprob("a") == pytest.approx((3 + 2 / 3) / 6, abs=1e-12)
    assert 10 ** lm.logprob(EOS) == pytest.approx((1 + 2 / 3) / 6, abs=1e-12)
    assert 10 ** lm.logprob(UNK) == pytest.approx((2 / 3) / 6, abs=1e-12)
    assert lm.context_mass(()) == pytest.approx(1.0, abs=1e-12)


def test_symmetric_unigrams():
    lm = train_ngram(["x y", "y x"], order=1)
    assert lm.logprob("x") == lm.logprob("y")


def test_empty_corpus_rejected():
    with pytest.raises(ValueError):
        train_ngram([], order=2)
    with pytest.raises(ValueError):
        train_ngram(["a"], order=6)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_random_contexts_normalized(order):
    lm = train_ngram(CORPUS, order=order)
    rng = np.random.default_rng(order)
    words = sorted(lm.vocab - {BOS, EOS}) + ["never-seen"]
    histories = [(BOS,)] + [tuple(rng.choice(words, size=int(rng.integers(0, order + 1)))) for _ in range(100)]
    for h in histories:
        assert lm.context_mass(h) == pytest.approx(1.0, abs=1e-6)


def test_listed_probabilities_in_unit_interval():
    lm = train_ngram(CORPUS, order=3)
    assert all(lp <= 0.0 for lp in lm.probs.values())


def test_training_sentence_is_most_likely_pair():
    lm = train_ngram(["play x"], order=2)
    vocab = sorted(lm.vocab - {BOS, EOS})
    scores = {pair: lm.sequence_logprob(pair) for pair in itertools.product(vocab, repeat=2)}
    assert max(scores, key=scores.get) == ("play", "x")


def test_empty_sequence_is_end_given_start():
    lm = train_ngram(CORPUS, order=2)
    assert lm.sequence_logprob([]) == lm.logprob(EOS, [BOS])


def test_extension_never_increases_logprob():
    lm = train_ngram(CORPUS, order=2)
    seq = "play the office now".split()
    prefix_scores = []
    hist = [BOS]
    total = 0.0
    for w in seq:
        total += lm.logprob(w, hist)
        hist.append(w)
        prefix_scores.append(total)
    assert all(b <= a for a, b in zip(prefix_scores, prefix_scores[1:]))


def test_oov_maps_to_unk():
    lm = train_ngram(CORPUS, order=2)
    assert lm.sequence_logprob(["zzz"]) == lm.sequence_logprob([UNK])


def test_arpa_roundtrip_bit_exact():
    lm = train_ngram(CORPUS, order=3)
    text = format_arpa(lm)
    again = parse_arpa(text)
    assert again == lm
    assert format_arpa(again) == text


def test_arpa_rejects_count_mismatch():
    text = format_arpa(train_ngram(CORPUS, order=2)).replace("ngram 2=", "ngram 2=1")
    with pytest.raises(ARPAFormatError):
        parse_arpa(text)


def test_em_single_component():
    lm = train_ngram(CORPUS, order=2)
    assert em_interpolation_weights([lm], [["play"]]) == [1.0]


def test_em_identical_components_stay_uniform():
    lm = train_ngram(CORPUS, order=2)
    w = em_interpolation_weights([lm, lm], [s.split() for s in CORPUS], iters=50)
    assert w == pytest.approx([0.5, 0.5], abs=1e-12)


def _em_oracle(p, iters):
    # p[h][k]: plain probabilities; textbook EM for mixture weights
    lam = [0.5, 0.5]
    for _ in range(iters):
        post = [[lam[k] * row[k] / sum(lam[j] * row[j] for j in range(2)) for k in range(2)] for row in p]
        lam = [sum(r[k] for r in post) / len(p) for k in range(2)]
    return lam


def test_em_prefers_dominant_component():
    good = train_ngram(["play pandora", "pandora"], order=2)
    bad = train_ngram(["show me music", "the office"], order=2)
    hyps = [["play", "pandora"], ["pandora"]]
    assert all(good.sequence_logprob(h) > bad.sequence_logprob(h) for h in hyps)
    p = [[10 ** good.sequence_logprob(h), 10 ** bad.sequence_logprob(h)] for h in hyps]
    expected = _em_oracle(p, 30)
    got = em_interpolation_weights([good, bad], hyps, iters=30, tol=0.0)
    assert got == pytest.approx(expected, abs=1e-9)
    assert em_interpolation_weights([good, bad], hyps, iters=500, tol=0.0)[0] > 0.99


def test_em_loglik_monotone():
    a = train_ngram(CORPUS[:4], order=2)
    b = train_ngram(CORPUS[3:], order=2)
    trace = []
    em_interpolation_weights([a, b], [s.split() for s in CORPUS], iters=40, tol=0.0, trace=trace)
    assert all(y >= x - 1e-12 for x, y in zip(trace, trace[1:]))


def test_interpolation_degenerate_weights_exact():
    a = train_ngram(CORPUS[:4], order=2)
    b = train_ngram(CORPUS[3:], order=2)
    words = ["play", "pandora"]
    assert interpolated_logprob([a, b], [1.0, 0.0], words) == a.sequence_logprob(words)
    assert interpolated_logprob([a, a], [0.3, 0.7], words) == pytest.approx(a.sequence_logprob(words), abs=1e-12)


sentences = st.lists(st.sampled_from(["play", "pandora", "the", "office", "zzz", "now"]), max_size=5)


@given(sentences, st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=80, deadline=None)
def test_interpolation_bounded_by_components(words, w):
    a = train_ngram(CORPUS[:4], order=2)
    b = train_ngram(CORPUS[3:], order=2)
    la, lb = a.sequence_logprob(words), b.sequence_logprob(words)
    val = interpolated_logprob([a, b], [w, 1.0 - w], words)
    assert min(la, lb) - 1e-9 <= val <= max(la, lb) + 1e-9


def test_static_weights_between_components():
    a = train_ngram(CORPUS[:4], order=2)
    b = train_ngram(CORPUS[3:], order=2)
    words = ["play", "the", "office"]
    la, lb = a.sequence_logprob(words), b.sequence_logprob(words)
    val = interpolated_logprob([a, b], [0.9, 0.1], words)
    assert min(la, lb) <= val <= max(la, lb)
    assert math.isfinite(val)
