import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_channel_logprob, edit_distance, random_confusion
from phonofix.align import (
    ConfusionModel,
    channel_logprob,
    confusion_from_counts,
    estimate_confusion,
    nw_align,
    raw_confusion,
)
from phonofix.lexicon import EPS

# the "Sherlock Holmes" example; the r-colored vowel is split into two tokens
SHERLOCK_OBS = "ʃ ɜː r h a m z".split()
SHERLOCK_REF = "ʃ ɜː r l ɒ k ˈh oʊ m z".split()


def test_sherlock_holmes_alignment():
    al = nw_align(SHERLOCK_OBS, SHERLOCK_REF)
    assert (al.deletions, al.substitutions, al.insertions, al.matches) == (3, 2, 0, 5)
    dels = [ref for obs, ref in al.pairs if obs == EPS]
    subs = [(ref, obs) for obs, ref in al.pairs if EPS not in (obs, ref) and obs != ref]
    assert dels == ["l", "ɒ", "k"]
    assert subs == [("ˈh", "h"), ("oʊ", "a")]


def test_identity_alignment():
    al = nw_align(list("abc"), list("abc"))
    assert al.distance == 0 and al.pairs == (("a", "a"), ("b", "b"), ("c", "c"))


def test_all_deletions():
    al = nw_align([], list("abcd"))
    assert al.pairs == tuple((EPS, p) for p in "abcd")


def test_never_pairs_two_gaps():
    al = nw_align(list("xyz"), list("ab"))
    assert all(pair != (EPS, EPS) for pair in al.pairs)


seqs = st.lists(st.sampled_from("abcde"), max_size=12)


@given(seqs, seqs)
@settings(max_examples=200, deadline=None)
def test_nw_distance_matches_textbook_dp(a, b):
    al = nw_align(a, b)
    assert al.distance == edit_distance(a, b)
    assert [o for o, _ in al.pairs if o != EPS] == a
    assert [r for _, r in al.pairs if r != EPS] == b


def test_confusion_pre_floor_example():
    counts = Counter({("a", "a"): 3, ("b", "a"): 1})
    probs, _ = raw_confusion(counts)
    assert probs[("a", "a")] == 0.75
    assert probs[("b", "a")] == 0.25
    cm = confusion_from_counts(counts, floor=0.0)
    assert cm.prob("a", "a") == 0.75 and cm.prob("b", "a") == 0.25


def test_p_ins_example():
    # 10 pairs, two of them insertions
    counts = Counter({("a", "a"): 5, ("b", "b"): 2, (EPS, "a"): 1, ("a", EPS): 1, ("b", EPS): 1})
    _, p_ins = raw_confusion(counts)
    assert p_ins == pytest.approx(0.2, abs=1e-15)
    assert confusion_from_counts(counts).p_ins == pytest.approx(0.2, abs=1e-15)


def test_no_edit_corpus():
    dev = [(list("abc"), list("abc")), (list("ca"), list("ca"))]
    cm = estimate_confusion(dev, floor=0.0)
    assert cm.p_ins == 0.0
    for p in "abc":
        assert cm.prob(p, p) == 1.0


def test_rows_normalized_after_floor():
    rng = np.random.default_rng(0)
    dev = []
    for _ in range(50):
        ref = list(rng.choice(list("abcdef"), size=6))
        obs = [p for p in ref if rng.random() > 0.1]
        dev.append((obs, ref))
    cm = estimate_confusion(dev, inventory=list("abcdefg"))
    assert np.allclose(cm.emission.sum(axis=1), 1.0, atol=1e-9)
    assert cm.emission[0, 0] == 0.0
    off = cm.emission.copy()
    off[0, 0] = 1.0
    assert off.min() >= 1e-6 - 1e-18
    assert 0.0 <= cm.p_ins <= 1.0
    # "g" never occurs: identity-dominant default row
    assert cm.prob("g", "g") > 0.99


def test_json_roundtrip_stable():
    dev = [(list("abd"), list("abc")), (list("aab"), list("ab"))]
    cm = estimate_confusion(dev)
    text = cm.to_json()
    again = ConfusionModel.from_json(text)
    assert again.to_json() == text
    assert np.allclose(again.emission, cm.emission, rtol=1e-11)
    assert np.allclose(again.emission.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(30))
def test_channel_matches_exhaustive_alignment(seed):
    rng = np.random.default_rng(seed)
    cm = random_confusion(rng, list("abc"), del_range=(0.01, 0.3))
    obs = [str(p) for p in rng.choice(list("abc"), size=int(rng.integers(0, 5)))]
    ref = [str(p) for p in rng.choice(list("abc"), size=int(rng.integers(0, 5)))]
    assert channel_logprob(cm, obs, ref) == pytest.approx(brute_channel_logprob(cm, obs, ref), abs=1e-12)


def test_channel_identity_bounds():
    delta = 0.05
    size = 4
    em = np.full((size, size), delta / (size - 1))
    np.fill_diagonal(em, 1 - delta)
    em[0] = [0.0, 1 / 3, 1 / 3, 1 / 3]
    cm = ConfusionModel(list("abc"), em, 0.1)
    seq = list("abcab")
    score = channel_logprob(cm, seq, seq)
    assert len(seq) * math.log((1 - delta) * 0.9) - 1e-12 <= score <= 0.0


def test_channel_empty_observation():
    rng = np.random.default_rng(5)
    cm = random_confusion(rng, list("ab"))
    expected = math.log(cm.prob(EPS, "a")) + math.log(cm.prob(EPS, "b")) + 2 * math.log(1 - cm.p_ins)
    assert channel_logprob(cm, [], ["a", "b"]) == pytest.approx(expected, abs=1e-12)


def test_extra_substitution_never_helps():
    size = 5
    em = np.full((size, size), 0.02)
    np.fill_diagonal(em, 0.9)
    em[:, 0] = 0.02
    em = em / em.sum(axis=1, keepdims=True)
    em[0] = [0.0, 0.25, 0.25, 0.25, 0.25]
    cm = ConfusionModel(list("abcd"), em, 0.05)
    ref = list("abcdab")
    clean = channel_logprob(cm, ref, ref)
    for i in range(len(ref)):
        for p in "abcd":
            if p == ref[i]:
                continue
            noisy = ref[:i] + [p] + ref[i + 1:]
            assert channel_logprob(cm, noisy, ref) <= clean
