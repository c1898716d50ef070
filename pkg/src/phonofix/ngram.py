"""Word-level backoff n-gram language models.

Probabilities are stored as log10 values in the ARPA convention. Training
uses interpolated Witten-Bell smoothing written out in backoff form, so the
ARPA file reproduces the interpolated distribution exactly.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
LN10 = math.log(10.0)
# ARPA convention for the sentence-begin unigram, which is never predicted.
BOS_LOGPROB = -99.0

NGram = Tuple[str, ...]


class ARPAFormatError(ValueError):
    pass


@dataclass
class NGramLM:
    order: int
    probs: Dict[NGram, float]
    bows: Dict[NGram, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        self.vocab: FrozenSet[str] = frozenset(ng[0] for ng in self.probs if len(ng) == 1)
        if UNK not in self.vocab:
            raise ValueError(f"LM has no {UNK} unigram")
        contexts = {ng[:-1] for ng in self.probs if len(ng) > 1}
        contexts.update(h for h, b in self.bows.items() if b != 0.0)
        contexts.add(())
        self.contexts: FrozenSet[NGram] = frozenset(contexts)

    def map_word(self, word: str) -> str:
        return word if word in self.vocab else UNK

    def start_context(self) -> NGram:
        return self.reduce_context((BOS,))

    def reduce_context(self, history: Sequence[str], order: Optional[int] = None) -> NGram:
        """Shortest history that predicts the same distributions as ``history``."""
        n = min(order or self.order, self.order)
        h = tuple(history)[-(n - 1):] if n > 1 else ()
        while h and h not in self.contexts:
            h = h[1:]
        return h

    def logprob(self, word: str, history: Sequence[str] = ()) -> float:
        """log10 P(word | history) with standard backoff."""
        word = word if word in (EOS,) else self.map_word(word)
        h = tuple(history)[-(self.order - 1):] if self.order > 1 else ()
        acc = 0.0
        while True:
            p = self.probs.get(h + (word,))
            if p is not None:
                return acc + p
            if not h:
                # unreachable for mapped words: every vocab word has a unigram
                raise KeyError(word)
            acc += self.bows.get(h, 0.0)
            h = h[1:]

    def context_mass(self, history: Sequence[str]) -> float:
        """Total probability over the predictable vocabulary given ``history``."""
        return sum(10.0 ** self.logprob(w, history) for w in self.vocab if w != BOS)

    def sequence_logprob(self, words: Sequence[str]) -> float:
        history: List[str] = [BOS]
        total = 0.0
        for w in words:
            w = self.map_word(w)
            total += self.logprob(w, history)
            history.append(w)
        return total + self.logprob(EOS, history)


def train_ngram(corpus: Sequence[Sequence[str]], order: int = 2) -> NGramLM:
    """Train an interpolated Witten-Bell backoff LM.

    ``corpus`` is a list of sentences, each a list of words (strings are split
    on whitespace). The vocabulary is the set of training words plus
    ``</s>`` and ``<unk>``.
    """
    if not 1 <= order <= 5:
        raise ValueError("order must be in [1, 5]")
    sentences = [s.split() if isinstance(s, str) else list(s) for s in corpus]
    if not sentences:
        raise ValueError("cannot train an LM on an empty corpus")

    counts: List[Dict[NGram, Dict[str, int]]] = [defaultdict(lambda: defaultdict(int)) for _ in range(order)]
    for sent in sentences:
        toks = [BOS] + sent + [EOS]
        for i in range(1, len(toks)):
            w = toks[i]
            for k in range(order):
                if i - k < 0:
                    break
                h = tuple(toks[i - k:i])
                counts[k][h][w] += 1

    vocab = sorted({w for h in counts[0].values() for w in h} | {EOS, UNK})
    probs: Dict[NGram, float] = {}
    bows: Dict[NGram, float] = {}

    # unigram level, interpolated with the uniform distribution
    uni = counts[0][()]
    n_tok = sum(uni.values())
    n_typ = len(uni)
    uniform = 1.0 / len(vocab)
    lower: Dict[str, float] = {}
    for w in vocab:
        p = (uni.get(w, 0) + n_typ * uniform) / (n_tok + n_typ)
        lower[w] = p
        probs[(w,)] = math.log10(p)
    probs[(BOS,)] = BOS_LOGPROB

    def lower_prob(h: NGram, w: str) -> float:
        # interpolated lower-order probability, read back off the backoff tables
        acc = 0.0
        while True:
            p = probs.get(h + (w,))
            if p is not None:
                return acc + p
            acc += bows.get(h, 0.0)
            h = h[1:]

    for k in range(1, order):
        for h in sorted(counts[k]):
            succ = counts[k][h]
            c_h = sum(succ.values())
            t_h = len(succ)
            denom = c_h + t_h
            for w in sorted(succ):
                p_low = 10.0 ** lower_prob(h[1:], w)
                probs[h + (w,)] = math.log10((succ[w] + t_h * p_low) / denom)
            bows[h] = math.log10(t_h / denom)
    return NGramLM(order, probs, bows)


def em_interpolation_weights(
    components: Sequence[NGramLM],
    hyps: Sequence[Sequence[str]],
    iters: int = 20,
    init: Optional[Sequence[float]] = None,
    tol: float = 1e-10,
    trace: Optional[List[float]] = None,
) -> List[float]:
    """Mixture weights maximizing the joint likelihood of ``hyps``.

    Each hypothesis contributes its whole-sequence probability under every
    component. If ``trace`` is given, the log-likelihood before each
    iteration and after the last one is appended to it.
    """
    if not components:
        raise ValueError("need at least one component LM")
    if not hyps:
        raise ValueError("need at least one hypothesis")
    k = len(components)
    lam = np.full(k, 1.0 / k) if init is None else np.asarray(init, dtype=float)
    if k == 1:
        return [1.0]
    # (H, K) natural-log sequence probabilities
    ll = np.array([[c.sequence_logprob(h) * LN10 for c in components] for h in hyps])

    def loglik(weights: np.ndarray) -> float:
        with np.errstate(divide="ignore"):
            return float(np.sum(_logsumexp(ll + np.log(weights), axis=1)))

    prev = loglik(lam)
    if trace is not None:
        trace.append(prev)
    for _ in range(iters):
        with np.errstate(divide="ignore"):
            joint = ll + np.log(lam)
        post = np.exp(joint - _logsumexp(joint, axis=1)[:, None])
        lam = post.mean(axis=0)
        lam = lam / lam.sum()
        cur = loglik(lam)
        if trace is not None:
            trace.append(cur)
        if cur - prev < tol:
            break
        prev = cur
    return [float(x) for x in lam]


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m).squeeze(axis)


def mixture_logprob(logprobs: Sequence[float], weights: Sequence[float]) -> float:
    """log10 of sum_k weights[k] * 10**logprobs[k]."""
    terms = [math.log10(w) + lp for w, lp in zip(weights, logprobs) if w > 0.0]
    if not terms:
        return -math.inf
    top = max(terms)
    rest = sum(10.0 ** (t - top) for t in terms)
    return top + math.log10(rest)


def interpolated_logprob(
    components: Sequence[NGramLM], weights: Sequence[float], words: Sequence[str]
) -> float:
    if len(components) != len(weights):
        raise ValueError("one weight per component LM is required")
    if abs(sum(weights) - 1.0) > 1e-9 or min(weights) < 0:
        raise ValueError("interpolation weights must be non-negative and sum to 1")
    return mixture_logprob([c.sequence_logprob(words) for c in components], weights)


# --- ARPA I/O ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def format_arpa(lm: NGramLM) -> str:
    by_order: Dict[int, List[NGram]] = defaultdict(list)
    for ng in lm.probs:
        by_order[len(ng)].append(ng)
    lines = ["", "\\data\\"]
    for n in range(1, lm.order + 1):
        lines.append(f"ngram {n}={len(by_order[n])}")
    for n in range(1, lm.order + 1):
        lines.append("")
        lines.append(f"\\{n}-grams:")
        for ng in sorted(by_order[n]):
            row = f"{_fmt(lm.probs[ng])}\t{' '.join(ng)}"
            if ng in lm.bows:
                row += f"\t{_fmt(lm.bows[ng])}"
            lines.append(row)
    lines.append("")
    lines.append("\\end\\")
    return "\n".join(lines) + "\n"


def parse_arpa(text: str) -> NGramLM:
    probs: Dict[NGram, float] = {}
    bows: Dict[NGram, float] = {}
    declared: Dict[int, int] = {}
    section: Optional[int] = None
    seen_data = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "\\data\\":
            seen_data = True
            section = 0
            continue
        if line == "\\end\\":
            break
        if line.startswith("\\") and line.endswith("-grams:"):
            try:
                section = int(line[1:-len("-grams:")])
            except ValueError:
                raise ARPAFormatError(f"line {lineno}: bad section header {line!r}") from None
            continue
        if section == 0:
            if line.startswith("ngram "):
                n, _, c = line[6:].partition("=")
                declared[int(n)] = int(c)
            continue
        if section is None:
            continue
        parts = line.split()
        try:
            lp = float(parts[0])
            ng = tuple(parts[1:1 + section])
            if len(ng) != section:
                raise ValueError
            bow = float(parts[1 + section]) if len(parts) > 1 + section else None
        except (ValueError, IndexError):
            raise ARPAFormatError(f"line {lineno}: malformed n-gram entry") from None
        probs[ng] = lp
        if bow is not None:
            bows[ng] = bow
    if not seen_data or not declared:
        raise ARPAFormatError("missing \\data\\ header")
    order = max(declared)
    for n, c in declared.items():
        got = sum(1 for ng in probs if len(ng) == n)
        if got != c:
            raise ARPAFormatError(f"declared {c} {n}-grams, found {got}")
    return NGramLM(order, probs, bows)


def load_arpa(path) -> NGramLM:
    with open(path, encoding="utf-8") as f:
        return parse_arpa(f.read())


def save_arpa(lm: NGramLM, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(format_arpa(lm))
