"""Word error rate helpers."""

from __future__ import annotations

from typing import Iterable, Sequence, Tuple


def word_edits(hyp: Sequence[str], ref: Sequence[str]) -> int:
    prev = list(range(len(ref) + 1))
    for i, h in enumerate(hyp, 1):
        cur = [i] + [0] * len(ref)
        for j, r in enumerate(ref, 1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (h != r))
        prev = cur
    return prev[-1]


def wer(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """Utterance WER: edits / max(1, |ref|), clamped to [0, 1]."""
    return min(1.0, word_edits(hyp, ref) / max(1, len(ref)))


def corpus_wer(pairs: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> float:
    """Total edits over total reference words."""
    edits = words = 0
    for hyp, ref in pairs:
        edits += word_edits(hyp, ref)
        words += len(ref)
    return edits / max(1, words)


def oracle_wer(kbests: Iterable[Tuple[Sequence[Sequence[str]], Sequence[str]]]) -> float:
    """Corpus WER when every utterance picks its lowest-edit hypothesis."""
    edits = words = 0
    for hyps, ref in kbests:
        edits += min(word_edits(h, ref) for h in hyps)
        words += len(ref)
    return edits / max(1, words)
