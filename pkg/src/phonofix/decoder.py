"""Viterbi M-best search over the phone-confusion HMM.

The HMM is never materialized. Its moves are read off the decoding graph
and the confusion model (see :class:`HMMView`):

* insertion: stay on the node and consume an observed phone from the
  insertion sub-graph, ``ln p_ins + ln P(o|eps)``;
* consume: take a phone arc and emit the observed phone,
  ``ln(1-p_ins) + w(arc) + ln P(o|phone)``;
* delete: take a phone arc and emit epsilon, ``ln(1-p_ins) + w(arc) +
  ln P(eps|phone)``, without advancing in the observation.

Each graph node keeps up to ``m`` distinct word histories, which makes the
M-best list exact when the beam is unbounded.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .align import ConfusionModel
from .graph import DecodingGraph

NEG_INF = -math.inf

Words = Tuple[str, ...]


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Alternative:
    words: Words
    logprob: float
    source: str = "PTT"


class HMMView:
    """Per-step scores for a graph bound to a confusion model."""

    def __init__(self, graph: DecodingGraph, cm: ConfusionModel):
        self.graph = graph
        self.cm = cm
        try:
            phone_rows = np.array([cm.index(p) for p in graph.phones], dtype=np.int64)
        except KeyError as exc:
            raise DecodeError(str(exc)) from None
        self.arc_row = phone_rows[graph.arc_phone] if graph.num_arcs else np.zeros(0, dtype=np.int64)
        self.base = graph.arc_weight + cm.log_no_ins
        self.delete = self.base + cm.log_emission[self.arc_row, 0]
        self.insert = cm.log_ins + cm.log_emission[0]
        self._dst = graph.arc_dst.tolist()
        self._word = graph.arc_word.tolist()
        self._consume_cache: Dict[Tuple[int, int, int], List[Tuple[int, int, float]]] = {}
        self._delete_cache: Dict[Tuple[int, int], List[Tuple[int, int, float]]] = {}

    def insertion_score(self, o: int) -> float:
        return float(self.insert[o])

    def consume_score(self, arc: int, o: int) -> float:
        return float(self.base[arc] + self.cm.log_emission[self.arc_row[arc], o])

    def delete_score(self, arc: int) -> float:
        return float(self.delete[arc])

    def consume_arcs(self, node: int, o: int, limit: int) -> List[Tuple[int, int, float]]:
        """(dst, word, score) for arcs out of ``node`` consuming ``o``, best first."""
        key = (node, o, limit)
        hit = self._consume_cache.get(key)
        if hit is None:
            lo, hi = int(self.graph.out_start[node]), int(self.graph.out_start[node + 1])
            scores = self.base[lo:hi] + self.cm.log_emission[self.arc_row[lo:hi], o]
            hit = self._ranked(lo, scores, limit)
            self._consume_cache[key] = hit
        return hit

    def delete_arcs(self, node: int, limit: int) -> List[Tuple[int, int, float]]:
        key = (node, limit)
        hit = self._delete_cache.get(key)
        if hit is None:
            lo, hi = int(self.graph.out_start[node]), int(self.graph.out_start[node + 1])
            hit = self._ranked(lo, self.delete[lo:hi], limit)
            self._delete_cache[key] = hit
        return hit

    def _ranked(self, lo: int, scores: np.ndarray, limit: int) -> List[Tuple[int, int, float]]:
        if limit and len(scores) > limit:
            idx = np.argpartition(-scores, limit - 1)[:limit]
        else:
            idx = np.arange(len(scores))
        idx = idx[np.lexsort((idx, -scores[idx]))]
        return [
            (self._dst[lo + i], self._word[lo + i], float(scores[i]))
            for i in idx.tolist()
            if scores[i] > NEG_INF
        ]


def hmm_step_weights(graph: DecodingGraph, cm: ConfusionModel) -> HMMView:
    view = graph._views.get(id(cm))
    if view is None or view.cm is not cm:
        view = HMMView(graph, cm)
        graph._views[id(cm)] = view
    return view


def _add(table: Dict[int, Dict[Words, float]], node: int, words: Words, score: float) -> bool:
    hists = table.get(node)
    if hists is None:
        table[node] = {words: score}
        return True
    old = hists.get(words)
    if old is None or score > old:
        hists[words] = score
        return True
    return False


def _prune(table: Dict[int, Dict[Words, float]], m: int, beam: Optional[int]) -> Dict[int, Dict[Words, float]]:
    if beam is not None and len(table) > beam:
        # a node's best score does not depend on history truncation, so select nodes first
        best = heapq.nsmallest(beam, ((-max(h.values()), node) for node, h in table.items()))
        table = {node: table[node] for _, node in best}
    for node, hists in table.items():
        if len(hists) > m:
            kept = sorted(hists.items(), key=lambda kv: (-kv[1], kv[0]))[:m]
            table[node] = dict(kept)
    return table


def decode_mbest(
    graph: DecodingGraph,
    cm: ConfusionModel,
    obs: Sequence[str],
    beam: Optional[int] = 15,
    m: int = 10,
    max_consecutive_deletions: int = 5,
) -> List[Alternative]:
    """Return up to ``m`` distinct word sequences for ``obs``, best first.

    ``beam`` is the number of graph nodes kept per observation position,
    ranked by their best score; ``None`` disables pruning. An empty list
    means no hypothesis reached a final node.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if beam is not None and beam < 1:
        raise ValueError("beam must be >= 1")
    view = hmm_step_weights(graph, cm)
    try:
        cols = [cm.index(p) for p in obs]
    except KeyError as exc:
        raise DecodeError(str(exc)) from None
    limit = beam or 0
    words_tab = graph.words

    states: Dict[int, Dict[Words, float]] = {graph.start: {(): 0.0}}
    done: Dict[Words, float] = {}
    eos_tab = graph.eos_weights

    def harvest(table):
        # completions are collected before pruning so the beam cannot drop every final node
        for node, hists in table.items():
            eos = eos_tab.get(node)
            if eos is None:
                continue
            for words, s in hists.items():
                total = s + eos
                if words not in done or total > done[words]:
                    done[words] = total

    n = len(cols)
    for pos in range(n + 1):
        last = pos == n
        if last:
            harvest(states)
        # deletion closure: arcs taken without consuming observation
        frontier = [(node, w) for node, hists in states.items() for w in hists]
        for _ in range(max_consecutive_deletions):
            if not frontier:
                break
            touched: List[Tuple[int, Words]] = []
            for node, words in frontier:
                hists = states.get(node)
                if hists is None or words not in hists:
                    continue
                s = hists[words]
                for dst, w, sc in view.delete_arcs(node, limit):
                    nw = words + (words_tab[w],) if w >= 0 else words
                    if _add(states, dst, nw, s + sc):
                        touched.append((dst, nw))
            if last:
                # no node beam here: deletion chains must be able to reach a final node
                harvest(states)
                states = _prune(states, m, None)
            else:
                states = _prune(states, m, beam)
            frontier = list(dict.fromkeys(touched))
        if last:
            break

        o = cols[pos]
        ins = view.insertion_score(o)
        nxt: Dict[int, Dict[Words, float]] = {}
        for node, hists in states.items():
            items = list(hists.items())
            if ins > NEG_INF:
                for words, s in items:
                    _add(nxt, node, words, s + ins)
            for dst, w, sc in view.consume_arcs(node, o, limit):
                if w >= 0:
                    wd = words_tab[w]
                    for words, s in items:
                        _add(nxt, dst, words + (wd,), s + sc)
                else:
                    for words, s in items:
                        _add(nxt, dst, words, s + sc)
        if pos == n - 1:
            harvest(nxt)
        states = _prune(nxt, m, beam)

    ranked = sorted(done.items(), key=lambda kv: (-kv[1], kv[0]))[:m]
    return [Alternative(words, score) for words, score in ranked]


def select_observation(asr_nbest: Sequence[Tuple[Sequence[str], Sequence[str], float]]) -> Tuple[str, ...]:
    """Phones of the N-best entry with the highest acoustic likelihood (first on ties)."""
    if not asr_nbest:
        raise ValueError("empty N-best list")
    best_i = 0
    for i, (_, _, lik) in enumerate(asr_nbest):
        if lik > asr_nbest[best_i][2]:
            best_i = i
    return tuple(asr_nbest[best_i][1])
