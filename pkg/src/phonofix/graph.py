"""Static phone-level decoding graph: lexicon chains composed with an n-gram LM.

Each LM context gets one chain of phone arcs per (word, pronunciation)
leading to the successor context. A word's context-conditional LM log
probability is spread evenly over its phone arcs, so pruning sees LM cost
early while complete-path totals stay equal to the LM score.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .lexicon import Lexicon
from .ngram import EOS, LN10, NGram, NGramLM

DEFAULT_MAX_ORDER = 3


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str  # "lm-context" or "in-word"
    history: Optional[NGram] = None
    word: Optional[str] = None
    variant: Optional[int] = None
    position: Optional[int] = None


@dataclass
class DecodingGraph:
    nodes: List[GraphNode]
    phones: Tuple[str, ...]
    words: Tuple[str, ...]
    arc_src: np.ndarray
    arc_dst: np.ndarray
    arc_phone: np.ndarray  # index into ``phones``
    arc_word: np.ndarray  # index into ``words``; -1 when the arc emits nothing
    arc_weight: np.ndarray  # natural-log LM share
    start: int
    eos_weights: Dict[int, float]
    out_start: np.ndarray = field(init=False)
    _views: Dict[int, object] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        # arcs are stored grouped by source node
        if len(self.arc_src) and np.any(np.diff(self.arc_src) < 0):
            raise GraphError("arcs must be sorted by source node")
        self.out_start = np.searchsorted(self.arc_src, np.arange(len(self.nodes) + 1)).astype(np.int64)

    @property
    def finals(self) -> List[int]:
        return sorted(self.eos_weights)

    @property
    def num_arcs(self) -> int:
        return int(len(self.arc_src))

    def out_arcs(self, node: int) -> range:
        return range(int(self.out_start[node]), int(self.out_start[node + 1]))

    def arc(self, a: int) -> Tuple[int, int, str, Optional[str], float]:
        w = int(self.arc_word[a])
        return (
            int(self.arc_src[a]),
            int(self.arc_dst[a]),
            self.phones[int(self.arc_phone[a])],
            self.words[w] if w >= 0 else None,
            float(self.arc_weight[a]),
        )

    def check_connectivity(self) -> None:
        n = len(self.nodes)
        fwd = [False] * n
        fwd[self.start] = True
        queue = deque([self.start])
        while queue:
            u = queue.popleft()
            for a in self.out_arcs(u):
                v = int(self.arc_dst[a])
                if not fwd[v]:
                    fwd[v] = True
                    queue.append(v)
        rev: List[List[int]] = [[] for _ in range(n)]
        for s, d in zip(self.arc_src.tolist(), self.arc_dst.tolist()):
            rev[d].append(s)
        bwd = [False] * n
        queue = deque(self.eos_weights)
        for f in self.eos_weights:
            bwd[f] = True
        while queue:
            v = queue.popleft()
            for u in rev[v]:
                if not bwd[u]:
                    bwd[u] = True
                    queue.append(u)
        dead = [i for i in range(n) if not (fwd[i] and bwd[i])]
        if dead:
            raise GraphError(f"{len(dead)} dead nodes, first {dead[0]}")

    def dump(self) -> str:
        """Text dump: one ``src dst phone word|- weight`` line per arc, then finals."""
        lines = []
        for a in range(self.num_arcs):
            s, d, p, w, wt = self.arc(a)
            lines.append(f"{s}\t{d}\t{p}\t{w if w is not None else '-'}\t{wt!r}")
        for f in self.finals:
            lines.append(f"{f}\t{self.eos_weights[f]!r}")
        return "\n".join(lines) + "\n"


def build_graph(
    lex: Lexicon,
    g: NGramLM,
    order: Optional[int] = None,
    words: Optional[Sequence[str]] = None,
) -> DecodingGraph:
    """Compose ``lex`` with ``g``.

    ``order`` caps the LM history carried in graph states (default
    ``min(g.order, 3)``); ``order=1`` gives a single context node. ``words``
    restricts the vocabulary; every requested word must be in the lexicon.
    Lexicon words unknown to the LM are scored as ``<unk>``.
    """
    if len(lex) == 0:
        raise GraphError("lexicon is empty")
    order = min(order or DEFAULT_MAX_ORDER, g.order)
    if words is None:
        vocab = lex.words
    else:
        vocab = sorted(set(words))
        for w in vocab:
            if w not in lex:
                raise GraphError(f"word not in lexicon: {w!r}")
    phones = lex.inventory.labels
    phone_id = {p: i for i, p in enumerate(phones)}
    word_id = {w: i for i, w in enumerate(vocab)}
    chains = [(w, v, tuple(phone_id[p] for p in pron)) for w in vocab for v, pron in enumerate(lex.variants(w))]
    lm_words = {w: g.map_word(w) for w in vocab}

    nodes: List[GraphNode] = []
    context_node: Dict[NGram, int] = {}

    def context(h: NGram) -> int:
        node = context_node.get(h)
        if node is None:
            node = len(nodes)
            context_node[h] = node
            nodes.append(GraphNode(node, "lm-context", history=h))
            queue.append(h)
        return node

    src: List[int] = []
    dst: List[int] = []
    arc_phone: List[int] = []
    arc_word: List[int] = []
    weight: List[float] = []
    eos: Dict[int, float] = {}

    queue: deque = deque()
    start_ctx = g.reduce_context(g.start_context(), order)
    start = context(start_ctx)
    while queue:
        h = queue.popleft()
        u = context_node[h]
        eos[u] = g.logprob(EOS, h) * LN10
        for w, v, pron in chains:
            lw = lm_words[w]
            total = g.logprob(lw, h) * LN10
            share = total / len(pron)
            succ = context(g.reduce_context(h + (lw,), order))
            prev = u
            for pos, p in enumerate(pron):
                if pos == len(pron) - 1:
                    nxt = succ
                    out = word_id[w]
                else:
                    nxt = len(nodes)
                    nodes.append(GraphNode(nxt, "in-word", history=h, word=w, variant=v, position=pos + 1))
                    out = -1
                src.append(prev)
                dst.append(nxt)
                arc_phone.append(p)
                arc_word.append(out)
                weight.append(share)
                prev = nxt

    src_a = np.asarray(src, dtype=np.int64)
    order_idx = np.argsort(src_a, kind="stable")
    graph = DecodingGraph(
        nodes=nodes,
        phones=phones,
        words=tuple(vocab),
        arc_src=src_a[order_idx],
        arc_dst=np.asarray(dst, dtype=np.int64)[order_idx],
        arc_phone=np.asarray(arc_phone, dtype=np.int64)[order_idx],
        arc_word=np.asarray(arc_word, dtype=np.int64)[order_idx],
        arc_weight=np.asarray(weight, dtype=float)[order_idx],
        start=start,
        eos_weights=eos,
    )
    graph.check_connectivity()
    return graph
