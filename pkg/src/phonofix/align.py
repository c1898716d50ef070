"""Needleman-Wunsch phone alignment and the phone confusion channel."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lexicon import EPS, UNK_PHONE

DEFAULT_FLOOR = 1e-6

AlignmentPair = Tuple[str, str]  # (observed, reference); either may be EPS but not both


@dataclass(frozen=True)
class Alignment:
    pairs: Tuple[AlignmentPair, ...]
    matches: int
    substitutions: int
    deletions: int
    insertions: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def nw_align(
    observed: Sequence[str],
    reference: Sequence[str],
    match: float = 0.0,
    sub: float = 1.0,
    gap: float = 1.0,
) -> Alignment:
    """Global minimum-cost alignment of ``observed`` against ``reference``.

    Backtracking prefers match, then substitution, then deletion (reference
    phone missing from the observation), then insertion.
    """
    n, m = len(observed), len(reference)
    d = [[0.0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        d[i][0] = i * gap
    for j in range(1, m + 1):
        d[0][j] = j * gap
    for i in range(1, n + 1):
        o = observed[i - 1]
        row, prev = d[i], d[i - 1]
        for j in range(1, m + 1):
            diag = prev[j - 1] + (match if o == reference[j - 1] else sub)
            row[j] = min(diag, row[j - 1] + gap, prev[j] + gap)

    pairs: List[AlignmentPair] = []
    counts = Counter()
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            same = observed[i - 1] == reference[j - 1]
            if d[i][j] == d[i - 1][j - 1] + (match if same else sub):
                pairs.append((observed[i - 1], reference[j - 1]))
                counts["match" if same else "sub"] += 1
                i, j = i - 1, j - 1
                continue
        if j > 0 and d[i][j] == d[i][j - 1] + gap:
            pairs.append((EPS, reference[j - 1]))
            counts["del"] += 1
            j -= 1
            continue
        pairs.append((observed[i - 1], EPS))
        counts["ins"] += 1
        i -= 1
    pairs.reverse()
    return Alignment(tuple(pairs), counts["match"], counts["sub"], counts["del"], counts["ins"])


class ConfusionModel:
    """Emission distributions P(observed | reference) over phones plus epsilon.

    ``emission[r, c]`` holds P(column phone | row phone) where index 0 is
    epsilon and ``i >= 1`` is ``inventory[i - 1]``. Row 0 is the insertion
    emission distribution and has ``emission[0, 0] == 0``.
    """

    def __init__(self, inventory: Sequence[str], emission: np.ndarray, p_ins: float):
        self.inventory: Tuple[str, ...] = tuple(inventory)
        self._index = {lab: i + 1 for i, lab in enumerate(self.inventory)}
        self._index[EPS] = 0
        emission = np.asarray(emission, dtype=float)
        size = len(self.inventory) + 1
        if emission.shape != (size, size):
            raise ValueError(f"emission must be {size}x{size}")
        if not 0.0 <= p_ins <= 1.0:
            raise ValueError("p_ins must lie in [0, 1]")
        self.emission = emission
        self.p_ins = float(p_ins)
        with np.errstate(divide="ignore"):
            self.log_emission = np.log(emission)
            self.log_ins = math.log(p_ins) if p_ins > 0 else -math.inf
            self.log_no_ins = math.log1p(-p_ins) if p_ins < 1 else -math.inf
        self.log_table = self.log_emission.tolist()

    def index(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"phone {label!r} not in confusion model inventory") from None

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def prob(self, observed: str, reference: str) -> float:
        return float(self.emission[self.index(reference), self.index(observed)])

    def row(self, reference: str) -> Dict[str, float]:
        r = self.index(reference)
        labels = (EPS,) + self.inventory
        return {lab: float(self.emission[r, c]) for c, lab in enumerate(labels) if not (r == 0 and c == 0)}

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, ConfusionModel)
            and self.inventory == other.inventory
            and self.p_ins == other.p_ins
            and np.array_equal(self.emission, other.emission)
        )

    # serialization: 12 significant digits, so dump(load(dump(cm))) is stable
    def to_json(self) -> str:
        labels = (EPS,) + self.inventory
        emission = {}
        for r, ref in enumerate(labels):
            emission[ref] = {
                obs: _dec(self.emission[r, c]) for c, obs in enumerate(labels) if not (r == 0 and c == 0)
            }
        doc = {"inventory": list(self.inventory), "p_ins": _dec(self.p_ins), "emission": emission}
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ConfusionModel":
        doc = json.loads(text)
        inventory = list(doc["inventory"])
        labels = [EPS] + inventory
        pos = {lab: i for i, lab in enumerate(labels)}
        em = np.zeros((len(labels), len(labels)))
        for ref, row in doc["emission"].items():
            for obs, val in row.items():
                em[pos[ref], pos[obs]] = float(val)
        return cls(inventory, em, float(doc["p_ins"]))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path) -> "ConfusionModel":
        with open(path, encoding="utf-8") as f:
            return cls.from_json(f.read())


def _dec(x: float) -> str:
    return format(float(x), ".12g")


def count_alignment_pairs(dev: Iterable[Tuple[Sequence[str], Sequence[str]]]) -> Counter:
    counts: Counter = Counter()
    for observed, reference in dev:
        counts.update(nw_align(observed, reference).pairs)
    return counts


def estimate_confusion(
    dev: Sequence[Tuple[Sequence[str], Sequence[str]]],
    inventory: Optional[Iterable[str]] = None,
    floor: float = DEFAULT_FLOOR,
) -> ConfusionModel:
    """Estimate emissions and the insertion probability from aligned pairs.

    ``dev`` holds (observed, reference) phone sequences. Relative frequencies
    are mixed with a uniform floor so every cell is at least ``floor``.
    Reference phones never seen in ``dev`` get an identity-dominant row.
    """
    if not dev:
        raise ValueError("need at least one development pair")
    counts = count_alignment_pairs(dev)
    return confusion_from_counts(counts, inventory, floor)


def confusion_from_counts(counts: Counter, inventory: Optional[Iterable[str]] = None, floor: float = DEFAULT_FLOOR) -> ConfusionModel:
    labels_seen = {p for pair in counts for p in pair if p != EPS}
    inv = list(dict.fromkeys(list(inventory or ()) + sorted(labels_seen)))
    if UNK_PHONE not in inv:
        inv.append(UNK_PHONE)
    size = len(inv) + 1
    pos = {lab: i + 1 for i, lab in enumerate(inv)}
    pos[EPS] = 0
    raw = np.zeros((size, size))
    for (obs, ref), c in counts.items():
        raw[pos[ref], pos[obs]] += c

    total_pairs = sum(counts.values())
    p_ins = float(raw[0].sum() / total_pairs) if total_pairs else 0.0

    emission = np.zeros((size, size))
    for r in range(size):
        cells = np.ones(size, dtype=bool)
        if r == 0:
            cells[0] = False
        row_total = raw[r].sum()
        if row_total > 0:
            dist = raw[r] / row_total
        elif r == 0:
            dist = cells / cells.sum()
        else:
            dist = np.zeros(size)
            dist[r] = 1.0
        k = cells.sum()
        emission[r] = np.where(cells, floor + (1.0 - k * floor) * dist, 0.0)
    return ConfusionModel(inv, emission, p_ins)


def raw_confusion(counts: Counter) -> Tuple[Dict[Tuple[str, str], float], float]:
    """Unsmoothed P(o|o') and p_ins straight from pair counts."""
    ref_totals: Counter = Counter()
    for (_, ref), c in counts.items():
        ref_totals[ref] += c
    probs = {(obs, ref): c / ref_totals[ref] for (obs, ref), c in counts.items()}
    total = sum(counts.values())
    ins = sum(c for (_, ref), c in counts.items() if ref == EPS)
    return probs, (ins / total if total else 0.0)


def channel_logprob(cm: ConfusionModel, observed: Sequence[str], reference: Sequence[str]) -> float:
    """Best-alignment natural-log probability of ``observed`` given ``reference``."""
    idx = cm._index
    try:
        obs = [idx[p] for p in observed]
        ref = [idx[p] for p in reference]
    except KeyError as exc:
        raise KeyError(f"phone {exc.args[0]!r} not in confusion model inventory") from None
    le = cm.log_table
    ins_row = le[0]
    keep = cm.log_no_ins
    ins = cm.log_ins
    n, m = len(obs), len(ref)
    neg = -math.inf
    # per reference phone: substitution rows and deletion scores
    rows = [le[r] for r in ref]
    dels = [keep + row[0] for row in rows]
    prev = [0.0] * (m + 1)
    for j in range(1, m + 1):
        prev[j] = prev[j - 1] + dels[j - 1]
    for i in range(n):
        o = obs[i]
        ins_cost = ins + ins_row[o]
        cur = [prev[0] + ins_cost] + [neg] * m
        left = cur[0]
        for j in range(1, m + 1):
            best = prev[j - 1] + keep + rows[j - 1][o]
            cand = left + dels[j - 1]
            if cand > best:
                best = cand
            cand = prev[j] + ins_cost
            if cand > best:
                best = cand
            cur[j] = left = best
        prev = cur
    return float(prev[m])


def phonetic_cost(cm: ConfusionModel, top_phones: Sequence[str], hyp_phones: Sequence[str]) -> float:
    """Distance of a hypothesis from the ASR top-1, as a non-negative cost."""
    return -channel_logprob(cm, top_phones, hyp_phones)
