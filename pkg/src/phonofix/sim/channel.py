"""Known noisy phone channel used to corrupt reference pronunciations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np


@dataclass(frozen=True)
class ChannelRates:
    sub: float
    dele: float
    ins: float

    def __post_init__(self):
        for v in (self.sub, self.dele, self.ins):
            if not 0.0 <= v <= 1.0:
                raise ValueError("channel rates must lie in [0, 1]")
        if self.sub + self.dele > 1.0:
            raise ValueError("sub + del rates exceed 1")


@dataclass
class CorruptionStats:
    phones: int = 0
    slots: int = 0
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0


def corrupt(
    rates: ChannelRates,
    phones: Sequence[str],
    rng: np.random.Generator,
    confusable: Dict[str, Tuple[str, ...]],
    inventory: Sequence[str],
    stats: CorruptionStats = None,
) -> Tuple[str, ...]:
    """Apply the channel to one phone sequence.

    Each phone is deleted w.p. ``rates.dele`` or replaced w.p. ``rates.sub``
    by a uniform pick from its confusable set; before every phone and after
    the last one an inserted phone (uniform over ``inventory``) appears w.p.
    ``rates.ins``.
    """
    out: List[str] = []
    n = len(phones)
    for i in range(n + 1):
        if rng.random() < rates.ins:
            out.append(inventory[int(rng.integers(len(inventory)))])
            if stats is not None:
                stats.insertions += 1
        if i == n:
            break
        p = phones[i]
        u = rng.random()
        if u < rates.dele:
            if stats is not None:
                stats.deletions += 1
            continue
        if u < rates.dele + rates.sub:
            alts = confusable.get(p, ())
            if alts:
                out.append(alts[int(rng.integers(len(alts)))])
                if stats is not None:
                    stats.substitutions += 1
                continue
        out.append(p)
    if stats is not None:
        stats.phones += n
        stats.slots += n + 1
    return tuple(out)


def true_p_ins(rates: ChannelRates, lengths: Sequence[int]) -> float:
    """Expected share of insertion pairs among all aligned pairs for these lengths."""
    n = float(sum(lengths))
    ins = rates.ins * float(sum(L + 1 for L in lengths))
    return ins / (n + ins) if n + ins else 0.0


def true_emission_diag(rates: ChannelRates, phone: str, confusable: Dict[str, Tuple[str, ...]]) -> float:
    if confusable.get(phone):
        return 1.0 - rates.sub - rates.dele
    return 1.0 - rates.dele
