"""Hypotheses, utterance records and their JSON Lines exchange format.

One record per line::

    {"id": "u1", "obs": "p l ey p ae n",
     "asr_nbest": [{"words": "play pan", "acoustic_likelihood": -3.2}],
     "reference": "play pandorum"}

Augmented records additionally carry ``kbest``, a list of
``{"words", "source", "score"}`` objects with the ASR top-1 first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .decoder import Alternative

ASR = "ASR"
PTT = "PTT"
SOURCES = (ASR, PTT)


class DataError(ValueError):
    """Malformed input data; carries the file and line when known."""

    def __init__(self, message: str, path=None, line: Optional[int] = None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}".strip())


@dataclass
class Hypothesis:
    words: Tuple[str, ...]
    source: str
    phones: Optional[Tuple[str, ...]] = None
    scores: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown hypothesis source {self.source!r}")
        self.words = tuple(self.words)


@dataclass
class UtteranceRecord:
    id: str
    obs: Tuple[str, ...]
    asr_nbest: List[Hypothesis]
    reference: Optional[Tuple[str, ...]] = None
    kbest: Optional[List[Hypothesis]] = None

    def __post_init__(self):
        if not self.asr_nbest:
            raise ValueError(f"record {self.id!r} has an empty ASR N-best list")

    @property
    def top(self) -> Hypothesis:
        return self.asr_nbest[0]


def combine_kbest(asr_nbest: Sequence[Hypothesis], ptt_mbest: Sequence[Alternative], n: int = 1, m: int = 10) -> List[Hypothesis]:
    """ASR top-``n`` followed by up to ``m`` PTT alternatives not already present."""
    if not asr_nbest:
        raise ValueError("empty ASR N-best list")
    out = list(asr_nbest[:n])
    seen = {h.words for h in out}
    added = 0
    for alt in ptt_mbest:
        if added >= m:
            break
        if alt.words in seen:
            continue
        seen.add(alt.words)
        out.append(Hypothesis(alt.words, PTT, scores={"ptt_logprob": alt.logprob}))
        added += 1
    return out


def _split(text) -> Tuple[str, ...]:
    if isinstance(text, str):
        return tuple(text.split())
    return tuple(text)


def record_from_json(doc: dict) -> UtteranceRecord:
    nbest = [
        Hypothesis(_split(h["words"]), ASR, scores={"acoustic_likelihood": float(h.get("acoustic_likelihood", 0.0))})
        for h in doc["asr_nbest"]
    ]
    ref = doc.get("reference")
    rec = UtteranceRecord(str(doc["id"]), _split(doc["obs"]), nbest, _split(ref) if ref is not None else None)
    if "kbest" in doc:
        rec.kbest = [
            Hypothesis(_split(h["words"]), h.get("source", ASR), scores={"score": float(h.get("score", 0.0))})
            for h in doc["kbest"]
        ]
    return rec


def record_to_json(rec: UtteranceRecord) -> dict:
    doc = {
        "id": rec.id,
        "obs": " ".join(rec.obs),
        "asr_nbest": [
            {"words": " ".join(h.words), "acoustic_likelihood": h.scores.get("acoustic_likelihood", 0.0)}
            for h in rec.asr_nbest
        ],
    }
    if rec.reference is not None:
        doc["reference"] = " ".join(rec.reference)
    if rec.kbest is not None:
        doc["kbest"] = [
            {
                "words": " ".join(h.words),
                "source": h.source,
                "score": h.scores.get("acoustic_likelihood", h.scores.get("ptt_logprob", h.scores.get("score", 0.0))),
            }
            for h in rec.kbest
        ]
    return doc


def read_records(path) -> List[UtteranceRecord]:
    records = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"bad record: {exc}", path, lineno) from None
    return records


def dumps_records(records: Iterable[UtteranceRecord]) -> str:
    return "".join(json.dumps(record_to_json(r), ensure_ascii=False) + "\n" for r in records)


def write_records(records: Iterable[UtteranceRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps_records(records))
