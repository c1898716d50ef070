"""Synthetic voice-search scenario: words, entity catalog, corpora and lexicon.

Words are strings of syllables from a shipped table; the toy G2P maps letter
clusters to phones by greedy longest match. Tail entities are emerging titles
whose words never occur in the stale LM corpus. Titles are drawn from shared
word pools; part of the tail pool respells the last syllable of a head word,
so those titles sound like something the first pass already knows.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..lexicon import Lexicon
from ..rescorer.model import TrainConfig

Sentence = Tuple[str, ...]

PLAY = "play"
PLAY_PRON = ("p", "l", "ey")
STREAMS = {"words": 1, "catalog": 2, "lm": 3, "dev": 4, "train": 5, "head": 6, "tail": 7, "entity": 8}


def _table(name: str) -> List[List[str]]:
    text = resources.files("phonofix.sim").joinpath("data").joinpath(name).read_text(encoding="utf-8")
    return [line.split("\t") for line in text.splitlines() if line and not line.startswith("#")]


def grapheme_table() -> Dict[str, str]:
    return {g: p for g, p in _table("graphemes.tsv")}


def syllable_table() -> Dict[str, Tuple[str, ...]]:
    return {s: tuple(p.split()) for s, p in _table("syllables.tsv")}


def confusable_sets() -> Dict[str, Tuple[str, ...]]:
    """Each phone's substitution candidates: the other members of its groups."""
    out: Dict[str, set] = {}
    for (line,) in _table("confusable.tsv"):
        group = line.split()
        for p in group:
            out.setdefault(p, set()).update(q for q in group if q != p)
    return {p: tuple(sorted(q)) for p, q in sorted(out.items())}


class G2P:
    """Greedy longest-match letter-cluster to phone conversion."""

    def __init__(self, table: Optional[Dict[str, str]] = None):
        self.table = table if table is not None else grapheme_table()
        self.longest = max(len(g) for g in self.table)

    def __call__(self, word: str) -> Tuple[str, ...]:
        phones = []
        i = 0
        while i < len(word):
            for n in range(min(self.longest, len(word) - i), 0, -1):
                p = self.table.get(word[i:i + n])
                if p is not None:
                    phones.append(p)
                    i += n
                    break
            else:
                raise ValueError(f"no grapheme rule for {word[i:]!r} in {word!r}")
        return tuple(phones)


@dataclass
class DecoderParams:
    beam: int = 15
    m: int = 10
    max_consecutive_deletions: int = 5


@dataclass
class ScenarioConfig:
    seed: int = 0
    n_head_words: int = 80
    n_head_entities: int = 40
    n_tail_train: int = 40
    n_tail_test: int = 40
    zipf: float = 1.1
    sub_rate: float = 0.08
    del_rate: float = 0.03
    ins_rate: float = 0.03
    n_general_phrases: int = 120
    entity_share: float = 0.4  # share of entity queries in head traffic
    derived_tail_share: float = 0.5
    entity_pool_ratio: float = 1.2  # distinct entity words per title
    train_tail_share: float = 0.3
    play_share: float = 0.5  # share of entity queries using the "play" template
    n_lm_train: int = 3000
    n_dev: int = 1500
    n_rescorer_train: int = 800
    n_test_head: int = 200
    n_test_tail: int = 150
    lm_order: int = 2
    asr: DecoderParams = field(default_factory=lambda: DecoderParams(beam=15, m=3))
    ptt: DecoderParams = field(default_factory=DecoderParams)
    n_asr: int = 1  # ASR hypotheses kept in the K-best
    floor: float = 1e-6
    rescorer: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        for name in ("sub_rate", "del_rate", "ins_rate"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.sub_rate + self.del_rate >= 1.0:
            raise ValueError("sub_rate + del_rate must be < 1")
        for f in fields(self):
            if f.name.startswith("n_") and getattr(self, f.name) < 1:
                raise ValueError(f"{f.name} must be >= 1")
        if isinstance(self.asr, dict):
            self.asr = DecoderParams(**self.asr)
        if isinstance(self.ptt, dict):
            self.ptt = DecoderParams(**self.ptt)
        if isinstance(self.rescorer, dict):
            d = dict(self.rescorer)
            d["mask"] = tuple(d.get("mask", ()))
            self.rescorer = TrainConfig(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["rescorer"] = self.rescorer.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]


def stream(seed: int, name: str, index: int = 0) -> np.random.Generator:
    """Independent counter-based RNG stream, so work order never changes results."""
    return np.random.default_rng(np.random.SeedSequence([seed, STREAMS[name], index]))


def zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


@dataclass
class Scenario:
    config: ScenarioConfig
    lexicon: Lexicon
    general_words: List[str]
    phrases: List[Sentence]
    head_titles: List[Sentence]
    tail_train_titles: List[Sentence]
    tail_test_titles: List[Sentence]
    stale_corpus: List[Sentence]
    entity_corpus: List[Sentence]
    dev: List[Sentence]
    train: List[Sentence]
    test_head: List[Sentence]
    test_tail: List[Sentence]
    train_is_tail: List[bool] = field(default_factory=list)

    @property
    def stale_vocab(self) -> set:
        return {w for s in self.stale_corpus for w in s}

    @property
    def entity_vocab(self) -> set:
        return {w for s in self.entity_corpus for w in s}


class _WordMaker:
    def __init__(self, rng: np.random.Generator, g2p: G2P):
        self.rng = rng
        self.g2p = g2p
        self.syllables = sorted(syllable_table())
        self.used: Dict[str, Tuple[str, ...]] = {}
        self.prons: set = {PLAY_PRON}

    def _accept(self, word: str) -> bool:
        if word in self.used or word == PLAY:
            return False
        pron = self.g2p(word)
        if pron in self.prons:
            return False
        self.used[word] = pron
        self.prons.add(pron)
        return True

    def fresh(self, lengths: Sequence[int], probs: Sequence[float]) -> str:
        while True:
            k = int(self.rng.choice(lengths, p=probs))
            word = "".join(self.syllables[int(i)] for i in self.rng.integers(len(self.syllables), size=k))
            if self._accept(word):
                return word

    def respell(self, word: str, parts: List[str], table: Dict[str, Tuple[str, ...]]) -> str:
        """Respell the last syllable keeping its onset (append one to a monosyllable)."""
        onset = table[parts[-1]][0] if parts and parts[-1] in table else None
        pool = [s for s in self.syllables if table[s][0] == onset and s != parts[-1]] if len(parts) > 1 else []
        for _ in range(1000):
            if pool:
                cand = "".join(parts[:-1]) + pool[int(self.rng.integers(len(pool)))]
            else:
                cand = word + self.syllables[int(self.rng.integers(len(self.syllables)))]
            if self._accept(cand):
                return cand
        return self.fresh([2, 3], [0.5, 0.5])


def _split_syllables(word: str, table: Dict[str, Tuple[str, ...]]) -> List[str]:
    # every syllable has an onset consonant, so a left-to-right DP split is unique enough
    best: Dict[int, List[str]] = {0: []}
    for i in range(len(word)):
        if i not in best:
            continue
        for j in range(i + 1, min(len(word), i + 6) + 1):
            if word[i:j] in table and j not in best:
                best[j] = best[i] + [word[i:j]]
    return best.get(len(word), [word])


def entity_queries(titles: Sequence[Sentence]) -> List[Sentence]:
    """Both carrier shapes for every title: "play <title>" and the bare title."""
    out: List[Sentence] = []
    for t in titles:
        out.append((PLAY,) + tuple(t))
        out.append(tuple(t))
    return out


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    g2p = G2P()
    table = syllable_table()
    maker = _WordMaker(stream(cfg.seed, "words"), g2p)
    general = [maker.fresh([1, 2], [0.6, 0.4]) for _ in range(cfg.n_head_words)]
    rng = stream(cfg.seed, "catalog")

    gw = zipf_weights(len(general), cfg.zipf)
    phrases: List[Sentence] = []
    seen = set()
    while len(phrases) < cfg.n_general_phrases:
        k = int(rng.integers(2, 5))
        ph = tuple(general[int(i)] for i in rng.choice(len(general), size=k, p=gw))
        if ph not in seen:
            seen.add(ph)
            phrases.append(ph)

    def titles_from(pool: Sequence[str], n: int, taken: set) -> List[Sentence]:
        # titles share words, so only the entity LM knows which combinations exist
        out: List[Sentence] = []
        while len(out) < n:
            k = int(rng.choice([1, 2, 3], p=[0.4, 0.4, 0.2]))
            t = tuple(pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False))
            if t not in taken:
                taken.add(t)
                out.append(t)
        return out

    taken: set = set()
    pool_size = lambda n: max(2, int(round(cfg.entity_pool_ratio * n)))
    head_pool = [maker.fresh([2, 3], [0.6, 0.4]) for _ in range(pool_size(cfg.n_head_entities))]
    head_titles = titles_from(head_pool, cfg.n_head_entities, taken)

    def tail_pool(n: int) -> List[str]:
        out = []
        for _ in range(pool_size(n)):
            if rng.random() < cfg.derived_tail_share:
                src = head_pool[int(rng.integers(len(head_pool)))]
                out.append(maker.respell(src, _split_syllables(src, table), table))
            else:
                out.append(maker.fresh([2, 3], [0.6, 0.4]))
        return out

    tail_train = titles_from(tail_pool(cfg.n_tail_train), cfg.n_tail_train, taken)
    tail_test = titles_from(tail_pool(cfg.n_tail_test), cfg.n_tail_test, taken)

    lexicon = Lexicon({w: [p] for w, p in sorted(maker.used.items())} | {PLAY: [PLAY_PRON]})

    pw = zipf_weights(len(phrases), cfg.zipf)
    hw = zipf_weights(len(head_titles), cfg.zipf)

    def head_queries(r: np.random.Generator, n: int) -> List[Sentence]:
        out = []
        for _ in range(n):
            if r.random() < cfg.entity_share:
                t = head_titles[int(r.choice(len(head_titles), p=hw))]
                out.append(((PLAY,) if r.random() < cfg.play_share else ()) + t)
            else:
                out.append(phrases[int(r.choice(len(phrases), p=pw))])
        return out

    def tail_queries(r: np.random.Generator, titles: Sequence[Sentence], n: int) -> List[Sentence]:
        out = []
        for _ in range(n):
            t = titles[int(r.integers(len(titles)))]
            out.append(((PLAY,) if r.random() < cfg.play_share else ()) + t)
        return out

    stale = head_queries(stream(cfg.seed, "lm"), cfg.n_lm_train)
    entity = entity_queries(head_titles + tail_train + tail_test)
    dev = head_queries(stream(cfg.seed, "dev"), cfg.n_dev)

    r = stream(cfg.seed, "train")
    train: List[Sentence] = []
    train_is_tail: List[bool] = []
    for _ in range(cfg.n_rescorer_train):
        is_tail = bool(r.random() < cfg.train_tail_share)
        train.extend(tail_queries(r, tail_train, 1) if is_tail else head_queries(r, 1))
        train_is_tail.append(is_tail)

    return Scenario(
        config=cfg,
        lexicon=lexicon,
        general_words=general,
        phrases=phrases,
        head_titles=head_titles,
        tail_train_titles=tail_train,
        tail_test_titles=tail_test,
        stale_corpus=stale,
        entity_corpus=entity,
        dev=dev,
        train=train,
        test_head=head_queries(stream(cfg.seed, "head"), cfg.n_test_head),
        test_tail=tail_queries(stream(cfg.seed, "tail"), tail_test, cfg.n_test_tail),
        train_is_tail=train_is_tail,
    )


def corpus_text(corpus: Sequence[Sentence]) -> str:
    return "".join(" ".join(s) + "\n" for s in corpus)
