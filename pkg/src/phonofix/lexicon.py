"""Phone inventory and pronunciation lexicon.

Lexicon files are UTF-8 text with one ``word<TAB>phone phone ...`` entry per
line. Lines starting with ``#`` are comments, except for an optional
``#!phones`` header that declares inventory order up front.
"""

from __future__ import annotations

import itertools
import unicodedata
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

EPS = "<eps>"
UNK_PHONE = "<unk>"
INVENTORY_HEADER = "#!phones"

PhoneSeq = Tuple[str, ...]


class LexiconError(ValueError):
    """Malformed lexicon input."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OOVError(KeyError):
    def __init__(self, word: str):
        self.word = word
        super().__init__(f"word not in lexicon: {word!r}")

    def __str__(self) -> str:
        return self.args[0]


def normalize_word(word: str) -> str:
    return unicodedata.normalize("NFC", word).lower()


def make_phone_seq(phones: Iterable[str]) -> PhoneSeq:
    seq = tuple(phones)
    if EPS in seq:
        raise ValueError("phone sequences never contain the epsilon symbol")
    return seq


@dataclass(frozen=True)
class Phone:
    id: int
    label: str


class PhoneInventory:
    """Ordered phone set. Id 0 is reserved for epsilon."""

    def __init__(self, labels: Iterable[str] = ()):
        self._labels: List[str] = []
        self._index: Dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        if label == EPS:
            raise ValueError(f"{EPS} is reserved and cannot be a phone")
        if not label or any(ch.isspace() for ch in label):
            raise ValueError(f"invalid phone label {label!r}")
        if label not in self._index:
            self._labels.append(label)
            self._index[label] = len(self._labels)
        return self._index[label]

    def id(self, label: str) -> int:
        return self._index[label]

    def label(self, phone_id: int) -> str:
        if phone_id == 0:
            return EPS
        return self._labels[phone_id - 1]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self._labels)

    def phones(self) -> List[Phone]:
        return [Phone(i + 1, lab) for i, lab in enumerate(self._labels)]

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self):
        return iter(self._labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PhoneInventory) and self._labels == other._labels

    def __repr__(self) -> str:
        return f"PhoneInventory({self._labels!r})"


class Lexicon:
    """Immutable word -> pronunciation variants map."""

    def __init__(self, entries: Dict[str, Sequence[Sequence[str]]], inventory: Optional[PhoneInventory] = None):
        inv = PhoneInventory(inventory.labels if inventory is not None else ())
        table: Dict[str, Tuple[PhoneSeq, ...]] = {}
        for word, prons in entries.items():
            key = normalize_word(word)
            variants: List[PhoneSeq] = list(table.get(key, ()))
            for pron in prons:
                seq = make_phone_seq(pron)
                if not seq:
                    raise LexiconError(f"empty pronunciation for {word!r}")
                for p in seq:
                    inv.add(p)
                if seq not in variants:
                    variants.append(seq)
            if not variants:
                raise LexiconError(f"no pronunciation for {word!r}")
            table[key] = tuple(variants)
        self._entries = table
        self.inventory = inv

    def __contains__(self, word: object) -> bool:
        return isinstance(word, str) and normalize_word(word) in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Lexicon)
            and self._entries == other._entries
            and self.inventory == other.inventory
        )

    @property
    def words(self) -> List[str]:
        return sorted(self._entries)

    def variants(self, word: str) -> Tuple[PhoneSeq, ...]:
        try:
            return self._entries[normalize_word(word)]
        except KeyError:
            raise OOVError(word) from None

    def items(self):
        for word in self.words:
            yield word, self._entries[word]

    def merged(self, other: "Lexicon") -> "Lexicon":
        entries: Dict[str, List[PhoneSeq]] = {w: list(v) for w, v in self._entries.items()}
        for word, prons in other.items():
            entries.setdefault(word, [])
            entries[word].extend(prons)
        inv = PhoneInventory(self.inventory.labels)
        for p in other.inventory:
            inv.add(p)
        return Lexicon(entries, inv)


def parse_lexicon(text: str) -> Lexicon:
    inventory = PhoneInventory()
    entries: Dict[str, List[PhoneSeq]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith(INVENTORY_HEADER):
            for label in line[len(INVENTORY_HEADER):].split():
                _add_phone(inventory, label, lineno)
            continue
        if line.startswith("#"):
            continue
        if "\t" not in line:
            raise LexiconError("expected word<TAB>phones", lineno)
        word, _, pron = line.partition("\t")
        word = word.strip()
        phones = pron.split()
        if not word:
            raise LexiconError("empty word", lineno)
        if not phones:
            raise LexiconError(f"empty pronunciation for {word!r}", lineno)
        for p in phones:
            _add_phone(inventory, p, lineno)
        variants = entries.setdefault(normalize_word(word), [])
        seq = tuple(phones)
        if seq not in variants:
            variants.append(seq)
    return Lexicon(entries, inventory)


def _add_phone(inventory: PhoneInventory, label: str, lineno: int) -> None:
    try:
        inventory.add(label)
    except ValueError as exc:
        raise LexiconError(str(exc), lineno) from None


def serialize_lexicon(lex: Lexicon) -> str:
    lines = [INVENTORY_HEADER + " " + " ".join(lex.inventory.labels)]
    for word, prons in lex.items():
        for pron in prons:
            lines.append(f"{word}\t{' '.join(pron)}")
    return "\n".join(lines) + "\n"


def load_lexicon(path) -> Lexicon:
    with open(path, encoding="utf-8") as f:
        return parse_lexicon(f.read())


def save_lexicon(lex: Lexicon, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(serialize_lexicon(lex))


def pronounce(
    lex: Lexicon,
    words: Sequence[str],
    variant_policy: str = "first",
    cm=None,
    observation: Optional[Sequence[str]] = None,
    unk: Optional[str] = None,
) -> PhoneSeq:
    """Concatenate one pronunciation per word.

    ``variant_policy`` is ``"first"`` (first listed variant) or
    ``"min-channel-cost"``, which needs ``cm`` and ``observation`` and picks
    the variant combination with the best channel score. When ``unk`` is given,
    out-of-vocabulary words are pronounced as that single phone instead of
    raising.
    """
    options: List[Tuple[PhoneSeq, ...]] = []
    for w in words:
        if w in lex:
            options.append(lex.variants(w))
        elif unk is not None:
            options.append(((unk,),))
        else:
            raise OOVError(w)

    if variant_policy == "first" or all(len(o) == 1 for o in options):
        if variant_policy not in ("first", "min-channel-cost"):
            raise ValueError(f"unknown variant policy {variant_policy!r}")
        return tuple(p for var in options for p in var[0])
    if variant_policy != "min-channel-cost":
        raise ValueError(f"unknown variant policy {variant_policy!r}")
    if cm is None or observation is None:
        raise ValueError("min-channel-cost needs a confusion model and an observation")

    from .align import channel_logprob

    best: Optional[PhoneSeq] = None
    best_score = -float("inf")
    for combo in itertools.product(*options):
        seq = tuple(p for var in combo for p in var)
        score = channel_logprob(cm, observation, seq)
        if best is None or score > best_score:
            best, best_score = seq, score
    return best if best is not None else ()
