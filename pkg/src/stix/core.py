"""Domain types shared by every index: objects, vocabulary, bitmaps, queries."""

from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from stix.geometry import Mbr


class StixError(Exception):
    """Base class for library errors."""


class CorruptInputError(StixError, ValueError):
    pass


class UnsupportedOperationError(StixError):
    pass


class TrainingDivergedError(StixError, ArithmeticError):
    pass


class SnapshotFormatError(StixError, ValueError):
    pass


@dataclass(frozen=True)
class SpatioTextualObject:
    id: int
    point: tuple[float, float]
    keywords: frozenset[int] = frozenset()

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.point):
            raise CorruptInputError(f"object {self.id} has a non-finite coordinate {self.point}")


class KeywordVocabulary:
    """Bijection between keyword strings and dense ids ``0..size-1``."""

    def __init__(self, words: Iterable[str] = ()):
        self._words: list[str] = []
        self._ids: dict[str, int] = {}
        for w in words:
            self.add(w)

    def add(self, word: str) -> int:
        kid = self._ids.get(word)
        if kid is None:
            kid = len(self._words)
            self._ids[word] = kid
            self._words.append(word)
        return kid

    @property
    def size(self) -> int:
        return len(self._words)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return word in self._ids

    def __eq__(self, other) -> bool:
        return isinstance(other, KeywordVocabulary) and self._words == other._words

    def id_of(self, word: str) -> int:
        try:
            return self._ids[word]
        except KeyError:
            raise KeyError(f"unknown keyword {word!r}") from None

    def word_of(self, kid: int) -> str:
        return self._words[kid]

    @property
    def words(self) -> list[str]:
        return list(self._words)

    def lookup(self, words: Iterable[str]) -> frozenset[int] | None:
        """Ids for ``words``; None if any word is absent (query unsatisfiable)."""
        ids = []
        for w in words:
            kid = self._ids.get(w)
            if kid is None:
                return None
            ids.append(kid)
        return frozenset(ids)


def build_vocabulary(keyword_sets: Iterable[Iterable[str]]) -> KeywordVocabulary:
    """Assign ids in order of first appearance."""
    vocab = KeywordVocabulary()
    for kws in keyword_sets:
        for w in kws:
            vocab.add(w)
    return vocab


@dataclass(frozen=True)
class Bitmap:
    """Bit vector over the keyword corpus, packed into a Python int.

    Bit ``i`` (value ``1 << i``) is set iff keyword id ``i`` is present.
    """

    bits: int
    length: int

    @classmethod
    def from_ids(cls, ids: Iterable[int], length: int) -> Bitmap:
        bits = 0
        for i in ids:
            if not 0 <= i < length:
                raise CorruptInputError(f"keyword id {i} outside vocabulary of size {length}")
            bits |= 1 << i
        return cls(bits, length)

    def ids(self) -> frozenset[int]:
        out = []
        b = self.bits
        while b:
            low = b & -b
            out.append(low.bit_length() - 1)
            b ^= low
        return frozenset(out)

    def count(self) -> int:
        return self.bits.bit_count()

    def _check(self, other: Bitmap):
        if self.length != other.length:
            raise ValueError(f"bitmap lengths differ: {self.length} vs {other.length}")

    def __and__(self, other: Bitmap) -> Bitmap:
        self._check(other)
        return Bitmap(self.bits & other.bits, self.length)

    def __or__(self, other: Bitmap) -> Bitmap:
        self._check(other)
        return Bitmap(self.bits | other.bits, self.length)

    def __xor__(self, other: Bitmap) -> Bitmap:
        self._check(other)
        return Bitmap(self.bits ^ other.bits, self.length)

    def __invert__(self) -> Bitmap:
        return Bitmap(~self.bits & ((1 << self.length) - 1), self.length)

    def __str__(self) -> str:
        # bit 0 printed first
        return "".join("1" if (self.bits >> i) & 1 else "0" for i in range(self.length))


def encode_bitmap(vocab: KeywordVocabulary, keywords: Iterable[int]) -> Bitmap:
    return Bitmap.from_ids(keywords, vocab.size)


def keyword_mask(keywords: Iterable[int]) -> int:
    bits = 0
    for k in keywords:
        bits |= 1 << k
    return bits


@dataclass(frozen=True)
class WindowQuery:
    """Objects inside ``window`` carrying every keyword id in ``keywords``."""

    window: Mbr
    keywords: frozenset[int] = frozenset()

    def __post_init__(self):
        w = self.window
        if w[0] > w[2] or w[1] > w[3]:
            raise ValueError(f"window lower corner exceeds upper corner: {tuple(w)}")
        object.__setattr__(self, "window", Mbr(*map(float, w)))
        object.__setattr__(self, "keywords", frozenset(self.keywords))

    @cached_property
    def mask(self) -> int:
        return keyword_mask(self.keywords)


@dataclass(frozen=True)
class KnnQuery:
    """The ``k`` objects nearest to ``point`` carrying every keyword id in ``keywords``."""

    point: tuple[float, float]
    keywords: frozenset[int] = frozenset()
    k: int = 10

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be positive, got {self.k}")
        object.__setattr__(self, "point", (float(self.point[0]), float(self.point[1])))
        object.__setattr__(self, "keywords", frozenset(self.keywords))

    @cached_property
    def mask(self) -> int:
        return keyword_mask(self.keywords)


@dataclass(frozen=True)
class ResultSet:
    """Object ids; window results ascending, kNN results by (distance, id)."""

    ids: tuple[int, ...] = ()
    distances: tuple[float, ...] | None = None

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        return iter(self.ids)


@dataclass(eq=False)
class Dataset:
    """Column store of spatio-textual objects.

    Coordinates are held normalised to the unit square; ``bounds`` keeps the
    original extent so raw coordinates can be mapped in and out. Indices
    address objects by row position; ``ids`` maps rows to object ids.
    """

    ids: np.ndarray
    xy: np.ndarray
    keywords: list[frozenset[int]]
    vocab: KeywordVocabulary
    bounds: Mbr = field(default_factory=lambda: Mbr(0.0, 0.0, 1.0, 1.0))

    def __post_init__(self):
        self.ids = np.ascontiguousarray(self.ids, dtype=np.int64)
        self.xy = np.ascontiguousarray(self.xy, dtype=np.float64).reshape(-1, 2)
        n = len(self.ids)
        if len(self.xy) != n or len(self.keywords) != n:
            raise CorruptInputError("ids, coordinates and keyword sets differ in length")
        if n and not np.isfinite(self.xy).all():
            raise CorruptInputError("non-finite coordinate in dataset")
        if len(np.unique(self.ids)) != n:
            raise CorruptInputError("duplicate object id in dataset")
        size = self.vocab.size
        for kws in self.keywords:
            for k in kws:
                if not 0 <= k < size:
                    raise CorruptInputError(f"keyword id {k} outside vocabulary of size {size}")

    @classmethod
    def from_records(
        cls,
        ids: Sequence[int],
        points,
        keyword_strings: Sequence[Iterable[str]],
        *,
        normalize: bool = True,
    ) -> Dataset:
        """Build the vocabulary in record order and (optionally) min-max normalise."""
        keyword_strings = [list(kws) for kws in keyword_strings]
        vocab = build_vocabulary(keyword_strings)
        keywords = [frozenset(vocab.id_of(w) for w in kws) for kws in keyword_strings]
        xy = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        if len(xy) and not np.isfinite(xy).all():
            raise CorruptInputError("non-finite coordinate in input")
        bounds = Mbr(0.0, 0.0, 1.0, 1.0)
        if normalize and len(xy):
            bounds = Mbr.of_points(xy)
            xy = normalize_points(xy, bounds)
        return cls(np.asarray(ids, dtype=np.int64), xy, keywords, vocab, bounds)

    def __len__(self) -> int:
        return len(self.ids)

    @cached_property
    def masks(self) -> list[int]:
        """Per-object keyword bitmaps as ints."""
        return [keyword_mask(kws) for kws in self.keywords]

    @cached_property
    def mask_words(self) -> np.ndarray:
        """Per-object bitmaps as an ``(n, words)`` uint64 matrix."""
        return pack_masks(self.masks, self.vocab.size)

    @cached_property
    def row_of(self) -> dict[int, int]:
        return {int(i): r for r, i in enumerate(self.ids)}

    def object(self, row: int) -> SpatioTextualObject:
        return SpatioTextualObject(
            int(self.ids[row]), (float(self.xy[row, 0]), float(self.xy[row, 1])), self.keywords[row]
        )

    def objects(self) -> list[SpatioTextualObject]:
        return [self.object(r) for r in range(len(self))]

    def bitmap(self, row: int) -> Bitmap:
        return Bitmap(self.masks[row], self.vocab.size)

    def to_unit(self, p) -> tuple[float, float]:
        return tuple(normalize_points(np.array([p], dtype=np.float64), self.bounds)[0])


def normalize_points(xy: np.ndarray, bounds: Mbr) -> np.ndarray:
    out = np.array(xy, dtype=np.float64)
    for axis, (lo, hi) in enumerate(((bounds[0], bounds[2]), (bounds[1], bounds[3]))):
        span = hi - lo
        out[:, axis] = (out[:, axis] - lo) / span if span > 0 else 0.0
    return out


def n_words(length: int) -> int:
    return max(1, (length + 63) // 64)


def pack_masks(masks: Sequence[int], length: int) -> np.ndarray:
    w = n_words(length)
    out = np.zeros((len(masks), w), dtype=np.uint64)
    for j in range(w):
        shift = 64 * j
        out[:, j] = [(m >> shift) & 0xFFFFFFFFFFFFFFFF for m in masks]
    return out


def pack_mask(mask: int, length: int) -> np.ndarray:
    return pack_masks([mask], length)[0]
