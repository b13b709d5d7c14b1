"""Discrete product state spaces and exact dense probability mass functions.

States live in V^d where V is a token alphabet [S] or [S] plus a MASK
symbol.  A state is carried around as a packed integer in mixed radix
base |V| with coordinate 0 as the least significant digit.  Tokens use
indices 0..S-1; MASK, when present, is index S so that token indices
stay contiguous.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DomainError,
    ResourceError,
    UnsupportedOperationError,
    ValidationError,
)

DENSE_CAP = 2**21
PMF_ATOL = 1e-12


@dataclass(frozen=True)
class Alphabet:
    """Token alphabet of size S, optionally extended by a MASK symbol."""

    vocab_size: int
    has_mask: bool = False

    def __post_init__(self) -> None:
        if self.vocab_size < 2:
            raise ValidationError(f"vocab_size must be >= 2, got {self.vocab_size}")

    @property
    def n_symbols(self) -> int:
        return self.vocab_size + (1 if self.has_mask else 0)

    @property
    def mask_index(self) -> int:
        if not self.has_mask:
            raise DomainError("alphabet has no MASK symbol")
        return self.vocab_size


@dataclass(frozen=True)
class StateSpace:
    """The product space V^d with packed-integer state indexing."""

    dim: int
    alphabet: Alphabet

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValidationError(f"dim must be >= 1, got {self.dim}")

    @property
    def n_states(self) -> int:
        return self.alphabet.n_symbols**self.dim

    @property
    def base(self) -> int:
        return self.alphabet.n_symbols

    def pack(self, symbols: Sequence[int]) -> int:
        if len(symbols) != self.dim:
            raise DomainError(f"expected {self.dim} coordinates, got {len(symbols)}")
        packed = 0
        for i, s in enumerate(symbols):
            if not 0 <= s < self.base:
                raise DomainError(f"symbol {s} out of range at coordinate {i}")
            packed += int(s) * self.base**i
        return packed

    def unpack(self, packed: int) -> tuple[int, ...]:
        if not 0 <= packed < self.n_states:
            raise DomainError(f"packed index {packed} out of range")
        out = []
        for _ in range(self.dim):
            packed, r = divmod(packed, self.base)
            out.append(r)
        return tuple(out)

    def coordinate(self, packed: int, i: int) -> int:
        self._check_coord(i)
        return (packed // self.base**i) % self.base

    def substitute(self, packed: int, i: int, symbol: int) -> int:
        """Return the state with coordinate i set to `symbol`, others unchanged."""
        self._check_coord(i)
        if not 0 <= symbol < self.base:
            raise DomainError(f"symbol {symbol} out of range")
        cur = self.coordinate(packed, i)
        return packed + (symbol - cur) * self.base**i

    def shift(self, packed: int, i: int, increment: int) -> int:
        """Advance coordinate i by `increment` modulo S (token alphabets only)."""
        if self.alphabet.has_mask:
            raise UnsupportedOperationError("cyclic shift requires a mask-free alphabet")
        S = self.alphabet.vocab_size
        if not 1 <= increment <= S - 1:
            raise DomainError(f"increment must be in 1..{S - 1}, got {increment}")
        self._check_coord(i)
        cur = self.coordinate(packed, i)
        return packed + ((cur + increment) % S - cur) * self.base**i

    def hamming(self, x: int, y: int) -> int:
        return int(np.count_nonzero(np.asarray(self.unpack(x)) != np.asarray(self.unpack(y))))

    def masked_set(self, packed: int) -> set[int]:
        """Coordinates of `packed` equal to MASK."""
        mask = self.alphabet.mask_index
        return {i for i, s in enumerate(self.unpack(packed)) if s == mask}

    def all_states(self) -> np.ndarray:
        """(n_states, dim) array of symbols; row index == packed index."""
        return _all_states(self.base, self.dim, self.n_states)

    def mask_counts(self) -> np.ndarray:
        """Number of MASK coordinates for every packed state."""
        mask = self.alphabet.mask_index
        return np.count_nonzero(self.all_states() == mask, axis=1)

    def substitute_all(self, i: int, symbol: int) -> np.ndarray:
        """Packed indices of substitute(x, i, symbol) for every state x."""
        self._check_coord(i)
        cur = self.all_states()[:, i].astype(np.int64)
        return np.arange(self.n_states, dtype=np.int64) + (symbol - cur) * self.base**i

    def shift_all(self, i: int, increment: int) -> np.ndarray:
        """Packed indices of shift(x, i, increment) for every state x."""
        if self.alphabet.has_mask:
            raise UnsupportedOperationError("cyclic shift requires a mask-free alphabet")
        self._check_coord(i)
        S = self.alphabet.vocab_size
        cur = self.all_states()[:, i].astype(np.int64)
        return np.arange(self.n_states, dtype=np.int64) + ((cur + increment) % S - cur) * self.base**i

    def _check_coord(self, i: int) -> None:
        if not 0 <= i < self.dim:
            raise DomainError(f"coordinate {i} out of range for dim {self.dim}")


@lru_cache(maxsize=64)
def _all_states(base: int, dim: int, n_states: int) -> np.ndarray:
    idx = np.arange(n_states, dtype=np.int64)
    out = np.empty((n_states, dim), dtype=np.int64)
    for i in range(dim):
        out[:, i] = (idx // base**i) % base
    out.setflags(write=False)
    return out


class DensePmf:
    """Exact pmf over a StateSpace, stored densely (one float per state)."""

    __slots__ = ("space", "mass")

    def __init__(self, space: StateSpace, mass: np.ndarray, *, cap: int = DENSE_CAP):
        if space.n_states > cap:
            raise ResourceError(
                f"dense pmf with {space.n_states} states exceeds cap {cap}"
            )
        mass = np.asarray(mass, dtype=np.float64)
        if mass.shape != (space.n_states,):
            raise ValidationError(
                f"mass must have shape ({space.n_states},), got {mass.shape}"
            )
        if np.any(mass < 0):
            raise ValidationError("pmf entries must be nonnegative")
        total = float(mass.sum())
        if abs(total - 1.0) > PMF_ATOL:
            raise ValidationError(f"pmf entries sum to {total!r}, not 1")
        mass = mass.copy()
        mass.setflags(write=False)
        self.space = space
        self.mass = mass

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def alphabet(self) -> Alphabet:
        return self.space.alphabet

    def tensor(self) -> np.ndarray:
        """View with one axis per coordinate (axis i == coordinate i)."""
        d = self.dim
        return self.mass.reshape((self.space.base,) * d).transpose(range(d - 1, -1, -1))

    def support(self, threshold: float = 0.0) -> np.ndarray:
        return np.nonzero(self.mass > threshold)[0]

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, DensePmf)
            and self.space == other.space
            and np.array_equal(self.mass, other.mass)
        )

    def __repr__(self) -> str:
        return f"DensePmf(dim={self.dim}, base={self.space.base}, n={self.space.n_states})"


def normalize(space: StateSpace, raw: Iterable[float], *, cap: int = DENSE_CAP) -> DensePmf:
    """Scale a raw nonnegative mass vector into a valid DensePmf."""
    arr = np.asarray(list(raw) if not isinstance(raw, np.ndarray) else raw, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError("raw mass must be one-dimensional")
    if np.any(arr < 0):
        raise ValidationError("raw mass entries must be nonnegative")
    total = float(arr.sum())
    if total <= 0:
        raise ValidationError("raw mass must have positive total")
    return DensePmf(space, arr / total, cap=cap)


def renormalized(space: StateSpace, arr: np.ndarray, *, guard: float = 1e-9) -> DensePmf:
    """Rebuild a pmf from an array whose sum drifted by float roundoff only."""
    arr = np.clip(np.asarray(arr, dtype=np.float64), 0.0, None)
    total = float(arr.sum())
    if abs(total - 1.0) > guard:
        raise ValidationError(f"mass drifted too far from 1 (sum={total!r})")
    return DensePmf(space, arr / total)


def point_mass(space: StateSpace, packed: int) -> DensePmf:
    mass = np.zeros(space.n_states)
    mass[packed] = 1.0
    return DensePmf(space, mass)


def uniform_pmf(space: StateSpace) -> DensePmf:
    return DensePmf(space, np.full(space.n_states, 1.0 / space.n_states))


def save_distribution(pmf: DensePmf, path: str) -> None:
    """Write the sparse JSON distribution format (omitted states are zero)."""
    entries = [
        [list(map(int, pmf.space.unpack(int(i)))), float(pmf.mass[i])]
        for i in pmf.support()
    ]
    doc = {
        "dim": pmf.dim,
        "vocab_size": pmf.alphabet.vocab_size,
        "has_mask": pmf.alphabet.has_mask,
        "entries": entries,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_distribution(path: str, *, cap: int = DENSE_CAP) -> DensePmf:
    """Load the JSON distribution format; normalizes and validates."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        space = StateSpace(int(doc["dim"]), Alphabet(int(doc["vocab_size"]), bool(doc["has_mask"])))
        entries = doc["entries"]
    except KeyError as exc:
        raise ValidationError(f"distribution file missing field {exc}") from exc
    raw = np.zeros(space.n_states)
    for symbols, mass in entries:
        if mass < 0:
            raise ValidationError("distribution file has negative mass")
        raw[space.pack(symbols)] += float(mass)
    return normalize(space, raw, cap=cap)
