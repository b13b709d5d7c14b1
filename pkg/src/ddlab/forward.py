"""Forward noising machinery for the uniform and masking processes.

Both processes are time-homogeneous CTMCs acting independently per
coordinate, so forward marginals are computed exactly from closed-form
per-token transition kernels rather than by ODE integration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DomainError, UnsupportedOperationError, ValidationError
from .state import Alphabet, DensePmf, StateSpace, renormalized

ROW_ATOL = 1e-12


class NoiseKind(Enum):
    UNIFORM = "uniform"
    MASKING = "masking"

    def check_alphabet(self, alphabet: Alphabet) -> None:
        if self is NoiseKind.UNIFORM and alphabet.has_mask:
            raise ValidationError("uniform noising runs on a mask-free alphabet")
        if self is NoiseKind.MASKING and not alphabet.has_mask:
            raise ValidationError("masking noising needs a MASK symbol")


@dataclass(frozen=True)
class RateMatrixTok:
    """Per-token generator: off-diagonal >= 0, zero row sums."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        off = m - np.diag(np.diag(m))
        if np.any(off < 0):
            raise ValidationError("rate matrix has negative off-diagonal entries")
        if np.max(np.abs(m.sum(axis=1))) > ROW_ATOL:
            raise ValidationError("rate matrix rows must sum to zero")
        object.__setattr__(self, "matrix", m)


@dataclass(frozen=True)
class TokenKernel:
    """Row-stochastic per-token transition matrix between two times."""

    matrix: np.ndarray
    t_from: float = 0.0
    t_to: float = 0.0

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if np.any(m < -ROW_ATOL) or np.any(m > 1 + ROW_ATOL):
            raise ValidationError("kernel entries must lie in [0, 1]")
        if np.max(np.abs(m.sum(axis=1) - 1.0)) > ROW_ATOL:
            raise ValidationError("kernel rows must sum to one")
        object.__setattr__(self, "matrix", m)

    @property
    def elapsed(self) -> float:
        return self.t_to - self.t_from


def alpha(t: float, vocab_size: int) -> float:
    """Score-contraction factor (1 - e^-t) / (1 + (S-1) e^-t) of the uniform process."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    if vocab_size < 2:
        raise DomainError("vocab_size must be >= 2")
    e = math.exp(-t)
    return (1.0 - e) / (1.0 + (vocab_size - 1) * e)


def token_rate_matrix(kind: NoiseKind, alphabet: Alphabet) -> RateMatrixTok:
    kind.check_alphabet(alphabet)
    S = alphabet.vocab_size
    if kind is NoiseKind.UNIFORM:
        m = np.full((S, S), 1.0 / S)
        np.fill_diagonal(m, -(S - 1) / S)
    else:
        n = alphabet.n_symbols
        m = np.zeros((n, n))
        mask = alphabet.mask_index
        for a in range(S):
            m[a, mask] = 1.0
            m[a, a] = -1.0
    return RateMatrixTok(m)


def forward_token_kernel(kind: NoiseKind, alphabet: Alphabet, t: float) -> TokenKernel:
    """Closed-form exp(t * Q_tok) for either noising process."""
    if t < 0:
        raise DomainError(f"time must be nonnegative, got {t}")
    kind.check_alphabet(alphabet)
    S = alphabet.vocab_size
    e = math.exp(-t)
    if kind is NoiseKind.UNIFORM:
        m = np.full((S, S), (1.0 - e) / S)
        np.fill_diagonal(m, (1.0 + (S - 1) * e) / S)
    else:
        n = alphabet.n_symbols
        mask = alphabet.mask_index
        m = np.zeros((n, n))
        for a in range(S):
            m[a, a] = e
            m[a, mask] = 1.0 - e
        m[mask, mask] = 1.0
    return TokenKernel(m, 0.0, t)


def apply_token_kernel(pmf: DensePmf, kernel: TokenKernel) -> DensePmf:
    """Push a pmf through the d-fold tensor power of a per-token kernel."""
    d = pmf.dim
    tens = pmf.tensor()
    K = kernel.matrix
    for axis in range(d):
        tens = np.moveaxis(np.tensordot(tens, K, axes=([axis], [0])), -1, axis)
    flat = tens.transpose(range(d - 1, -1, -1)).reshape(pmf.space.n_states)
    return renormalized(pmf.space, flat)


def propagate_forward(q0: DensePmf, kind: NoiseKind, t: float) -> DensePmf:
    """Exact forward marginal q_t of the noising CTMC started at q0."""
    kind.check_alphabet(q0.alphabet)
    if kind is NoiseKind.MASKING:
        masked = q0.space.mask_counts() > 0
        if float(q0.mass[masked].sum()) > 0:
            raise ValidationError("masking requires q0 supported on unmasked states")
    if t == 0:
        return q0
    return apply_token_kernel(q0, forward_token_kernel(kind, q0.alphabet, t))


def propagate_between(pmf: DensePmf, kind: NoiseKind, elapsed: float) -> DensePmf:
    """Forward propagation from an arbitrary intermediate marginal."""
    if elapsed < 0:
        raise DomainError("elapsed time must be nonnegative")
    if elapsed == 0:
        return pmf
    return apply_token_kernel(pmf, forward_token_kernel(kind, pmf.alphabet, elapsed))


@dataclass
class ForwardPath:
    """One realized trajectory of the forward chain: start state plus jumps."""

    x0: int
    horizon: float
    events: list[tuple[float, int]] = field(default_factory=list)

    @property
    def terminal(self) -> int:
        return self.events[-1][1] if self.events else self.x0

    def to_json(self) -> str:
        return json.dumps(
            {
                "x0": self.x0,
                "horizon": self.horizon,
                "events": [[t, s] for t, s in self.events],
            }
        )


def sample_initial(q0: DensePmf, rng: np.random.Generator) -> int:
    return int(rng.choice(q0.space.n_states, p=q0.mass))


def sample_forward_path(
    q0: DensePmf, kind: NoiseKind, horizon: float, rng: np.random.Generator
) -> ForwardPath:
    """Exact event-by-event simulation of the forward CTMC (Gillespie)."""
    if horizon <= 0:
        raise DomainError("horizon must be positive")
    kind.check_alphabet(q0.alphabet)
    space = q0.space
    S = q0.alphabet.vocab_size
    d = space.dim
    x = sample_initial(q0, rng)
    path = ForwardPath(x0=x, horizon=horizon)
    t = 0.0
    symbols = list(space.unpack(x))
    while True:
        if kind is NoiseKind.UNIFORM:
            total = d * (S - 1) / S
        else:
            mask = q0.alphabet.mask_index
            unmasked = [i for i, s in enumerate(symbols) if s != mask]
            total = float(len(unmasked))
            if total == 0:
                break
        t += rng.exponential(1.0 / total)
        if t >= horizon:
            break
        if kind is NoiseKind.UNIFORM:
            i = int(rng.integers(d))
            c = int(rng.integers(1, S))
            symbols[i] = (symbols[i] + c) % S
        else:
            i = unmasked[int(rng.integers(len(unmasked)))]
            symbols[i] = q0.alphabet.mask_index
        x = space.pack(symbols)
        path.events.append((t, x))
    return path


def dominating_rate(kind: NoiseKind, space: StateSpace) -> float:
    """Uniformization bound d * max_a |Q_tok(a, a)|."""
    S = space.alphabet.vocab_size
    if kind is NoiseKind.UNIFORM:
        return space.dim * (S - 1) / S
    return float(space.dim)


def uniformize_forward(
    q0: DensePmf, kind: NoiseKind, t: float, rng: np.random.Generator
) -> int:
    """One exact draw from q_t via uniformization with thinning."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    kind.check_alphabet(q0.alphabet)
    space = q0.space
    S = q0.alphabet.vocab_size
    d = space.dim
    lam = dominating_rate(kind, space)
    x = sample_initial(q0, rng)
    if t == 0:
        return x
    symbols = list(space.unpack(x))
    n_epochs = int(rng.poisson(lam * t))
    for _ in range(n_epochs):
        i = int(rng.integers(d))
        if kind is NoiseKind.UNIFORM:
            # Exit rate saturates the bound, so every epoch is a real jump.
            c = int(rng.integers(1, S))
            symbols[i] = (symbols[i] + c) % S
        else:
            mask = q0.alphabet.mask_index
            if symbols[i] != mask:
                symbols[i] = mask
            # A masked coordinate means a virtual jump: state unchanged.
    return space.pack(symbols)


def embed_masked(p: DensePmf) -> DensePmf:
    """Re-index an unmasked pmf into the alphabet extended by MASK."""
    if p.alphabet.has_mask:
        return p
    space = StateSpace(p.dim, Alphabet(p.alphabet.vocab_size, has_mask=True))
    B, d = space.base, p.dim
    idx = np.zeros(p.space.n_states, dtype=np.int64)
    src = p.space.all_states()
    for i in range(d):
        idx += src[:, i] * B**i
    mass = np.zeros(space.n_states)
    mass[idx] = p.mass
    return DensePmf(space, mass)


def masking_prior(space: StateSpace, horizon: float) -> DensePmf:
    """Product initialization (1-e^-T) MASK + e^-T/S per token, per coordinate."""
    if not space.alphabet.has_mask:
        raise UnsupportedOperationError("masking prior needs a MASK symbol")
    S = space.alphabet.vocab_size
    e = math.exp(-horizon)
    row = np.full(space.alphabet.n_symbols, e / S)
    row[space.alphabet.mask_index] = 1.0 - e
    mass = row.copy()
    for _ in range(space.dim - 1):
        mass = np.multiply.outer(mass, row).reshape(-1)
    # outer() iterates most-significant-first; packed order wants coordinate 0
    # least significant, which the symmetric product makes irrelevant here.
    return DensePmf(space, mass)
