"""Exact score oracles, score entropy loss, and controlled corruption.

Scores are probability ratios q_t(y)/q_t(x) on Hamming-1 pairs.  The
authoritative evaluation path is the ratio of exactly propagated
marginals; closed-form expressions serve only as test oracles.

Uniform fields index neighbors by cyclic increment c in 1..S-1 (column
c-1 of the table); masking fields index by target token a in 0..S-1 and
are defined only on masked coordinates.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
from scipy.special import ndtri

from .errors import DomainError, SingularScoreError, ValidationError
from .forward import NoiseKind, embed_masked, propagate_forward
from .state import DensePmf


def bregman(a: float, b: float) -> float:
    """Divergence a/b - 1 - log(a/b) of the potential x - log x."""
    if a <= 0 or b <= 0:
        raise DomainError("bregman needs positive arguments")
    r = a / b
    return r - 1.0 - math.log(r)


def _ratio_term(s_hat: np.ndarray, s: np.ndarray) -> np.ndarray:
    """s * D(s_hat, s) elementwise with the boundary conventions at zero."""
    out = np.zeros_like(s)
    pos = (s > 0) & (s_hat > 0)
    out[pos] = s_hat[pos] - s[pos] - s[pos] * np.log(s_hat[pos] / s[pos])
    dead = (s == 0) & (s_hat > 0)
    out[dead] = s_hat[dead]
    bad = (s > 0) & (s_hat == 0)
    if np.any(bad):
        raise DomainError("estimated score vanished on a live transition")
    return out


class ExactScoreField:
    """Score evaluator backed by the exactly propagated marginal q_t."""

    def __init__(self, q0: DensePmf, kind: NoiseKind, t: float):
        if t <= 0:
            raise DomainError("exact scores need t > 0")
        if kind is NoiseKind.MASKING:
            q0 = embed_masked(q0)
        else:
            kind.check_alphabet(q0.alphabet)
        self.kind = kind
        self.t = float(t)
        self.q0 = q0
        self.q_t = propagate_forward(q0, kind, t)
        self._table: Optional[np.ndarray] = None

    @property
    def provenance(self) -> dict:
        return {"kind": "exact"}

    def table(self) -> np.ndarray:
        """(n_states, d, n_targets) score values; NaN where undefined."""
        if self._table is None:
            self._table = score_table(self.q_t, self.kind)
            self._table.setflags(write=False)
        return self._table

    def value(self, x: int, i: int, target: int) -> float:
        space = self.q_t.space
        S = space.alphabet.vocab_size
        if self.kind is NoiseKind.UNIFORM:
            if not 1 <= target <= S - 1:
                raise DomainError(f"increment must be in 1..{S - 1}")
            v = self.table()[x, i, target - 1]
        else:
            if not 0 <= target < S:
                raise DomainError("target token out of range")
            if space.coordinate(x, i) != space.alphabet.mask_index:
                raise DomainError(f"coordinate {i} is not masked in state {x}")
            v = self.table()[x, i, target]
        if math.isnan(v):
            raise SingularScoreError(
                f"score undefined at state {x} (zero forward mass)"
            )
        return float(v)


def score_table(q_t: DensePmf, kind: NoiseKind) -> np.ndarray:
    """Ratio table q_t(y)/q_t(x) on Hamming-1 pairs; NaN where undefined.

    Uniform: column c-1 holds the increment-c neighbor (c in 1..S-1).
    Masking: column a holds the unmask-to-a value; rows with coordinate i
    unmasked are NaN.
    """
    space = q_t.space
    S = space.alphabet.vocab_size
    d = space.dim
    mass = q_t.mass
    if kind is NoiseKind.UNIFORM:
        out = np.empty((space.n_states, d, S - 1))
        with np.errstate(divide="ignore", invalid="ignore"):
            for i in range(d):
                for c in range(1, S):
                    out[:, i, c - 1] = mass[space.shift_all(i, c)] / mass
        return out
    mask_idx = space.alphabet.mask_index
    states = space.all_states()
    out = np.full((space.n_states, d, S), np.nan)
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(d):
            rows = states[:, i] == mask_idx
            for a in range(S):
                vals = mass[space.substitute_all(i, a)] / mass
                out[rows, i, a] = vals[rows]
    return out


def exact_score_uniform(q0: DensePmf, t: float, x: int, i: int, c: int) -> float:
    """s_t(x shifted by c at i, x) for the uniform process."""
    return ExactScoreField(q0, NoiseKind.UNIFORM, t).value(x, i, c)


def exact_score_masking(q0: DensePmf, t: float, x: int, i: int, a: int) -> float:
    """s_t(x with token a at masked coordinate i, x) for the masking process."""
    return ExactScoreField(q0, NoiseKind.MASKING, t).value(x, i, a)


# ---------------------------------------------------------------------------
# corruption models


_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = (x + _GOLDEN).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return z ^ (z >> np.uint64(31))


def _unit_uniform(*streams: np.ndarray) -> np.ndarray:
    """Stateless hash of integer streams into (0, 1)."""
    acc = np.zeros(np.broadcast_shapes(*(np.shape(s) for s in streams)), dtype=np.uint64)
    for s in streams:
        acc = _splitmix64(acc ^ np.asarray(s, dtype=np.uint64))
    return (acc >> np.uint64(11)).astype(np.float64) / float(1 << 53) + 2.0**-54


@dataclass(frozen=True)
class LogNormalCorruption:
    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.sigma < 0:
            raise ValidationError("sigma must be nonnegative")


@dataclass(frozen=True)
class ConstantBiasCorruption:
    factor: float
    seed: int = 0

    def __post_init__(self) -> None:
        if self.factor <= 0:
            raise ValidationError("bias factor must be positive")


CorruptionModel = Union[LogNormalCorruption, ConstantBiasCorruption]


class CorruptedScoreField:
    """Multiplicative corruption of a base field, reproducible per (x, i, target).

    Randomness is derived statelessly by hashing (seed, step_key, state,
    coordinate, target), so equal configurations give bit-equal fields.
    `step_key` decorrelates corruption across schedule grid points; pass
    the same key everywhere for one fixed corrupted field.
    """

    def __init__(self, base: ExactScoreField, model: CorruptionModel, step_key: int = 0):
        self.base = base
        self.model = model
        self.step_key = int(step_key)
        self.kind = base.kind
        self.t = base.t
        self.q_t = base.q_t
        self._table: Optional[np.ndarray] = None

    @property
    def provenance(self) -> dict:
        doc = {"kind": "corrupted", "seed": self.model.seed, "step_key": self.step_key}
        if isinstance(self.model, LogNormalCorruption):
            doc["model"] = {"variant": "log_normal", "sigma": self.model.sigma}
        else:
            doc["model"] = {"variant": "constant_bias", "factor": self.model.factor}
        return doc

    def _factors(self) -> np.ndarray:
        base_tab = self.base.table()
        if isinstance(self.model, ConstantBiasCorruption):
            return np.full_like(base_tab, self.model.factor)
        n, d, m = base_tab.shape
        x = np.arange(n, dtype=np.uint64)[:, None, None]
        i = np.arange(d, dtype=np.uint64)[None, :, None]
        c = np.arange(m, dtype=np.uint64)[None, None, :]
        u = _unit_uniform(
            np.uint64(self.model.seed & 0xFFFFFFFFFFFFFFFF),
            np.uint64(self.step_key),
            x * np.uint64(0x51_7C_C1_B7_27_22_0A_95),
            i * np.uint64(0x2545F4914F6CDD1D),
            c * np.uint64(0xD6E8FEB86659FD93),
        )
        return np.exp(self.model.sigma * ndtri(u))

    def table(self) -> np.ndarray:
        if self._table is None:
            self._table = self.base.table() * self._factors()
            self._table.setflags(write=False)
        return self._table

    def value(self, x: int, i: int, target: int) -> float:
        self.base.value(x, i, target)  # domain and singularity checks
        col = target - 1 if self.kind is NoiseKind.UNIFORM else target
        return float(self.table()[x, i, col])


ScoreField = Union[ExactScoreField, CorruptedScoreField]


# ---------------------------------------------------------------------------
# score entropy loss


def score_entropy_loss(
    t: float,
    s_hat: ScoreField,
    s: ScoreField,
    q_t: DensePmf,
    kind: NoiseKind,
) -> float:
    """Exact E_{x~q_t} sum_y Q(y, x) s(y, x) D(s_hat(y, x), s(y, x))."""
    if s_hat.kind is not kind or s.kind is not kind:
        raise DomainError("score fields and loss kind must agree")
    if abs(s_hat.t - t) > 1e-12 or abs(s.t - t) > 1e-12:
        raise DomainError("score fields must be evaluated at the loss time")
    tab_hat = np.nan_to_num(s_hat.table())
    tab = np.nan_to_num(s.table())
    live = q_t.mass > 0
    per_state = _ratio_term(tab_hat[live], tab[live]).sum(axis=(1, 2))
    total = float(np.dot(q_t.mass[live], per_state))
    if kind is NoiseKind.UNIFORM:
        total /= q_t.alphabet.vocab_size
    return max(total, 0.0)


def assumption1_total(
    grid: Sequence[float],
    horizon: float,
    s_hat_fields: Sequence[ScoreField],
    exact_fields: Sequence[ScoreField],
) -> float:
    """Step-weighted sum of score entropy losses over a reverse-time grid.

    `grid` is the t_0 < ... < t_N schedule; fields are indexed by k and
    evaluated at forward time T - t_k under the true marginal q_{T-t_k}.
    """
    if len(s_hat_fields) != len(grid) - 1 or len(exact_fields) != len(grid) - 1:
        raise DomainError("need one field per grid step")
    total = 0.0
    for k in range(len(grid) - 1):
        h = grid[k + 1] - grid[k]
        exact = exact_fields[k]
        total += h * score_entropy_loss(
            horizon - grid[k], s_hat_fields[k], exact, exact.q_t, exact.kind
        )
    return total


def dump_scores(field: ScoreField, path: str) -> None:
    """Tabulate all defined score values at the field's time into JSON."""
    tab = field.table()
    space = field.q_t.space
    rows = []
    n, d, m = tab.shape
    for x in range(n):
        for i in range(d):
            for col in range(m):
                v = tab[x, i, col]
                if math.isnan(v):
                    continue
                target = col + 1 if field.kind is NoiseKind.UNIFORM else col
                rows.append(
                    {
                        "state": list(map(int, space.unpack(x))),
                        "coordinate": i,
                        "target": int(target),
                        "value": float(v),
                    }
                )
    with open(path, "w") as fh:
        json.dump({"time": field.t, "kind": field.kind.value, "scores": rows}, fh)
