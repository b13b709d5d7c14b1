"""Exact information-theoretic quantities over dense pmfs.

Everything here is an exact finite sum; Monte Carlo never enters.  The
masking-process correlation trace I(t) sums conditional mutual
information over ordered coordinate pairs (i, j), i != j, so each
unordered pair is counted twice.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import xlogy

from .errors import DomainError, ValidationError
from .forward import (
    NoiseKind,
    embed_masked,
    forward_token_kernel,
    propagate_forward,
)
from .quadrature import adaptive_quadrature
from .state import DensePmf, StateSpace


# ---------------------------------------------------------------------------
# entropy / KL


def entropy(p: DensePmf) -> float:
    """Shannon entropy in nats with the 0 log 0 = 0 convention."""
    return float(-xlogy(p.mass, p.mass).sum())


def _entropy_arr(mass: np.ndarray) -> float:
    return float(-xlogy(mass, mass).sum())


@dataclass(frozen=True)
class KLResult:
    """KL divergence tagged with an explicit support-mismatch flag."""

    value: float
    infinite: bool = False

    def __float__(self) -> float:
        return math.inf if self.infinite else self.value


def kl(p: DensePmf, q: DensePmf) -> KLResult:
    if p.space != q.space:
        raise DomainError("KL requires a shared state space")
    bad = (p.mass > 0) & (q.mass == 0)
    if np.any(bad):
        return KLResult(math.inf, infinite=True)
    pos = p.mass > 0
    val = float(np.sum(p.mass[pos] * (np.log(p.mass[pos]) - np.log(q.mass[pos]))))
    return KLResult(max(val, 0.0) if val > -1e-12 else val)


def total_variation(p: DensePmf, q: DensePmf) -> float:
    if p.space != q.space:
        raise DomainError("TV requires a shared state space")
    return 0.5 * float(np.abs(p.mass - q.mass).sum())


# ---------------------------------------------------------------------------
# conditional mutual information and the masking trace I(t)


def conditional_mi(p: DensePmf, i: int, j: int) -> float:
    """I(x^i; x^j | x^rest) by exact enumeration over the conditioning block."""
    if i == j:
        raise DomainError("coordinates must differ")
    d = p.dim
    tens = p.tensor()
    moved = np.moveaxis(tens, (i, j), (d - 2, d - 1))
    V = p.space.base
    joint = moved.reshape(-1, V, V)
    rest = joint.sum(axis=(1, 2))
    mi = joint.sum(axis=2)
    mj = joint.sum(axis=1)
    val = (
        xlogy(joint, joint).sum()
        + xlogy(rest, rest).sum()
        - xlogy(mi, mi).sum()
        - xlogy(mj, mj).sum()
    )
    return max(float(val), 0.0)


def pairwise_cmi_total(p: DensePmf) -> float:
    """Sum of conditional MI over ordered coordinate pairs, via marginal entropies.

    Uses I(x^i; x^j | rest) = H(x^{-j}) + H(x^{-i}) - H(x^{-(i,j)}) - H(x),
    summed over ordered pairs (each unordered pair twice).
    """
    d = p.dim
    if d < 2:
        return 0.0
    tens = p.tensor()
    h_full = _entropy_arr(tens)
    h_minus = []
    drop = []
    for i in range(d):
        ti = tens.sum(axis=i)
        drop.append(ti)
        h_minus.append(_entropy_arr(ti))
    h_pairs = 0.0
    for i in range(d):
        for j in range(i + 1, d):
            # drop[i] lost axis i, so coordinate j sits at axis j-1.
            h_pairs += _entropy_arr(drop[i].sum(axis=j - 1))
    total = 2.0 * (d - 1) * sum(h_minus) - 2.0 * h_pairs - d * (d - 1) * h_full
    if total < -1e-9:
        raise ValidationError(f"negative pairwise CMI total {total}")
    return max(total, 0.0)


def I_of_t(q0: DensePmf, t: float) -> float:
    """Correlation trace of the masking process at time t."""
    if t < 0:
        raise DomainError("time must be nonnegative")
    q0m = embed_masked(q0)
    qt = propagate_forward(q0m, NoiseKind.MASKING, t)
    return pairwise_cmi_total(qt)


# ---------------------------------------------------------------------------
# total correlation and its integral representations


def correlations_direct(q0: DensePmf) -> tuple[float, float]:
    """(dual total correlation B, total correlation C) from exact entropies."""
    if q0.alphabet.has_mask:
        raise DomainError("correlations are defined for unmasked data pmfs")
    d = q0.dim
    tens = q0.tensor()
    h_full = _entropy_arr(tens)
    h_single = 0.0
    h_minus = 0.0
    for i in range(d):
        axes = tuple(a for a in range(d) if a != i)
        h_single += _entropy_arr(tens.sum(axis=axes))
        h_minus += _entropy_arr(tens.sum(axis=i))
    C = h_single - h_full
    B = h_minus - (d - 1) * h_full
    return max(B, 0.0), max(C, 0.0)


@dataclass
class CorrelationProfile:
    """Correlation measures of one target, by direct entropies and by quadrature."""

    target: str
    B_direct: float
    C_direct: float
    B_quad: float
    C_quad: float
    D_quad: float
    B_err: float
    C_err: float
    D_err: float
    T_max: float
    tail_bound: float
    n_evals: int
    I_samples: list[tuple[float, float]] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {k: getattr(self, k) for k in (
            "target", "B_direct", "C_direct", "B_quad", "C_quad", "D_quad",
            "B_err", "C_err", "D_err", "T_max", "tail_bound", "n_evals")}
        doc["I_samples"] = [[t, v] for t, v in self.I_samples]
        return json.dumps(doc)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "I"])
            for t, v in self.I_samples:
                w.writerow([f"{t:.17g}", f"{v:.17g}"])


def correlations_quadrature(
    q0: DensePmf, rel_tol: float = 1e-4, *, target: str = ""
) -> CorrelationProfile:
    """B, C, D as integrals of I(t), via adaptive panels in u = e^-t.

    After substitution the three integrands are smooth on (0, 1]; the
    min(1, t) kink of D becomes a forced panel split at u = 1/e.  The
    u-substitution maps the infinite t-tail into a neighborhood of u=0
    that the panels cover, so no truncation is needed; T_max reports the
    deepest resolved time and tail_bound the mass of the panel touching
    u = 0 in the C integral (the worst-conditioned of the three).
    """
    if rel_tol < 1e-6:
        raise DomainError("rel_tol below 1e-6 is not supported")
    B_direct, C_direct = correlations_direct(q0)
    q0m = embed_masked(q0)
    cache: dict[float, float] = {}

    def I_at_u(u: float) -> float:
        if u not in cache:
            qt = propagate_forward(q0m, NoiseKind.MASKING, -math.log(u))
            cache[u] = pairwise_cmi_total(qt)
        return cache[u]

    rb = adaptive_quadrature(lambda u: I_at_u(u) / u, 0.0, 1.0, rel_tol)
    rc = adaptive_quadrature(lambda u: (1.0 - u) * I_at_u(u) / u**2, 0.0, 1.0, rel_tol)
    kink = math.exp(-1.0)
    rd = adaptive_quadrature(
        lambda u: min(1.0, -math.log(u)) * I_at_u(u) / u, 0.0, 1.0, rel_tol,
        split_points=(kink,),
    )
    samples = sorted(((-math.log(u), v) for u, v in cache.items()))
    for _, v in samples:
        if v < 0:
            raise ValidationError("negative I(t) sample")
    u_min = min(rb.min_node, rc.min_node, rd.min_node)
    # Tail proxy: C-integrand mass below the deepest node actually used.
    tail = (1.0 - u_min) * I_at_u(u_min) / u_min**2 * u_min
    return CorrelationProfile(
        target=target,
        B_direct=B_direct,
        C_direct=C_direct,
        B_quad=rb.value,
        C_quad=rc.value,
        D_quad=rd.value,
        B_err=rb.error_estimate,
        C_err=rc.error_estimate,
        D_err=rd.error_estimate,
        T_max=-math.log(u_min),
        tail_bound=tail,
        n_evals=len(cache),
        I_samples=samples,
    )


def schedule_weighted_I_integral(
    q0: DensePmf, grid: Sequence[float], horizon: float, rel_tol: float = 1e-6
) -> float:
    """sum_k h_k * int_{T-t_{k+1}}^{T-t_k} I(t) dt, exactly per interval."""
    q0m = embed_masked(q0)
    cache: dict[float, float] = {}

    def I_at(t: float) -> float:
        if t not in cache:
            cache[t] = pairwise_cmi_total(propagate_forward(q0m, NoiseKind.MASKING, t))
        return cache[t]

    total = 0.0
    for k in range(len(grid) - 1):
        h = grid[k + 1] - grid[k]
        lo, hi = horizon - grid[k + 1], horizon - grid[k]
        if hi <= lo + 1e-15:
            continue
        r = adaptive_quadrature(I_at, lo, hi, max(rel_tol, 1e-6))
        total += h * r.value
    return total


# ---------------------------------------------------------------------------
# the uniform-process potential phi(t)


def phi(q0: DensePmf, t: float) -> float:
    """(1/S) E_{x~q_t} sum over Hamming-1 neighbors of -log s_t(y, x)."""
    if t <= 0:
        raise DomainError("phi is defined for t > 0")
    if q0.alphabet.has_mask:
        raise DomainError("phi is a uniform-process quantity")
    qt = propagate_forward(q0, NoiseKind.UNIFORM, t)
    return _phi_of_marginal(qt)


def _phi_of_marginal(qt: DensePmf) -> float:
    S = qt.alphabet.vocab_size
    if np.any(qt.mass <= 0):
        raise DomainError("phi needs a strictly positive marginal")
    logq = np.log(qt.mass)
    total = 0.0
    for i in range(qt.dim):
        for c in range(1, S):
            idx = qt.space.shift_all(i, c)
            total += float(np.sum(qt.mass * (logq - logq[idx])))
    return total / S


@dataclass
class PhiProfile:
    samples: list[tuple[float, float]]
    kl_trace: list[tuple[float, float]]

    def to_json(self) -> str:
        return json.dumps({
            "samples": [[t, v] for t, v in self.samples],
            "kl_trace": [[t, v] for t, v in self.kl_trace],
        })

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "phi", "kl_to_uniform"])
            for (t, v), (_, klv) in zip(self.samples, self.kl_trace):
                w.writerow([f"{t:.17g}", f"{v:.17g}", f"{klv:.17g}"])


def phi_profile(q0: DensePmf, times: Sequence[float]) -> PhiProfile:
    from .state import uniform_pmf

    unif = uniform_pmf(q0.space)
    samples, trace = [], []
    for t in sorted(times):
        qt = propagate_forward(q0, NoiseKind.UNIFORM, t)
        samples.append((t, _phi_of_marginal(qt)))
        trace.append((t, kl(qt, unif).value))
    return PhiProfile(samples, trace)


# ---------------------------------------------------------------------------
# exact reverse-process expectations (martingale and bridging identities)


def _state_kernel(space: StateSpace, kind: NoiseKind, elapsed: float) -> np.ndarray:
    """Full |X| x |X| forward kernel over `elapsed`, as a product of token kernels."""
    K = forward_token_kernel(kind, space.alphabet, elapsed).matrix
    states = space.all_states()
    out = np.ones((space.n_states, space.n_states))
    for i in range(space.dim):
        out *= K[states[:, i][:, None], states[:, i][None, :]]
    return out


def reverse_joint_weights(
    q0: DensePmf, kind: NoiseKind, ell: float, t: float, horizon: float
) -> tuple[np.ndarray, DensePmf, DensePmf]:
    """Joint law of (x_ell, x_t) under the reverse process, as weights[x_t, x_ell].

    Reverse time ell < t corresponds to forward times T-ell > T-t; the
    reverse transition kernel is the Bayes inversion of the forward
    product kernel, so weights[z, w] = q_{T-t}(z) * K_fwd^{t-ell}(z, w).
    """
    if not 0 <= ell < t <= horizon:
        raise DomainError("need 0 <= ell < t <= horizon")
    q_later = propagate_forward(q0, kind, horizon - ell)   # law of x_ell
    q_earlier = propagate_forward(q0, kind, horizon - t)   # law of x_t
    K = _state_kernel(q0.space, kind, t - ell)
    weights = q_earlier.mass[:, None] * K
    return weights, q_earlier, q_later


@dataclass
class MartingaleReport:
    kind: str
    ell: float
    t: float
    horizon: float
    max_abs_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_abs_deviation <= self.tolerance


def check_martingales(
    q0: DensePmf,
    kind: NoiseKind,
    ell: float,
    t: float,
    horizon: float,
    tolerance: float = 1e-8,
    score_table: Optional[Callable[[float], np.ndarray]] = None,
) -> MartingaleReport:
    """Exact conditional-expectation checks of the score martingales.

    Uniform: E[s_{T-t}(x_t + c e_i, x_t) | x_ell] = s_{T-ell}(x_ell + c e_i, x_ell).
    Masking: E[s_{T-t}(x_t <- a at i, x_t) 1{i masked at t} | x_ell]
             = e^{t-ell} s_{T-ell}(x_ell <- a at i, x_ell) 1{i masked at ell}.

    `score_table(forward_time) -> (n_states, d, n_targets)` overrides the
    exact score values (used as a negative control with corrupted fields).
    """
    if kind is NoiseKind.MASKING:
        q0 = embed_masked(q0)
    space = q0.space
    weights, q_earlier, q_later = reverse_joint_weights(q0, kind, ell, t, horizon)
    cond = np.zeros_like(weights)
    pos = q_later.mass > 0
    cond[:, pos] = weights[:, pos] / q_later.mass[None, pos]

    from .score import score_table

    def exact_table(ft: float) -> np.ndarray:
        return score_table(propagate_forward(q0, kind, ft), kind)

    table_fn = score_table or exact_table
    tab_t = table_fn(horizon - t)
    tab_ell = table_fn(horizon - ell)

    max_dev = 0.0
    d = space.dim
    n_targets = tab_t.shape[2]
    states = space.all_states()
    if kind is NoiseKind.MASKING:
        masked_t = states == space.alphabet.mask_index
        growth = math.exp(t - ell)
    for i in range(d):
        for c in range(n_targets):
            f_t = tab_t[:, i, c].copy()
            f_ell = tab_ell[:, i, c].copy()
            if kind is NoiseKind.MASKING:
                f_t = np.where(masked_t[:, i], f_t, 0.0)
                rhs = growth * np.where(masked_t[:, i], f_ell, 0.0)
            else:
                rhs = f_ell
            lhs = cond.T @ np.nan_to_num(f_t)
            dev = np.abs(lhs - rhs)[pos]
            if dev.size:
                max_dev = max(max_dev, float(dev.max()))
    return MartingaleReport(kind.value, ell, t, horizon, max_dev, tolerance)


@dataclass
class ControlReport:
    ell: float
    t: float
    horizon: float
    lhs: float
    rhs: float
    rel_err: float


def check_control_at_t(
    q0: DensePmf, ell: float, t: float, horizon: float, rel_tol: float = 1e-6
) -> ControlReport:
    """Bridging identity: exact double expectation vs the e^{t-v} I(T-v) integral."""
    from .score import score_table

    kind = NoiseKind.MASKING
    q0m = embed_masked(q0)
    space = q0m.space
    if ell == t:
        return ControlReport(ell, t, horizon, 0.0, 0.0, 0.0)
    weights, q_earlier, _ = reverse_joint_weights(q0m, kind, ell, t, horizon)
    tab_t = score_table(q_earlier, kind)
    S = space.alphabet.vocab_size
    states = space.all_states()
    mask_idx = space.alphabet.mask_index
    q_ft = q_earlier.mass

    lhs = 0.0
    nz = np.nonzero(weights)
    for zi, wi in zip(*nz):
        wgt = weights[zi, wi]
        for i in range(space.dim):
            if states[zi, i] != mask_idx:
                continue
            for a in range(S):
                s_t = tab_t[zi, i, a]
                # score s_{T-t} evaluated at the x_ell pair
                num = q_ft[space.substitute(int(wi), i, a)]
                den = q_ft[int(wi)]
                s_l = num / den if den > 0 else math.nan
                if math.isnan(s_t) or math.isnan(s_l):
                    continue
                if s_t == 0.0:
                    term = s_l
                elif s_l == 0.0:
                    raise ValidationError("score vanished at the later state only")
                else:
                    term = s_l - s_t + s_t * math.log(s_t / s_l)
                lhs += wgt * term

    def integrand(v: float) -> float:
        qv = propagate_forward(q0m, kind, horizon - v)
        return math.exp(t - v) * pairwise_cmi_total(qv)

    rhs = adaptive_quadrature(integrand, ell, t, max(rel_tol, 1e-6)).value
    denom = max(abs(rhs), 1e-12)
    return ControlReport(ell, t, horizon, lhs, rhs, abs(lhs - rhs) / denom)
