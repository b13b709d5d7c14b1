"""Constructors for the benchmark target distributions.

Each spec dataclass describes one family; `build` returns its exact
dense pmf on the mask-free alphabet.  Latent-variable families (HMM,
SBM, quantized latent) marginalize the latents by exact enumeration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from itertools import product
from typing import Optional, Sequence, Union

import numpy as np
from scipy.stats import norm

from .errors import ConfigError, ResourceError, ValidationError
from .state import Alphabet, DensePmf, StateSpace, normalize


@dataclass(frozen=True)
class Uniform:
    dim: int
    vocab_size: int


@dataclass(frozen=True)
class DiracMixture:
    points: tuple[tuple[int, ...], ...]
    weights: tuple[float, ...]
    vocab_size: int = 2


@dataclass(frozen=True)
class Xor:
    """Uniform bits with the last coordinate closing the parity."""

    dim: int


@dataclass(frozen=True)
class StructureWithNoise:
    """Shared-bit block I0 plus a parity-coupled uniform block I1 = [d] \\ I0."""

    dim: int
    i0: tuple[int, ...]


@dataclass(frozen=True)
class Hmm:
    """Latent nearest-neighbor chain with a noisy copy emission channel."""

    dim: int
    latent_size: int
    p_switch: float
    emission_noise: float = 0.1
    vocab_size: Optional[int] = None  # defaults to latent_size

    @property
    def S(self) -> int:
        return self.vocab_size or self.latent_size


@dataclass(frozen=True)
class SbmAdjacency:
    """Random graph adjacency bits from an r-community block model."""

    n_vertices: int
    r_blocks: int
    p_within: float = 0.8
    q_between: float = 0.2


@dataclass(frozen=True)
class QuantizedLatent:
    """Lattice quantization of sinusoidal decoder output plus Gaussian noise."""

    latent_dim: int
    dim: int
    vocab_size: int
    sigma: float = 0.5
    grid_size: int = 64
    map_id: str = "sinusoid-v1"


DistributionSpec = Union[
    Uniform, DiracMixture, Xor, StructureWithNoise, Hmm, SbmAdjacency, QuantizedLatent
]


def dirac_pair(dim: int) -> DiracMixture:
    """The two-point mixture half at all-zeros, half at all-ones."""
    return DiracMixture(
        points=(tuple([0] * dim), tuple([1] * dim)), weights=(0.5, 0.5), vocab_size=2
    )


def build(spec: DistributionSpec, *, cap: Optional[int] = None) -> DensePmf:
    kwargs = {} if cap is None else {"cap": cap}
    if isinstance(spec, Uniform):
        space = StateSpace(spec.dim, Alphabet(spec.vocab_size))
        return normalize(space, np.ones(space.n_states), **kwargs)
    if isinstance(spec, DiracMixture):
        return _build_dirac(spec, **kwargs)
    if isinstance(spec, Xor):
        return _build_xor(spec, **kwargs)
    if isinstance(spec, StructureWithNoise):
        return _build_swn(spec, **kwargs)
    if isinstance(spec, Hmm):
        return _build_hmm(spec, **kwargs)
    if isinstance(spec, SbmAdjacency):
        return _build_sbm(spec, **kwargs)
    if isinstance(spec, QuantizedLatent):
        return _build_quantized(spec, **kwargs)
    raise ConfigError(f"unknown distribution spec {spec!r}")


def _build_dirac(spec: DiracMixture, **kwargs) -> DensePmf:
    if len(spec.points) != len(spec.weights) or not spec.points:
        raise ValidationError("points and weights must align and be nonempty")
    if any(w < 0 for w in spec.weights):
        raise ValidationError("weights must be nonnegative")
    dim = len(spec.points[0])
    space = StateSpace(dim, Alphabet(spec.vocab_size))
    raw = np.zeros(space.n_states)
    for pt, w in zip(spec.points, spec.weights):
        raw[space.pack(pt)] += w
    return normalize(space, raw, **kwargs)


def _build_xor(spec: Xor, **kwargs) -> DensePmf:
    if spec.dim < 2:
        raise ValidationError("XOR needs dim >= 2")
    space = StateSpace(spec.dim, Alphabet(2))
    bits = space.all_states()
    raw = (bits.sum(axis=1) % 2 == 0).astype(float)
    return normalize(space, raw, **kwargs)


def _build_swn(spec: StructureWithNoise, **kwargs) -> DensePmf:
    d = spec.dim
    i0 = set(spec.i0)
    if not i0 or len(i0) >= d:
        raise ValidationError("I0 must be a nonempty proper subset of coordinates")
    if any(not 0 <= i < d for i in i0):
        raise ValidationError("I0 indices out of range")
    i1 = [i for i in range(d) if i not in i0]
    space = StateSpace(d, Alphabet(2))
    bits = space.all_states()
    raw = np.zeros(space.n_states)
    for b in (0, 1):
        ok = np.all(bits[:, sorted(i0)] == b, axis=1)
        parity = bits[:, i1].sum(axis=1) % 2 == b
        raw[ok & parity] = 1.0
    return normalize(space, raw, **kwargs)


def _build_hmm(spec: Hmm, **kwargs) -> DensePmf:
    Z, S, d = spec.latent_size, spec.S, spec.dim
    if Z > S:
        raise ConfigError("copy emission needs latent_size <= vocab_size")
    if not 0 <= spec.p_switch <= 1 or not 0 <= spec.emission_noise <= 1:
        raise ValidationError("probabilities must lie in [0, 1]")
    trans = np.full((Z, Z), spec.p_switch / (Z - 1) if Z > 1 else 0.0)
    np.fill_diagonal(trans, 1.0 - spec.p_switch)
    emit = np.full((Z, S), spec.emission_noise / S)
    for z in range(Z):
        emit[z, z] += 1.0 - spec.emission_noise
    space = StateSpace(d, Alphabet(S))
    states = space.all_states()
    # Forward recursion over the latent chain, vectorized across all x.
    alpha_f = emit[:, states[:, 0]].T / Z  # (n_states, Z)
    for i in range(1, d):
        alpha_f = (alpha_f @ trans) * emit[:, states[:, i]].T
    return normalize(space, alpha_f.sum(axis=1), **kwargs)


def _build_sbm(spec: SbmAdjacency, **kwargs) -> DensePmf:
    n, r = spec.n_vertices, spec.r_blocks
    if n < 2 or r < 1:
        raise ValidationError("need n >= 2 vertices and r >= 1 blocks")
    if r**n > 3125:
        raise ResourceError(f"{r}^{n} label assignments exceed the enumeration budget")
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    d = len(pairs)
    space = StateSpace(d, Alphabet(2))
    edges = space.all_states()
    raw = np.zeros(space.n_states)
    for labels in product(range(r), repeat=n):
        probs = np.array(
            [spec.p_within if labels[u] == labels[v] else spec.q_between for u, v in pairs]
        )
        like = np.prod(np.where(edges == 1, probs, 1.0 - probs), axis=1)
        raw += like
    return normalize(space, raw, **kwargs)


def quantized_map_lipschitz(spec: QuantizedLatent) -> tuple[float, float]:
    """(latent diameter D, Lipschitz constant L) of the published decoder map."""
    if spec.map_id != "sinusoid-v1":
        raise ConfigError(f"unknown map id {spec.map_id!r}")
    per_coord = (spec.vocab_size / 2.0) * 2.0 * math.pi / math.sqrt(spec.latent_dim)
    L = per_coord * math.sqrt(spec.dim)
    D = math.sqrt(spec.latent_dim)  # latent cube [0, 1]^k
    return D, L


def _decoder_values(spec: QuantizedLatent, z: np.ndarray) -> np.ndarray:
    """Decoder output per observed coordinate; z has shape (n, k)."""
    S, d, k = spec.vocab_size, spec.dim, spec.latent_dim
    phases = 2.0 * math.pi * np.arange(d) / d
    drive = 2.0 * math.pi * z.sum(axis=1) / math.sqrt(k)
    return S / 2.0 + (S / 2.0) * np.sin(drive[:, None] + phases[None, :])


def _build_quantized(spec: QuantizedLatent, **kwargs) -> DensePmf:
    S, d, k = spec.vocab_size, spec.dim, spec.latent_dim
    if spec.grid_size**k > 10**6:
        raise ResourceError("latent grid too large to enumerate")
    if spec.sigma <= 0:
        raise ValidationError("sigma must be positive")
    axes = [np.linspace(0.0, 1.0, spec.grid_size, endpoint=False) + 0.5 / spec.grid_size] * k
    z = np.array(list(product(*axes)))
    centers = _decoder_values(spec, z)  # (n_latent, d)
    # Cell s covers [s, s+1) with the outer cells absorbing the clipped tails.
    edges = np.arange(1, S, dtype=float)
    upper = norm.cdf((edges[None, None, :] - centers[:, :, None]) / spec.sigma)
    cell = np.concatenate(
        [upper[:, :, :1], np.diff(upper, axis=2), 1.0 - upper[:, :, -1:]], axis=2
    )  # (n_latent, d, S)
    space = StateSpace(d, Alphabet(S))
    states = space.all_states()
    raw = np.zeros(space.n_states)
    for row in range(cell.shape[0]):
        raw += np.prod(cell[row][np.arange(d)[None, :], states], axis=1)
    return normalize(space, raw, **kwargs)


# ---------------------------------------------------------------------------
# analytic reference values


def analytic_expectations(spec: DistributionSpec) -> dict[str, float]:
    """Exact values (two-Dirac, XOR) or upper bounds for the correlation measures.

    Keys: 'B', 'C' for exact values; 'B_bound' for upper bounds.  Empty
    dict when the family has no covered reference.
    """
    log2 = math.log(2.0)
    if isinstance(spec, DiracMixture):
        if set(spec.points) == {tuple([0] * len(spec.points[0])), tuple([1] * len(spec.points[0]))} \
                and all(abs(w - 0.5) < 1e-15 for w in spec.weights):
            d = len(spec.points[0])
            return {"B": log2, "C": (d - 1) * log2}
        return {}
    if isinstance(spec, Xor):
        return {"B": (spec.dim - 1) * log2, "C": log2}
    if isinstance(spec, Hmm):
        p = spec.p_switch
        if p <= 0:
            return {"B_bound": 0.0}
        return {"B_bound": p * spec.dim * math.log(spec.latent_size / p)}
    if isinstance(spec, SbmAdjacency):
        return {"B_bound": spec.n_vertices * math.log(spec.r_blocks)}
    if isinstance(spec, QuantizedLatent):
        D, L = quantized_map_lipschitz(spec)
        return {"B_bound": spec.latent_dim * math.log(2.0 + 2.0 * D * L / spec.sigma)}
    return {}


def structure_with_noise_cmi_cases(
    d: int, i0_size: int, t: float
) -> dict[str, float]:
    """Closed-form pairwise conditional MI of the masked structure-with-noise law.

    Per ordered pair and grouped by block membership of (i, j); `total`
    multiplies by the pair counts.  n1 = d - i0_size is the parity block.
    """
    n0, n1 = i0_size, d - i0_size
    e = math.exp(-t)
    w = 1.0 - e  # per-coordinate masking probability
    log2 = math.log(2.0)
    case1 = log2 * e**2 * w ** (n0 - 2) * (1.0 - math.exp(-n1 * t)) if n0 >= 2 else 0.0
    case2 = log2 * math.exp(-n1 * t) * (1.0 - w**n0) if n1 >= 2 else 0.0
    case3 = log2 * math.exp(-(n1 + 1) * t) * w ** (n0 - 1)
    total = (
        n0 * (n0 - 1) * case1
        + n1 * (n1 - 1) * case2
        + 2 * n0 * n1 * case3
    )
    return {
        "both_shared": case1,
        "both_parity": case2,
        "cross": case3,
        "total": total,
    }


# ---------------------------------------------------------------------------
# spec file I/O


_VARIANTS = {
    "uniform": Uniform,
    "dirac_mixture": DiracMixture,
    "xor": Xor,
    "structure_with_noise": StructureWithNoise,
    "hmm": Hmm,
    "sbm_adjacency": SbmAdjacency,
    "quantized_latent": QuantizedLatent,
}


def spec_from_dict(doc: dict) -> DistributionSpec:
    try:
        variant = doc["variant"]
        cls = _VARIANTS[variant]
    except KeyError as exc:
        raise ConfigError(f"unknown or missing distribution variant: {exc}") from exc
    args = {k: v for k, v in doc.items() if k != "variant"}
    if cls is DiracMixture and "points" in args:
        args["points"] = tuple(tuple(p) for p in args["points"])
        args["weights"] = tuple(args["weights"])
    if cls is StructureWithNoise and "i0" in args:
        args["i0"] = tuple(args["i0"])
    try:
        return cls(**args)
    except TypeError as exc:
        raise ConfigError(f"bad fields for {variant}: {exc}") from exc


def spec_to_dict(spec: DistributionSpec) -> dict:
    name = {v: k for k, v in _VARIANTS.items()}[type(spec)]
    doc = {"variant": name}
    for field_name in spec.__dataclass_fields__:
        value = getattr(spec, field_name)
        if isinstance(value, tuple):
            value = [list(v) if isinstance(v, tuple) else v for v in value]
        doc[field_name] = value
    return doc


def load_spec(path: str) -> DistributionSpec:
    if path.endswith(".toml"):
        try:
            import tomllib as toml  # py3.11+
        except ModuleNotFoundError:
            import tomli as toml
        with open(path, "rb") as fh:
            doc = toml.load(fh)
    else:
        with open(path) as fh:
            doc = json.load(fh)
    return spec_from_dict(doc)


def regression_corpus(max_dim: int = 4) -> list[tuple[str, DistributionSpec]]:
    """Small named family used across identity and sampler regression tests."""
    corpus: list[tuple[str, DistributionSpec]] = []
    for d in (3, max_dim):
        corpus.append((f"dirac_pair_d{d}", dirac_pair(d)))
        corpus.append((f"xor_d{d}", Xor(d)))
    if max_dim >= 4:
        corpus.append(("swn_d4", StructureWithNoise(4, (0, 1))))
        corpus.append(("hmm_d4", Hmm(dim=4, latent_size=2, p_switch=0.2)))
        corpus.append(("uniform_d3_s3", Uniform(3, 3)))
    return corpus
