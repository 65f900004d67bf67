"""Closed-form depth-benefit quantities and their Monte Carlo oracles.

The closed forms predict how uniform self-inclusive mean aggregation
transforms class signal and noise at a single node, as a function of the
node's neighborhood label composition.  The Monte Carlo half of the module
re-derives the same quantities by brute-force simulation through the
:mod:`adgnn.csbm` samplers, so each prediction can be checked against an
implementation that shares no formulas with it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .csbm import ClassStats, canonical_prototypes, sample_neighborhood_batch
from .graph import NodeProfile

__all__ = [
    "AggregationStats",
    "CalibrationFactors",
    "Regime",
    "signal_preservation_factor",
    "single_layer_stats",
    "multi_layer_stats",
    "depth_benefit",
    "log_depth_benefit",
    "modified_depth_benefit",
    "mc_single_layer_stats",
    "mc_iterated_stats",
    "mc_layer_trajectory",
    "estimate_calibration_factors",
    "corollary_regime",
]

# exp() overflows float64 just above this
_LOG_FLOAT_MAX = 709.0


@dataclass(frozen=True)
class AggregationStats:
    """Signal variance (squared distance between the two conditional means),
    scalar noise variance, and their ratio."""

    signal_variance: float
    noise_variance: float
    quality: float

    def __post_init__(self) -> None:
        if self.signal_variance < 0 or self.noise_variance < 0:
            raise ValueError("variances must be non-negative")
        if self.noise_variance > 0:
            expected = self.signal_variance / self.noise_variance
            if not math.isclose(self.quality, expected, rel_tol=1e-9, abs_tol=1e-12):
                raise ValueError("quality must equal signal/noise")

    @classmethod
    def from_signal_noise(cls, signal: float, noise: float) -> "AggregationStats":
        quality = signal / noise if noise > 0 else math.inf
        return cls(signal_variance=float(signal), noise_variance=float(noise), quality=float(quality))


@dataclass(frozen=True)
class CalibrationFactors:
    """Multiplicative corrections to the idealized recursion: beta rescales
    the per-layer signal decay, gamma the per-layer noise reduction."""

    beta: float
    gamma: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError("beta must be finite and positive")
        if not (math.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be finite and positive")


IDENTITY_CALIBRATION = CalibrationFactors(beta=1.0, gamma=1.0)


class Regime(Enum):
    STRONG_HOMOPHILY = "strong_homophily"
    STRONG_HETEROPHILY = "strong_heterophily"
    MIXED = "mixed"


def signal_preservation_factor(profile: NodeProfile) -> float:
    """How much of the class-mean separation survives one aggregation.

    Equals (1 + same - different) / (degree + 1): the self term plus
    same-label neighbors pull toward the node's own class mean, while
    different-label neighbors pull toward the other one.  Ranges over
    [-1, 1]; isolated nodes score 1.
    """
    return (1 + profile.d_plus - profile.d_minus) / (profile.degree + 1)


def single_layer_stats(profile: NodeProfile, stats: ClassStats) -> AggregationStats:
    """Predicted signal and noise after one self-inclusive mean aggregation.

    Raises when sigma_sq is zero, since the quality ratio is undefined.
    """
    if stats.sigma_sq == 0:
        raise ValueError("quality is undefined at zero noise variance")
    alpha = signal_preservation_factor(profile)
    signal = alpha * alpha * stats.delta_sq
    noise = stats.sigma_sq / (profile.degree + 1)
    return AggregationStats.from_signal_noise(signal, noise)


def multi_layer_stats(profile: NodeProfile, stats: ClassStats, n_layers: int) -> AggregationStats:
    """Signal and noise after n aggregations, under the idealized assumption
    that label-conditioned inputs are redrawn independently at each layer."""
    if n_layers < 1:
        raise ValueError("n_layers must be at least 1")
    if stats.sigma_sq == 0:
        raise ValueError("quality is undefined at zero noise variance")
    alpha = signal_preservation_factor(profile)
    signal = alpha ** (2 * n_layers) * stats.delta_sq
    noise = stats.sigma_sq / (profile.degree + 1) ** n_layers
    return AggregationStats.from_signal_noise(signal, noise)


def log_depth_benefit(profile: NodeProfile, n_layers: int) -> float:
    """Natural log of the depth benefit; the canonical internal form.

    Returns -inf when the signal preservation factor is zero (total
    cancellation) and any layer count is applied.
    """
    if n_layers < 0:
        raise ValueError("n_layers must be non-negative")
    if n_layers == 0:
        return 0.0
    alpha = signal_preservation_factor(profile)
    if alpha == 0.0:
        return -math.inf
    return n_layers * (2.0 * math.log(abs(alpha)) + math.log(profile.degree + 1))


def depth_benefit(profile: NodeProfile, n_layers: int) -> float:
    """Quality after n layers relative to quality of the raw features,
    (alpha^2 * (degree + 1)) ** n.  Saturates to +inf rather than raising
    for hub nodes at large n."""
    log_value = log_depth_benefit(profile, n_layers)
    if log_value == -math.inf:
        return 0.0
    if log_value > _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_value)


def modified_depth_benefit(
    profile: NodeProfile,
    calibration: CalibrationFactors,
    n_layers: int,
) -> float:
    """Depth benefit with empirical per-layer corrections folded in:
    (beta * alpha^2 * (degree + 1) / gamma) ** n."""
    if calibration.gamma <= 0:
        raise ValueError("gamma must be positive")
    if n_layers < 0:
        raise ValueError("n_layers must be non-negative")
    if n_layers == 0:
        return 1.0
    alpha = signal_preservation_factor(profile)
    base = calibration.beta * alpha * alpha * (profile.degree + 1) / calibration.gamma
    if base == 0.0:
        return 0.0
    log_value = n_layers * math.log(base)
    if log_value > _LOG_FLOAT_MAX:
        return math.inf
    return math.exp(log_value)


def _oracle_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def _chunk_bounds(total: int, chunk: int):
    for start in range(0, total, chunk):
        yield start, min(start + chunk, total)


def _mean_and_scalar_var(samples: np.ndarray) -> tuple[np.ndarray, float]:
    # scalar noise convention: average per-dimension variance (trace / dim)
    mean = samples.mean(axis=0)
    return mean, float(((samples - mean) ** 2).mean())


def mc_single_layer_stats(
    profile: NodeProfile,
    stats: ClassStats,
    trials: int,
    seed: int,
    dim: int = 8,
) -> AggregationStats:
    """Monte Carlo estimate of single-layer aggregation statistics.

    For each class label, draws `trials` neighborhoods through the csbm
    sampler, aggregates each with the uniform self-inclusive mean, and
    measures conditional means and per-dimension variances directly.
    Trials are consumed in a fixed chunked order, so a seed fully
    determines the result.
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a usable estimate")
    rng = _oracle_rng(seed)
    chunk = max(1, 4_000_000 // (max(profile.degree, 1) * dim))
    means = []
    variances = []
    for own_label in (0, 1):
        aggregated = np.empty((trials, dim))
        for a, b in _chunk_bounds(trials, chunk):
            center, nbrs = sample_neighborhood_batch(
                profile, stats, own_label, trials=b - a, rng=rng, dim=dim
            )
            aggregated[a:b] = (center + nbrs.sum(axis=1)) / (profile.degree + 1)
        mean, var = _mean_and_scalar_var(aggregated)
        means.append(mean)
        variances.append(var)
    signal = float(np.sum((means[0] - means[1]) ** 2))
    noise = 0.5 * (variances[0] + variances[1])
    return AggregationStats.from_signal_noise(signal, noise)


def mc_layer_trajectory(
    profile: NodeProfile,
    stats: ClassStats,
    n_layers: int,
    trials: int,
    seed: int,
    dim: int = 8,
) -> tuple[np.ndarray, np.ndarray]:
    """Layerwise empirical (signal, noise) arrays of length n_layers + 1.

    Index 0 describes the raw features.  Each layer keeps one pool of
    independent realizations per class and aggregates freshly resampled
    self/neighbor entries from the previous layer's pools, which redraws
    all randomness layer to layer exactly as the idealized recursion
    assumes.  Both classes evolve with the node's own neighborhood
    composition, mirrored.
    """
    if n_layers < 1:
        raise ValueError("n_layers must be at least 1")
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a usable estimate")
    rng = _oracle_rng(seed)
    mu0, mu1 = canonical_prototypes(stats.delta_sq, dim)
    sigma = math.sqrt(stats.sigma_sq)
    pools = [
        mu0 + sigma * rng.standard_normal((trials, dim)),
        mu1 + sigma * rng.standard_normal((trials, dim)),
    ]
    signals = np.empty(n_layers + 1)
    noises = np.empty(n_layers + 1)

    def record(k: int) -> None:
        m0, v0 = _mean_and_scalar_var(pools[0])
        m1, v1 = _mean_and_scalar_var(pools[1])
        signals[k] = np.sum((m0 - m1) ** 2)
        noises[k] = 0.5 * (v0 + v1)

    record(0)
    chunk = max(1, 4_000_000 // (max(profile.degree, 1) * dim))
    for k in range(1, n_layers + 1):
        next_pools = []
        for own_label in (0, 1):
            own, other = pools[own_label], pools[1 - own_label]
            out = np.empty((trials, dim))
            for a, b in _chunk_bounds(trials, chunk):
                rows = b - a
                agg = own[rng.integers(0, trials, rows)].copy()
                if profile.d_plus:
                    agg += own[rng.integers(0, trials, (rows, profile.d_plus))].sum(axis=1)
                if profile.d_minus:
                    agg += other[rng.integers(0, trials, (rows, profile.d_minus))].sum(axis=1)
                out[a:b] = agg / (profile.degree + 1)
            next_pools.append(out)
        pools = next_pools
        record(k)
    return signals, noises


def mc_iterated_stats(
    profile: NodeProfile,
    stats: ClassStats,
    n_layers: int,
    trials: int,
    seed: int,
    dim: int = 8,
) -> AggregationStats:
    """Monte Carlo counterpart of multi_layer_stats."""
    signals, noises = mc_layer_trajectory(profile, stats, n_layers, trials, seed, dim)
    return AggregationStats.from_signal_noise(signals[-1], noises[-1])


def estimate_calibration_factors(
    signal_variances: np.ndarray,
    noise_variances: np.ndarray,
    alpha: float,
    degree: int,
) -> tuple[np.ndarray, np.ndarray, CalibrationFactors]:
    """Per-layer calibration factors from layerwise statistics.

    Inputs are arrays of length n + 1 with index 0 describing the
    pre-aggregation features.  Layer k contributes
    beta_k = S[k] / (alpha^2 * S[k-1]) and
    gamma_k = (degree + 1) * N[k] / N[k-1].  The averaged factors are
    geometric means, matching how the recursion composes them.
    """
    signal = np.asarray(signal_variances, dtype=np.float64)
    noise = np.asarray(noise_variances, dtype=np.float64)
    if signal.ndim != 1 or signal.shape != noise.shape or signal.shape[0] < 2:
        raise ValueError("need matching 1-d arrays covering at least one layer")
    if alpha == 0:
        raise ValueError("beta is undefined at alpha = 0")
    if np.any(signal[:-1] <= 0) or np.any(noise[:-1] <= 0):
        raise ValueError("ratio denominators must be positive")
    betas = signal[1:] / (alpha * alpha * signal[:-1])
    gammas = (degree + 1) * noise[1:] / noise[:-1]
    averaged = CalibrationFactors(
        beta=float(np.exp(np.mean(np.log(betas)))),
        gamma=float(np.exp(np.mean(np.log(gammas)))),
    )
    return betas, gammas, averaged


def corollary_regime(
    profile: NodeProfile,
    homophilic_threshold: float = 0.8,
    heterophilic_threshold: float = 0.2,
) -> Regime:
    """Classify a neighborhood by its same-label fraction.

    Isolated nodes count as strongly homophilic: with no neighbors the
    self term preserves the signal perfectly.
    """
    if profile.degree == 0:
        return Regime.STRONG_HOMOPHILY
    ratio = profile.d_plus / profile.degree
    if ratio >= homophilic_threshold:
        return Regime.STRONG_HOMOPHILY
    if ratio <= heterophilic_threshold:
        return Regime.STRONG_HETEROPHILY
    return Regime.MIXED
