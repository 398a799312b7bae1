"""FDMA uplink model: block fading, path loss, per-client rate and delay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import rng_stream


@dataclass
class ChannelDraw:
    """Spectral efficiency g_k = log2(1 + |h_k|^2 / sigma^2) per client, one round."""

    gains: np.ndarray  # bits/s/Hz, length N
    round_index: int


@dataclass
class Schedule:
    selected: np.ndarray                  # sorted client ids, length K
    bandwidth: np.ndarray | None = field(default=None)  # shares over all N, or None


def sample_channel(rng: np.random.Generator, round_index: int, distances: np.ndarray,
                   pathloss_exp: float, noise_var: float,
                   rayleigh: bool = True) -> ChannelDraw:
    """Block-fading draw: |h_k|^2 = |s_k|^2 * q_k^(-2*gamma).

    By default the small-scale coefficient is complex Gaussian, so |s|^2 is
    Exponential(1) (Rayleigh envelope); rayleigh=False uses a real standard
    normal s instead.
    """
    distances = np.asarray(distances, dtype=float)
    if np.any(distances <= 0):
        raise ValueError("client distances must be positive")
    if noise_var <= 0:
        raise ValueError("noise variance must be positive")
    n = len(distances)
    if rayleigh:
        s_sq = rng.exponential(1.0, size=n)
    else:
        s_sq = rng.normal(0.0, 1.0, size=n) ** 2
    gains = spectral_efficiency(s_sq, distances, pathloss_exp, noise_var)
    return ChannelDraw(gains=gains, round_index=round_index)


def spectral_efficiency(s_sq: np.ndarray, distances: np.ndarray, pathloss_exp: float,
                        noise_var: float) -> np.ndarray:
    """g = log2(1 + |s|^2 q^(-2 gamma) / sigma^2) for given fading powers."""
    h_sq = np.asarray(s_sq, dtype=float) * np.asarray(distances, float) ** (-2.0 * pathloss_exp)
    return np.log2(1.0 + h_sq / noise_var)


def schedule_clients(rng: np.random.Generator, n_clients: int, k: int) -> Schedule:
    """Uniform subset of k clients without replacement (ids sorted)."""
    if not 1 <= k <= n_clients:
        raise ValueError(f"cannot schedule {k} of {n_clients} clients")
    selected = np.sort(rng.choice(n_clients, size=k, replace=False))
    return Schedule(selected=selected)


def payload_bits(v: float, rank: int, d: int, ell: int, ratio: float) -> float:
    """Uplink payload after sparsification (index overhead ignored)."""
    return v * ratio * rank * (d + ell)


def client_delay(bits: float, b_k: float, bandwidth_total: float, g_k: float) -> float:
    """Seconds to upload `bits` at rate b_k * B * g_k."""
    if b_k <= 0 or g_k <= 0:
        raise ValueError(f"unreachable client: bandwidth share {b_k}, gain {g_k}")
    return bits / (b_k * bandwidth_total * g_k)


def round_delay(schedule: Schedule, draw: ChannelDraw, bits: float,
                bandwidth_total: float) -> float:
    """Slowest selected client sets the round delay."""
    if schedule.bandwidth is None:
        raise ValueError("schedule has no bandwidth allocation")
    delays = [client_delay(bits, schedule.bandwidth[k], bandwidth_total, draw.gains[k])
              for k in schedule.selected]
    return max(delays)


def mean_gains(seed: int, distances: np.ndarray, pathloss_exp: float, noise_var: float,
               rayleigh: bool = True, n_draws: int = 10_000) -> np.ndarray:
    """Monte-Carlo estimate of the per-client expected spectral efficiency.

    Uses a dedicated stream so the estimate never perturbs simulation draws.
    """
    rng = rng_stream(seed, 0xC0FFEE)
    total = np.zeros(len(distances))
    for i in range(n_draws):
        total += sample_channel(rng, i, distances, pathloss_exp, noise_var,
                                rayleigh=rayleigh).gains
    return total / n_draws
