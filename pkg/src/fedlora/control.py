"""Two-stage control: offline structural rank selection, then per-round
Lyapunov control of the sparsification ratio and bandwidth shares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bounds import TheoryConsts, theorem1_gamma_term
from .channel import ChannelDraw, Schedule

_INV_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class ControllerState:
    Q: float = 0.0            # virtual queue, seconds of accumulated violation
    V: float = 1.0            # penalty weight on the convergence bound
    D_th: float = 1.0         # per-round uplink latency budget
    O_min: float = 0.1
    rank: int = 1

    def __post_init__(self):
        if self.Q < 0 or self.V <= 0 or self.D_th <= 0:
            raise ValueError("need Q >= 0, V > 0, D_th > 0")
        if not 0.0 < self.O_min < 1.0:
            raise ValueError(f"O_min must be in (0, 1), got {self.O_min}")


def closed_form_ratio(n: int, d_th: float, a_coeff: float, k0: int, r: int,
                      o_min: float) -> float:
    """Average-channel optimal initial ratio, clamped to [O_min, 1]."""
    return max(o_min, min(1.0, n * d_th / (a_coeff * k0 * r)))


def average_delay_coeff(mean_g: np.ndarray, v: float, d: int, ell: int,
                        bandwidth_total: float) -> float:
    """Sum over clients of the per-parameter average-channel delay."""
    return float(np.sum(v * (d + ell) / (bandwidth_total * mean_g)))


def offline_select_rank(consts: TheoryConsts, mean_g: np.ndarray, n: int, k0: int,
                        v: float, d: int, ell: int, bandwidth_total: float,
                        d_th: float, o_min: float) -> tuple[int, float]:
    """Pick the structural rank minimizing the bound under the average channel.

    For each candidate rank the initial ratio comes from the closed form, and
    the winning rank minimizes the plug-in bound (ties go to the smaller,
    cheaper rank). Returns (rank, initial ratio).
    """
    if np.any(mean_g <= 0):
        raise ValueError("average channel gains must be positive")
    a_coeff = average_delay_coeff(mean_g, v, d, ell, bandwidth_total)
    best_rank, best_ratio, best_gamma = 1, 1.0, np.inf
    for r in range(1, consts.r_max + 1):
        ratio = closed_form_ratio(n, d_th, a_coeff, k0, r, o_min)
        gamma = theorem1_gamma_term(consts, r, ratio, k0, n).total
        if gamma < best_gamma:
            best_rank, best_ratio, best_gamma = r, ratio, gamma
    return best_rank, best_ratio


def queue_update(q: float, delay: float, d_th: float) -> float:
    if q < 0:
        raise ValueError("virtual queue cannot be negative")
    return max(q + delay - d_th, 0.0)


def slot_coeffs(draw: ChannelDraw, schedule: Schedule, consts: TheoryConsts, r: int,
                n: int, v: float, d: int, ell: int, bandwidth_total: float,
                ) -> tuple[float, float, float]:
    """(c_D, c_S, const) for the per-slot objective.

    c_D * O is the round delay under delay-equalizing bandwidth, c_S scales
    the ratio-dependent bound term, const collects the ratio-independent bound
    terms (reported only; it never moves the argmin).
    """
    k = len(schedule.selected)
    gains = draw.gains[schedule.selected]
    if np.any(gains <= 0):
        raise ValueError("selected client with zero gain")
    c_d = v * r * (d + ell) / bandwidth_total * float(np.sum(1.0 / gains))
    c_s = 4.0 * n * r * consts.S**2 * consts.W**4 / k
    const = theorem1_gamma_term(consts, r, 1.0, k, n).total
    return c_d, c_s, const


def per_slot_objective(ratio: float, q: float, v_weight: float, c_d: float,
                       c_s: float, const: float = 0.0) -> float:
    """Drift-plus-penalty value Q * D(O) + V * gamma(O) for one round."""
    if ratio <= 0:
        raise ValueError(f"sparsification ratio must be positive, got {ratio}")
    penalty = c_s * (1.0 - ratio) ** 2 / ratio**4 + const
    return q * c_d * ratio + v_weight * penalty


def solve_ratio(q: float, v_weight: float, c_d: float, c_s: float, o_min: float,
                tol: float = 1e-8) -> float:
    """Minimize the per-slot objective over [O_min, 1] by golden section.

    Q == 0 means no queue pressure, so the penalty alone decides and its
    minimum sits exactly at 1.
    """
    if not 0.0 < o_min < 1.0:
        raise ValueError(f"O_min must be in (0, 1), got {o_min}")
    if q == 0.0:
        return 1.0
    lo, hi = o_min, 1.0
    x1 = hi - _INV_GOLDEN * (hi - lo)
    x2 = lo + _INV_GOLDEN * (hi - lo)
    f1 = per_slot_objective(x1, q, v_weight, c_d, c_s)
    f2 = per_slot_objective(x2, q, v_weight, c_d, c_s)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_GOLDEN * (hi - lo)
            f1 = per_slot_objective(x1, q, v_weight, c_d, c_s)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_GOLDEN * (hi - lo)
            f2 = per_slot_objective(x2, q, v_weight, c_d, c_s)
    mid = 0.5 * (lo + hi)
    return min(1.0, max(o_min, mid))


def allocate_bandwidth(schedule: Schedule, draw: ChannelDraw) -> Schedule:
    """Shares inversely proportional to gain, equalizing per-client delays.

    Selected clients with zero gain are dropped and the rest renormalized.
    """
    gains = draw.gains[schedule.selected]
    alive = schedule.selected[gains > 0]
    if len(alive) == 0:
        raise ValueError("no reachable client in schedule")
    inv = 1.0 / draw.gains[alive]
    shares = np.zeros(len(draw.gains))
    shares[alive] = inv / inv.sum()
    return Schedule(selected=alive, bandwidth=shares)
