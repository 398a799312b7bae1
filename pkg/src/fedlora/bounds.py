"""Closed-form convergence-bound terms used for control and diagnostics."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class TheoryConsts:
    """Constants of the convergence bound; all strictly positive."""

    S: float = 1.0       # smoothness
    W: float = 1.0       # singular-value bound
    G: float = 1.0       # gradient-norm bound
    H: float = 1.0       # low-rank approximation constant
    phi: float = 0.05    # heterogeneity constant
    r_max: int = 16
    E: int = 1           # local epochs
    eta: float = 0.02    # learning rate

    def __post_init__(self):
        for name in ("S", "W", "G", "H", "phi", "eta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"theory constant {name} must be positive")
        if self.r_max < 1:
            raise ValueError("r_max must be >= 1")


@dataclass
class GammaBreakdown:
    """Per-term decomposition of the optimality-gap bound."""

    init_gap: float
    rank_term: float
    cov_term: float
    local_term: float
    drift_term: float
    sampling_term: float
    sparsification_term: float
    total: float = field(init=False)

    def __post_init__(self):
        self.total = (self.init_gap + self.rank_term + self.cov_term
                      + self.local_term + self.drift_term
                      + self.sampling_term + self.sparsification_term)


def theorem1_gamma_term(consts: TheoryConsts, r: int, ratio: float, k: int, n: int,
                        eta: float | None = None, epochs: int | None = None,
                        init_gap: float = 0.0) -> GammaBreakdown:
    """Evaluate the optimality-gap bound terms for one round configuration."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sparsification ratio must be in (0, 1], got {ratio}")
    if k > n:
        raise ValueError(f"scheduled clients {k} exceed population {n}")
    eta = consts.eta if eta is None else eta
    epochs = consts.E if epochs is None else epochs
    s, w, g = consts.S, consts.W, consts.G
    rank_term = 2.0 * s**2 * consts.H * (consts.r_max - r) * w**2
    cov_term = 4.0 * s**2 * consts.phi * r * w**2
    local_term = eta * s * epochs**2 * g**2
    drift_term = epochs * (epochs - 1) * (2 * epochs - 1) * s**2 * eta**2 * g**2 / 6.0
    if n > 1:
        sampling_term = 8.0 * (n - k) * eta**2 * s**2 * epochs**2 * g**2 / (k * (n - 1))
    else:
        sampling_term = 0.0
    sparsification_term = 4.0 * n * (1.0 - ratio) ** 2 * r * s**2 * w**4 / (k * ratio**4)
    return GammaBreakdown(init_gap, rank_term, cov_term, local_term, drift_term,
                          sampling_term, sparsification_term)


def lemma1_bound(ratio: float, max_delta_sq: float) -> float:
    """Bound on the squared norm of the accumulated sparsification error."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sparsification ratio must be in (0, 1], got {ratio}")
    if ratio == 1.0:
        return 0.0
    return 4.0 * (1.0 - ratio) / ratio**2 * max_delta_sq


def corollary1_bound(ratio: float, max_delta_sq: float) -> float:
    """Bound on the Frobenius norm of the product of the memory factors."""
    return 0.5 * lemma1_bound(ratio, max_delta_sq)


def drift_bound_B(d_bar: float, d_th: float) -> float:
    """Constant bounding the per-slot queue drift; reported, never optimized."""
    if d_bar < 0:
        raise ValueError("worst-case delay must be non-negative")
    return 0.5 * (d_bar - d_th) ** 2
