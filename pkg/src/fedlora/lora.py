"""Low-rank adapter: forward pass, orthogonality penalty, per-rank scores."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Matrix, frobenius_sq, gaussian_matrix


@dataclass
class LoraAdapter:
    """Factored weight update B @ A with scaling alpha / rank.

    B is (d, r), A is (r, ell). A fresh adapter has B == 0 so the model
    starts exactly at the frozen base weights.
    """

    B: Matrix
    A: Matrix
    alpha: float
    rank: int

    def copy(self) -> "LoraAdapter":
        return LoraAdapter(self.B.copy(), self.A.copy(), self.alpha, self.rank)

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


def init_adapter(rng: np.random.Generator, d: int, ell: int, rank: int,
                 alpha: float | None = None) -> LoraAdapter:
    """Zero B, Gaussian A with stddev 1/sqrt(rank); alpha defaults to 2*rank."""
    if alpha is None:
        alpha = 2.0 * rank
    B = np.zeros((d, rank))
    A = gaussian_matrix(rng, rank, ell, 1.0 / np.sqrt(rank))
    return LoraAdapter(B, A, alpha, rank)


def forward(adapter: LoraAdapter, theta_p: Matrix, x: Matrix) -> Matrix:
    """Batched output x @ theta_p + (alpha/r) * x @ B @ A; x rows are samples."""
    d, ell = theta_p.shape
    if x.shape[1] != d:
        raise ValueError(f"input width {x.shape[1]} != base weight rows {d}")
    if adapter.B.shape[0] != d or adapter.A.shape[1] != ell:
        raise ValueError(
            f"adapter shapes {adapter.B.shape}/{adapter.A.shape} "
            f"incompatible with base {theta_p.shape}")
    return x @ theta_p + adapter.scale * ((x @ adapter.B) @ adapter.A)


def _off_diag(m: Matrix) -> Matrix:
    out = m.copy()
    np.fill_diagonal(out, 0.0)
    return out


def orth_penalty(adapter: LoraAdapter) -> float:
    """Off-diagonal energy of B'B and AA'; zero iff factors are orthogonal."""
    btb = adapter.B.T @ adapter.B
    aat = adapter.A @ adapter.A.T
    return frobenius_sq(_off_diag(btb)) + frobenius_sq(_off_diag(aat))


def orth_penalty_grad(adapter: LoraAdapter) -> tuple[Matrix, Matrix]:
    """Analytic gradient of orth_penalty w.r.t. (B, A)."""
    grad_b = 4.0 * adapter.B @ _off_diag(adapter.B.T @ adapter.B)
    grad_a = 4.0 * _off_diag(adapter.A @ adapter.A.T) @ adapter.A
    return grad_b, grad_a


def per_rank_scores(B: Matrix, A: Matrix) -> np.ndarray:
    """Surrogate squared singular values: |B[:,i]|^2 * |A[i,:]|^2 per rank."""
    return np.sum(B * B, axis=0) * np.sum(A * A, axis=1)


def norm_identity_residual(adapter: LoraAdapter) -> float:
    """|  |BA|_F^2 - sum of per-rank scores |; zero under exact orthogonality."""
    ba = adapter.B @ adapter.A
    return abs(frobenius_sq(ba) - float(np.sum(per_rank_scores(adapter.B, adapter.A))))
