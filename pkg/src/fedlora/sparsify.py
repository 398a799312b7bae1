"""Update sparsifiers with error feedback.

The importance-aware sparsifier scores each rank component by the product of
its column/row squared norms, splits the element budget proportionally, and
keeps the top elements of each rank's concatenated (d+ell)-vector. Baselines
(magnitude top-k per factor, uniform random, low-rank-index structured, and
whole-rank dropping) share the same element budget and the same error
feedback memory update.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import Matrix
from .lora import per_rank_scores

BASELINE_KINDS = ("flasc_topq", "random", "het_lowrank", "rankdrop")


@dataclass
class ErrorMemory:
    """Per-client residual matrices accumulated by error feedback."""

    mB: Matrix
    mA: Matrix

    @staticmethod
    def zeros(d: int, rank: int, ell: int) -> "ErrorMemory":
        return ErrorMemory(np.zeros((d, rank)), np.zeros((rank, ell)))

    def norm_sq(self) -> float:
        """Squared Frobenius norm of the concatenated memory."""
        return float(np.sum(self.mB**2) + np.sum(self.mA**2))


@dataclass
class SparsityBudget:
    ratio: float
    per_rank: np.ndarray  # integer element counts, one per rank
    total: int


def _total_budget(ratio: float, rank: int, d: int, ell: int) -> int:
    # round half up, deterministically
    return int(np.floor(ratio * rank * (d + ell) + 0.5))


def _largest_remainder(shares: np.ndarray, total: int, cap: int) -> np.ndarray:
    """Integer apportionment preserving the total, each entry capped.

    Ties on fractional remainder break toward the lowest index. Overflow from
    capped entries is redistributed among the uncapped ones by the same rule.
    """
    n = len(shares)
    alloc = np.zeros(n, dtype=int)
    active = np.ones(n, dtype=bool)
    remaining = total
    while remaining > 0:
        idx = np.nonzero(active)[0]
        s = shares[idx]
        if s.sum() <= 0:
            s = np.ones(len(idx))
        target = remaining * s / s.sum()
        room = cap - alloc[idx]
        target = np.minimum(target, room)
        base = np.floor(target).astype(int)
        leftover = remaining - int(base.sum())
        frac = target - base
        # lowest index wins ties: sort by (-frac, position)
        order = np.lexsort((np.arange(len(idx)), -frac))
        extra = np.zeros(len(idx), dtype=int)
        for j in order:
            if leftover == 0:
                break
            if base[j] + 1 <= room[j]:
                extra[j] = 1
                leftover -= 1
        alloc[idx] += base + extra
        remaining = total - int(alloc.sum())
        newly_full = alloc >= cap
        if remaining > 0 and not np.any(active & ~newly_full):
            raise ValueError(f"budget {total} exceeds capacity {cap * n}")
        active &= ~newly_full
    return alloc


def allocate_budget(scores: np.ndarray, ratio: float, d: int, ell: int) -> SparsityBudget:
    """Split the element budget across ranks proportionally to their scores.

    All-zero scores (fresh adapters) fall back to a uniform split.
    """
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"sparsification ratio must be in (0, 1], got {ratio}")
    rank = len(scores)
    total = _total_budget(ratio, rank, d, ell)
    shares = np.asarray(scores, dtype=float)
    if shares.sum() <= 0:
        shares = np.ones(rank)
    per_rank = _largest_remainder(shares, total, cap=d + ell)
    return SparsityBudget(ratio=ratio, per_rank=per_rank, total=total)


def sparsify_topk(x: np.ndarray, u: int) -> np.ndarray:
    """Keep the u largest-magnitude entries of a flat vector, zero the rest.

    Deterministic: magnitude ties break toward the lower index.
    """
    if u <= 0:
        raise ValueError(f"number of kept elements must be positive, got {u}")
    out = np.zeros_like(x)
    if u >= len(x):
        return x.copy()
    keep = np.lexsort((np.arange(len(x)), -np.abs(x)))[:u]
    out[keep] = x[keep]
    return out


def _apply_feedback(delta_b: Matrix, delta_a: Matrix,
                    memory: ErrorMemory) -> tuple[Matrix, Matrix]:
    return memory.mB + delta_b, memory.mA + delta_a


def _residual_memory(comp_b: Matrix, comp_a: Matrix,
                     sp_b: Matrix, sp_a: Matrix) -> ErrorMemory:
    return ErrorMemory(comp_b - sp_b, comp_a - sp_a)


def soft_sparsify(delta_b: Matrix, delta_a: Matrix, memory: ErrorMemory,
                  ratio: float) -> tuple[Matrix, Matrix, ErrorMemory]:
    """Importance-aware per-rank sparsification of a memory-compensated update.

    Returns the sparse (B, A) update and the new residual memory.
    """
    comp_b, comp_a = _apply_feedback(delta_b, delta_a, memory)
    d, rank = comp_b.shape
    ell = comp_a.shape[1]
    scores = per_rank_scores(comp_b, comp_a)
    budget = allocate_budget(scores, ratio, d, ell)
    sp_b = np.zeros_like(comp_b)
    sp_a = np.zeros_like(comp_a)
    for i in range(rank):
        u = int(budget.per_rank[i])
        if u == 0:
            continue
        vec = np.concatenate([comp_b[:, i], comp_a[i, :]])
        kept = sparsify_topk(vec, u)
        sp_b[:, i] = kept[:d]
        sp_a[i, :] = kept[d:]
    return sp_b, sp_a, _residual_memory(comp_b, comp_a, sp_b, sp_a)


def baseline_sparsify(kind: str, delta_b: Matrix, delta_a: Matrix,
                      memory: ErrorMemory, ratio: float,
                      rng: np.random.Generator | None = None,
                      ) -> tuple[Matrix, Matrix, ErrorMemory]:
    """Comparison sparsifiers sharing the element budget and error feedback.

    rankdrop keeps floor(ratio * r) whole rank components, which matches the
    element budget exactly whenever ratio * r is an integer.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown sparsifier kind {kind!r}; expected one of {BASELINE_KINDS}")
    comp_b, comp_a = _apply_feedback(delta_b, delta_a, memory)
    d, rank = comp_b.shape
    ell = comp_a.shape[1]
    total = _total_budget(ratio, rank, d, ell)

    if kind == "flasc_topq":
        # half the budget per factor; spillover when one factor is too small
        u_b = min(total // 2, d * rank)
        u_a = min(total - u_b, rank * ell)
        u_b = min(total - u_a, d * rank)
        sp_b = sparsify_topk(comp_b.ravel(), u_b).reshape(comp_b.shape)
        sp_a = sparsify_topk(comp_a.ravel(), u_a).reshape(comp_a.shape)
    elif kind == "random":
        if rng is None:
            raise ValueError("random sparsifier needs an rng")
        flat = np.concatenate([comp_b.ravel(), comp_a.ravel()])
        keep = rng.choice(flat.size, size=min(total, flat.size), replace=False)
        out = np.zeros_like(flat)
        out[keep] = flat[keep]
        sp_b = out[: d * rank].reshape(comp_b.shape)
        sp_a = out[d * rank:].reshape(comp_a.shape)
    elif kind == "het_lowrank":
        sp_b = np.zeros_like(comp_b)
        sp_a = np.zeros_like(comp_a)
        whole = min(total // (d + ell), rank)
        sp_b[:, :whole] = comp_b[:, :whole]
        sp_a[:whole, :] = comp_a[:whole, :]
        rest = total - whole * (d + ell)
        if rest > 0 and whole < rank:
            vec = np.concatenate([comp_b[:, whole], comp_a[whole, :]])
            kept = sparsify_topk(vec, rest)
            sp_b[:, whole] = kept[:d]
            sp_a[whole, :] = kept[d:]
    else:  # rankdrop
        if rng is None:
            raise ValueError("rankdrop sparsifier needs an rng")
        n_keep = min(int(np.floor(ratio * rank)), rank)
        sp_b = np.zeros_like(comp_b)
        sp_a = np.zeros_like(comp_a)
        if n_keep > 0:
            keep = np.sort(rng.choice(rank, size=n_keep, replace=False))
            sp_b[:, keep] = comp_b[:, keep]
            sp_a[keep, :] = comp_a[keep, :]

    return sp_b, sp_a, _residual_memory(comp_b, comp_a, sp_b, sp_a)
