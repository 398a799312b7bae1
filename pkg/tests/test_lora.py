import numpy as np
import pytest

from fedlora.linalg import frobenius_sq, rng_stream
from fedlora.lora import (LoraAdapter, forward, init_adapter,
                          norm_identity_residual, orth_penalty,
                          orth_penalty_grad, per_rank_scores)


def random_adapter(seed, d=6, ell=5, rank=3):
    rng = rng_stream(seed)
    return LoraAdapter(rng.normal(size=(d, rank)), rng.normal(size=(rank, ell)),
                       alpha=2.0 * rank, rank=rank)


def orthogonal_adapter(seed, d=8, ell=7, rank=3, col_scales=None, row_scales=None):
    rng = rng_stream(seed)
    qb, _ = np.linalg.qr(rng.normal(size=(d, rank)))
    qa, _ = np.linalg.qr(rng.normal(size=(ell, rank)))
    col_scales = np.ones(rank) if col_scales is None else np.asarray(col_scales)
    row_scales = np.ones(rank) if row_scales is None else np.asarray(row_scales)
    return LoraAdapter(qb * col_scales, (qa * row_scales).T, alpha=2.0 * rank,
                       rank=rank)


def test_fresh_adapter_outputs_base_model():
    rng = rng_stream(0)
    theta_p = rng.normal(size=(6, 4))
    adapter = init_adapter(rng, 6, 4, 3)
    x = rng.normal(size=(10, 6))
    assert np.array_equal(forward(adapter, theta_p, x), x @ theta_p)


def test_zero_alpha_outputs_base_model():
    rng = rng_stream(1)
    theta_p = rng.normal(size=(6, 4))
    adapter = random_adapter(2, d=6, ell=4)
    adapter.alpha = 0.0
    x = rng.normal(size=(5, 6))
    assert np.allclose(forward(adapter, theta_p, x), x @ theta_p)


def test_forward_matches_composition():
    rng = rng_stream(3)
    theta_p = rng.normal(size=(6, 5))
    adapter = random_adapter(4)
    x = rng.normal(size=(7, 6))
    expect = x @ theta_p + adapter.scale * (x @ (adapter.B @ adapter.A))
    assert np.max(np.abs(forward(adapter, theta_p, x) - expect)) < 1e-12


def test_forward_dimension_error():
    adapter = random_adapter(5)
    with pytest.raises(ValueError):
        forward(adapter, np.zeros((6, 5)), np.zeros((3, 7)))


def test_orth_penalty_zero_for_orthogonal_factors():
    assert orth_penalty(orthogonal_adapter(6)) == pytest.approx(0.0, abs=1e-18)


def test_orth_penalty_hand_value():
    adapter = LoraAdapter(np.array([[1.0, 1.0], [1.0, 1.0]]), np.eye(2),
                          alpha=4.0, rank=2)
    # B'B = [[2,2],[2,2]], off-diagonal energy 2^2 + 2^2 = 8; A orthogonal.
    assert orth_penalty(adapter) == pytest.approx(8.0)


def test_orth_penalty_quartic_homogeneity():
    adapter = random_adapter(7)
    adapter.A = np.zeros_like(adapter.A)  # isolate the B term
    base = orth_penalty(adapter)
    adapter.B *= 3.0
    assert orth_penalty(adapter) == pytest.approx(81.0 * base, rel=1e-10)


def finite_diff_grads(adapter, h=1e-5):
    gb = np.zeros_like(adapter.B)
    for idx in np.ndindex(*adapter.B.shape):
        for sign in (1, -1):
            adapter.B[idx] += sign * h
            gb[idx] += sign * orth_penalty(adapter)
            adapter.B[idx] -= sign * h
    ga = np.zeros_like(adapter.A)
    for idx in np.ndindex(*adapter.A.shape):
        for sign in (1, -1):
            adapter.A[idx] += sign * h
            ga[idx] += sign * orth_penalty(adapter)
            adapter.A[idx] -= sign * h
    return gb / (2 * h), ga / (2 * h)


def test_grad_zero_cases():
    ortho = orthogonal_adapter(8)
    gb, ga = orth_penalty_grad(ortho)
    assert np.max(np.abs(gb)) < 1e-12
    assert np.max(np.abs(ga)) < 1e-12
    zero = LoraAdapter(np.zeros((4, 2)), np.zeros((2, 3)), alpha=4.0, rank=2)
    gb, ga = orth_penalty_grad(zero)
    assert np.all(gb == 0) and np.all(ga == 0)


def test_grad_matches_finite_differences():
    for seed in range(20):
        adapter = random_adapter(seed)
        gb, ga = orth_penalty_grad(adapter)
        fb, fa = finite_diff_grads(adapter)
        assert np.linalg.norm(gb - fb) <= 1e-5 * max(np.linalg.norm(fb), 1.0)
        assert np.linalg.norm(ga - fa) <= 1e-5 * max(np.linalg.norm(fa), 1.0)


def test_per_rank_scores_hand():
    b = np.zeros((3, 2))
    b[0, 0], b[1, 1] = 2.0, 3.0
    a = np.zeros((2, 3))
    a[0, 1], a[1, 2] = 1.0, 1.0
    assert np.allclose(per_rank_scores(b, a), [4.0, 9.0])
    b[:, 1] = 0.0
    assert per_rank_scores(b, a)[1] == 0.0


def test_scores_match_singular_values_when_orthogonal():
    adapter = orthogonal_adapter(9, col_scales=[1.0, 2.0, 0.5],
                                 row_scales=[3.0, 1.0, 2.0])
    scores = np.sort(per_rank_scores(adapter.B, adapter.A))[::-1]
    sv = np.linalg.svd(adapter.B @ adapter.A, compute_uv=False)[:3]
    assert np.allclose(scores, sv**2, atol=1e-9)


def test_norm_identity_residual():
    assert norm_identity_residual(orthogonal_adapter(10)) < 1e-9
    rank1 = random_adapter(11, rank=1)
    assert norm_identity_residual(rank1) < 1e-12
    adapter = random_adapter(12)
    brute = abs(frobenius_sq(adapter.B @ adapter.A)
                - sum(per_rank_scores(adapter.B, adapter.A)))
    assert norm_identity_residual(adapter) == pytest.approx(brute, rel=1e-12)


def test_scores_invariant_to_paired_sign_flip():
    adapter = random_adapter(13)
    before = per_rank_scores(adapter.B, adapter.A)
    adapter.B[:, 1] *= -1.0
    adapter.A[1, :] *= -1.0
    assert np.allclose(per_rank_scores(adapter.B, adapter.A), before)
