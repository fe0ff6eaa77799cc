"""Trace objective, penalized objective, and closed-form code updates."""

import numpy as np
import pytest

from xmhash.codes import pack_bits
from xmhash.objective import (
    penalized_objective,
    trace_objective,
    update_image_codes,
    update_text_codes,
)


def naive_trace_objective(B, H, S):
    """Literal -sum_ijk B_ij S_jk H_ik via explicit loops."""
    m, n = B.shape
    total = 0.0
    for i in range(m):
        for j in range(n):
            for k in range(n):
                total += B[i, j] * S[j, k] * H[i, k]
    return -total


def all_sign_matrices(m, n):
    """Every {-1, +1} matrix of shape (m, n), as a (2^(m n), m, n) stack."""
    k = m * n
    patterns = np.arange(2**k, dtype=np.int64)
    bits = (patterns[:, None] >> np.arange(k)) & 1
    return (bits.reshape(-1, m, n) * 2 - 1).astype(np.float64)


def image_subobjective(B, f_out, S, H, eta):
    """Literal eta ||B - f||_F^2 - trace(B S H^T)."""
    return eta * np.sum((B - f_out) ** 2) - np.trace(B @ S @ H.T)


def text_subobjective(H, g_out, S, B, eta):
    return eta * np.sum((H - g_out) ** 2) - np.trace(B @ S @ H.T)


def random_instance(rng, max_entries=16):
    m = int(rng.integers(1, 4))
    n = int(rng.integers(2, 5))
    while m * n > max_entries:
        m = int(rng.integers(1, 4))
        n = int(rng.integers(2, 5))
    f = rng.normal(size=(m, n))
    g = rng.normal(size=(m, n))
    B = (rng.integers(0, 2, size=(m, n)) * 2 - 1).astype(np.float64)
    H = (rng.integers(0, 2, size=(m, n)) * 2 - 1).astype(np.float64)
    S = rng.integers(0, 2, size=(n, n)).astype(np.float64)
    eta = float(rng.uniform(0.01, 1.0))
    return f, g, B, H, S, eta


class TestTraceObjective:
    def test_identity_similarity_counts_agreement(self):
        assert trace_objective([[1, -1]], [[1, -1]], np.eye(2)) == -2.0

    def test_zero_similarity_annihilates(self):
        rng = np.random.default_rng(0)
        B = (rng.integers(0, 2, size=(3, 4)) * 2 - 1).astype(float)
        H = (rng.integers(0, 2, size=(3, 4)) * 2 - 1).astype(float)
        assert trace_objective(B, H, np.zeros((4, 4))) == 0.0

    def test_matches_triple_loop_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            B = (rng.integers(0, 2, size=(3, 4)) * 2 - 1).astype(float)
            H = (rng.integers(0, 2, size=(3, 4)) * 2 - 1).astype(float)
            S = rng.integers(0, 2, size=(4, 4)).astype(float)
            np.testing.assert_allclose(
                trace_objective(B, H, S), naive_trace_objective(B, H, S), rtol=1e-12
            )

    def test_accepts_packed_codes(self):
        B = np.array([[1, -1], [-1, 1]], dtype=np.int8)
        S = np.eye(2)
        assert trace_objective(pack_bits(B), pack_bits(B), S) == trace_objective(B, B, S)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            trace_objective([[1, -1]], [[1, -1]], np.eye(3))
        with pytest.raises(ValueError):
            trace_objective([[1, -1]], [[1, -1], [1, 1]], np.eye(2))


class TestPenalizedObjective:
    def test_zero_residual_zero_trace(self):
        f = np.array([[1.0, -1.0], [-1.0, 1.0]])
        g = np.array([[-1.0, 1.0], [1.0, 1.0]])
        S = np.zeros((2, 2))
        assert penalized_objective(np.sign(f), np.sign(g), S, f, g, eta=0.3) == 0.0

    def test_eta_zero_equals_trace(self):
        rng = np.random.default_rng(4)
        B = (rng.integers(0, 2, size=(2, 3)) * 2 - 1).astype(float)
        H = (rng.integers(0, 2, size=(2, 3)) * 2 - 1).astype(float)
        S = rng.integers(0, 2, size=(3, 3)).astype(float)
        f, g = rng.normal(size=(2, 2, 3))
        assert penalized_objective(B, H, S, f, g, eta=0.0) == trace_objective(B, H, S)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            B = (rng.integers(0, 2, size=(2, 3)) * 2 - 1).astype(float)
            H = (rng.integers(0, 2, size=(2, 3)) * 2 - 1).astype(float)
            S = rng.integers(0, 2, size=(3, 3)).astype(float)
            f, g = rng.normal(size=(2, 2, 3))
            expected = (
                naive_trace_objective(B, H, S)
                + 0.5 * float(np.sum((B - f) ** 2))
                + 0.5 * float(np.sum((H - g) ** 2))
            )
            np.testing.assert_allclose(
                penalized_objective(B, H, S, f, g, eta=0.5), expected, rtol=1e-12
            )

    def test_negative_eta_rejected(self):
        B = np.ones((1, 2))
        with pytest.raises(ValueError):
            penalized_objective(B, B, np.eye(2), B, B, eta=-0.1)


class TestUpdateImageCodes:
    def test_worked_example_and_optimality(self):
        f = np.array([[0.1, -0.2]])
        H = np.array([[1.0, -1.0]])
        S = np.eye(2)
        got = update_image_codes(f, S, H, eta=0.5).unpack()
        np.testing.assert_array_equal(got, [[1, -1]])
        objectives = [image_subobjective(c, f, S, H, 0.5) for c in all_sign_matrices(1, 2)]
        assert image_subobjective(got.astype(float), f, S, H, 0.5) == min(objectives)

    def test_all_ties_resolve_to_plus_one(self):
        f = np.zeros((2, 3))
        got = update_image_codes(f, np.zeros((3, 3)), np.ones((2, 3)), eta=0.0)
        np.testing.assert_array_equal(got.unpack(), np.ones((2, 3), dtype=np.int8))

    def test_exhaustive_argmin_on_random_instances(self):
        rng = np.random.default_rng(33)
        for _ in range(60):
            f, _, _, H, S, eta = random_instance(rng, max_entries=9)
            got = update_image_codes(f, S, H, eta).unpack().astype(np.float64)
            candidates = all_sign_matrices(*f.shape)
            objs = np.array([image_subobjective(c, f, S, H, eta) for c in candidates])
            best = np.flatnonzero(objs == objs.min())
            assert any(np.array_equal(got, candidates[i]) for i in best)

    def test_output_is_sign_of_argument(self):
        rng = np.random.default_rng(55)
        f, _, _, H, S, eta = random_instance(rng)
        arg = 2.0 * eta * f + H @ S.T
        np.testing.assert_array_equal(
            update_image_codes(f, S, H, eta).unpack(), np.where(arg >= 0, 1, -1)
        )

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(ValueError):
            update_image_codes(np.zeros((2, 3)), np.eye(2), np.ones((2, 3)), eta=0.1)


class TestUpdateTextCodes:
    def test_worked_example_and_optimality(self):
        g = np.array([[-0.1, 0.2]])
        B = np.array([[1.0, -1.0]])
        S = np.eye(2)
        got = update_text_codes(g, S, B, eta=0.5).unpack()
        np.testing.assert_array_equal(got, [[1, -1]])
        objectives = [text_subobjective(c, g, S, B, 0.5) for c in all_sign_matrices(1, 2)]
        assert text_subobjective(got.astype(float), g, S, B, 0.5) == min(objectives)

    def test_zero_similarity_follows_encoder(self):
        rng = np.random.default_rng(6)
        g = rng.normal(size=(3, 4))
        B = (rng.integers(0, 2, size=(3, 4)) * 2 - 1).astype(float)
        got = update_text_codes(g, np.zeros((4, 4)), B, eta=0.25)
        np.testing.assert_array_equal(got.unpack(), np.where(g >= 0, 1, -1))

    def test_exhaustive_argmin_on_random_instances(self):
        rng = np.random.default_rng(44)
        for _ in range(60):
            _, g, B, _, S, eta = random_instance(rng, max_entries=9)
            got = update_text_codes(g, S, B, eta).unpack().astype(np.float64)
            candidates = all_sign_matrices(*g.shape)
            objs = np.array([text_subobjective(c, g, S, B, eta) for c in candidates])
            best = np.flatnonzero(objs == objs.min())
            assert any(np.array_equal(got, candidates[i]) for i in best)

    def test_output_is_sign_of_argument(self):
        rng = np.random.default_rng(66)
        _, g, B, _, S, eta = random_instance(rng)
        arg = 2.0 * eta * g + B @ S
        np.testing.assert_array_equal(
            update_text_codes(g, S, B, eta).unpack(), np.where(arg >= 0, 1, -1)
        )


class TestAlternatingDescent:
    def test_update_pair_never_increases_penalized_objective(self):
        rng = np.random.default_rng(77)
        for _ in range(30):
            f, g, B, H, S, eta = random_instance(rng)
            before = penalized_objective(B, H, S, f, g, eta)
            B_new = update_image_codes(f, S, H, eta).unpack()
            mid = penalized_objective(B_new, H, S, f, g, eta)
            H_new = update_text_codes(g, S, B_new, eta).unpack()
            after = penalized_objective(B_new, H_new, S, f, g, eta)
            assert mid <= before + 1e-9
            assert after <= mid + 1e-9
