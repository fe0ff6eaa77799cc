"""Discrete code-learning objective and its closed-form alternating updates.

For an in-batch pair of code matrices B (image side) and H (text side),
both M x N_b in {-1, +1}, and a batch similarity matrix S (N_b x N_b),
the learning objective is

    L(B, H, S) = -trace(B S H^T) = -sum_ij B_ij (H S^T)_ij,

penalized by the quantization gap between codes and encoder outputs:

    L(B, H, S) + eta * (||B - F||_F^2 + ||H - G||_F^2),

where F and G are the real-valued encoder outputs for the batch. Each
code matrix has a closed-form global minimizer of its subproblem when
everything else is fixed, because ||B - F||_F^2 is linear in B on the
{-1, +1} hypercube:

    B <- sign(2 eta F + H S^T)
    H <- sign(2 eta G + B S)

Note the image-side coefficient is H S^T, not S H^T: differentiating
trace(B S H^T) with respect to B gives H S^T, which is the only
orientation whose shape matches B. Ties (zero coefficient entries)
resolve to +1 via the shared sign rule, so updates are deterministic.
"""

from __future__ import annotations

import numpy as np

from .codes import CodeMatrix, sign_matrix

__all__ = [
    "penalized_objective",
    "trace_objective",
    "update_image_codes",
    "update_text_codes",
]

DEFAULT_ETA = 1e-4


def _signs(codes, name: str) -> np.ndarray:
    """Coerce a CodeMatrix or {-1, +1} array to a float64 sign matrix."""
    if isinstance(codes, CodeMatrix):
        return codes.unpack().astype(np.float64)
    arr = np.asarray(codes, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all((arr == 1.0) | (arr == -1.0)):
        raise ValueError(f"{name} entries must be exactly -1 or +1")
    return arr


def _real(matrix, name: str) -> np.ndarray:
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _check_eta(eta: float) -> float:
    eta = float(eta)
    if not np.isfinite(eta) or eta < 0.0:
        raise ValueError(f"eta must be a finite nonnegative real, got {eta}")
    return eta


def trace_objective(B, H, S) -> float:
    """Evaluate -trace(B S H^T) without forming the M x M product.

    B and H are M x N_b code matrices (packed or as {-1, +1} arrays);
    S is the N_b x N_b batch similarity.
    """
    b = _signs(B, "B")
    h = _signs(H, "H")
    s = _real(S, "S")
    n_b = b.shape[1]
    if h.shape != b.shape:
        raise ValueError(f"B and H shapes differ: {b.shape} vs {h.shape}")
    if s.shape != (n_b, n_b):
        raise ValueError(f"S must be {(n_b, n_b)}, got {s.shape}")
    return float(-np.sum(b * (h @ s.T)))


def penalized_objective(B, H, S, f_out, g_out, eta: float = DEFAULT_ETA) -> float:
    """Trace objective plus eta-weighted squared quantization gaps."""
    b = _signs(B, "B")
    h = _signs(H, "H")
    f = _real(f_out, "f_out")
    g = _real(g_out, "g_out")
    eta = _check_eta(eta)
    if f.shape != b.shape:
        raise ValueError(f"f_out shape {f.shape} does not match B {b.shape}")
    if g.shape != h.shape:
        raise ValueError(f"g_out shape {g.shape} does not match H {h.shape}")
    gap = np.sum((b - f) ** 2) + np.sum((h - g) ** 2)
    return trace_objective(b, h, S) + eta * float(gap)


def update_image_codes(f_out, S, H, eta: float = DEFAULT_ETA) -> CodeMatrix:
    """Closed-form image-code update B = sign(2 eta f_out + H S^T).

    Returns the global minimizer of
    eta * ||B - f_out||_F^2 - trace(B S H^T) over {-1, +1}^{M x N_b}.
    """
    f = _real(f_out, "f_out")
    h = _signs(H, "H")
    s = _real(S, "S")
    eta = _check_eta(eta)
    _check_update_shapes(f, h, s, "f_out")
    return sign_matrix(2.0 * eta * f + h @ s.T)


def update_text_codes(g_out, S, B, eta: float = DEFAULT_ETA) -> CodeMatrix:
    """Closed-form text-code update H = sign(2 eta g_out + B S)."""
    g = _real(g_out, "g_out")
    b = _signs(B, "B")
    s = _real(S, "S")
    eta = _check_eta(eta)
    _check_update_shapes(g, b, s, "g_out")
    return sign_matrix(2.0 * eta * g + b @ s)


def _check_update_shapes(out, other, s, out_name: str):
    if other.shape != out.shape:
        raise ValueError(
            f"{out_name} shape {out.shape} does not match codes {other.shape}"
        )
    n_b = out.shape[1]
    if s.shape != (n_b, n_b):
        raise ValueError(f"S must be {(n_b, n_b)}, got {s.shape}")
