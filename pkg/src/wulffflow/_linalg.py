"""Batched small symmetric eigenproblems (n = 1 or 2) in closed form."""

from math import comb

import numpy as np


def sym_eigvalsh(S):
    """Ascending eigenvalues of a batch of symmetric 1x1 or 2x2 matrices."""
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    if n == 1:
        return S[..., 0, :].copy()
    if n == 2:
        a, b, c = S[..., 0, 0], 0.5 * (S[..., 0, 1] + S[..., 1, 0]), S[..., 1, 1]
        m = 0.5 * (a + c)
        r = np.hypot(0.5 * (a - c), b)
        return np.stack([m - r, m + r], axis=-1)
    return np.linalg.eigvalsh(S)


def sym_det(S):
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    if n == 1:
        return S[..., 0, 0].copy()
    if n == 2:
        return S[..., 0, 0] * S[..., 1, 1] - S[..., 0, 1] * S[..., 1, 0]
    return np.linalg.det(S)


def cholesky_lower(S):
    """Lower Cholesky factor of a batch of SPD matrices (assumes definiteness)."""
    S = np.asarray(S, dtype=float)
    n = S.shape[-1]
    if n == 1:
        return np.sqrt(S)
    if n == 2:
        L = np.zeros_like(S)
        l11 = np.sqrt(S[..., 0, 0])
        l21 = S[..., 1, 0] / l11
        L[..., 0, 0] = l11
        L[..., 1, 0] = l21
        L[..., 1, 1] = np.sqrt(S[..., 1, 1] - l21**2)
        return L
    return np.linalg.cholesky(S)


def generalized_eigvalsh(A, B):
    """Eigenvalues of ``A u = k B u`` for SPD ``B`` via ``B = L L^T`` reduction."""
    L = cholesky_lower(B)
    n = A.shape[-1]
    if n == 1:
        return A[..., 0, :] / B[..., 0, :]
    Linv = np.linalg.inv(L) if n > 2 else _inv_lower2(L)
    C = Linv @ A @ np.swapaxes(Linv, -1, -2)
    return sym_eigvalsh(C)


def _inv_lower2(L):
    inv = np.zeros_like(L)
    inv[..., 0, 0] = 1.0 / L[..., 0, 0]
    inv[..., 1, 1] = 1.0 / L[..., 1, 1]
    inv[..., 1, 0] = -L[..., 1, 0] / (L[..., 0, 0] * L[..., 1, 1])
    return inv


def elementary_symmetric(kappa):
    """Normalized elementary symmetric means ``E_0..E_n`` along the last axis."""
    kappa = np.asarray(kappa, dtype=float)
    n = kappa.shape[-1]
    # sigma_k by the standard product expansion
    sig = [np.ones(kappa.shape[:-1])] + [np.zeros(kappa.shape[:-1]) for _ in range(n)]
    for i in range(n):
        for k in range(i + 1, 0, -1):
            sig[k] = sig[k] + kappa[..., i] * sig[k - 1]
    return np.stack([sig[k] / comb(n, k) for k in range(n + 1)], axis=-1)
