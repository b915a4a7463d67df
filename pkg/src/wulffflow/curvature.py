"""Anisotropic curvatures, mixed volumes and the integral (in)equalities.

All integrals are taken over the unit sphere through the Gauss map: the area
element of the boundary pulls back to ``det(r) dsigma``, where ``r`` is the
radii matrix of the support function.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from ._linalg import elementary_symmetric, generalized_eigvalsh, sym_det, sym_eigvalsh
from .bodies import _require_convex, anisotropic_support_s, parallel_volume_poly, volume
from .errors import QUnavailableError

__all__ = [
    "CurvatureField",
    "MixedVolumes",
    "aniso_curvatures",
    "curvature_from_radii",
    "mixed_volumes",
    "iso_ratio",
    "minkowski_residual",
    "heintze_karcher_slack",
    "af_slacks",
    "tau_cross_check",
    "factorization_error",
    "maclaurin_slack",
]


@dataclass(frozen=True)
class CurvatureField:
    """Per-node curvature data of a strictly convex support body.

    Attributes
    ----------
    kappa : ndarray, shape (M, n)
        Anisotropic principal curvatures, ascending.
    lam : ndarray, shape (M, n)
        Isotropic principal curvatures, ascending.
    E : ndarray, shape (M, n+1)
        Normalized elementary symmetric means ``E_0 = 1, E_1, ..., E_n`` of ``kappa``.
    det_r : ndarray, shape (M,)
        Determinant of the radii matrix (Jacobian of the inverse Gauss map).
    """

    kappa: np.ndarray
    lam: np.ndarray
    E: np.ndarray
    det_r: np.ndarray

    @property
    def n(self):
        return self.kappa.shape[1]

    def Ek(self, k):
        return self.E[:, k]


def aniso_curvatures(body, field):
    """Solve ``A_gamma u = kappa r u`` per node; ``lam`` are the eigenvalues of ``r^{-1}``.

    Raises ``ConvexityError`` when the radii matrix is not positive definite.
    """
    return curvature_from_radii(_require_convex(body), field)


def curvature_from_radii(R, field, radii=None):
    """Curvature data from a precomputed (positive definite) radii matrix.

    ``radii`` may carry the already computed ascending eigenvalues of ``R``.
    """
    kappa = generalized_eigvalsh(field.a_gamma, R)
    radii = sym_eigvalsh(R) if radii is None else radii
    lam = 1.0 / radii[:, ::-1]
    return CurvatureField(kappa, lam, elementary_symmetric(kappa), sym_det(R))


@dataclass(frozen=True)
class MixedVolumes:
    """Mixed volumes ``V_0(K, W), ..., V_{n+1}(K, W)`` (index = power of length)."""

    V: tuple

    @property
    def n(self):
        return len(self.V) - 2

    def __getitem__(self, k):
        return self.V[k]

    def __len__(self):
        return len(self.V)

    def as_array(self):
        return np.array(self.V)

    def to_list(self):
        return [float(v) for v in self.V]


def _poly_mixed_volumes(body, field):
    n = body.n
    c = parallel_volume_poly(body.polytope, field)
    # shift p(t) -> p(t + eps) to account for the Wulff part already added
    if body.wulff_eps:
        shifted = np.zeros_like(c)
        for j, cj in enumerate(c):
            for i in range(j + 1):
                shifted[i] += cj * comb(j, i) * body.wulff_eps ** (j - i)
        c = shifted
    V = [0.0] * (n + 2)
    for j in range(n + 2):
        V[n + 1 - j] = (n + 1) * c[j] / comb(n + 1, j)
    return V


def mixed_volumes(body, field, curv=None):
    """``V_{n+1-k} = int E_{k-1}(kappa) gamma det(r) dsigma`` for ``k = 1..n+1``.

    ``V_{n+1} = (n+1) Vol(K)``.  Polytopal samples (from ``polytope_support``)
    use the exact parallel-volume polynomial instead.
    """
    n = body.n
    if body.is_polytopal:
        return MixedVolumes(tuple(float(v) for v in _poly_mixed_volumes(body, field)))
    curv = aniso_curvatures(body, field) if curv is None else curv
    w = field.gamma * curv.det_r
    V = [0.0] * (n + 2)
    for k in range(1, n + 2):
        V[n + 1 - k] = float(body.grid.integrate(curv.E[:, k - 1] * w))
    V[n + 1] = (n + 1) * volume(body)
    return MixedVolumes(tuple(V))


def iso_ratio(body, field, ell, mv=None):
    """``I_ell = V_ell^{n+1} / (V_{n+1}^ell V_0^{n+1-ell})``, with ``I_ell >= 1``."""
    mv = mixed_volumes(body, field) if mv is None else mv
    n = mv.n
    if not 1 <= ell <= n:
        raise ValueError(f"ell must lie in 1..{n}")
    # evaluate in logs to avoid overflow for large bodies
    return float(np.exp((n + 1) * np.log(mv[ell]) - ell * np.log(mv[n + 1]) - (n + 1 - ell) * np.log(mv[0])))


def minkowski_residual(body, field, r, curv=None):
    """``int (E_{r-1} - s E_r) gamma det(r) dsigma``; vanishes in the continuum."""
    curv = aniso_curvatures(body, field) if curv is None else curv
    if not 1 <= r <= curv.n:
        raise ValueError(f"r must lie in 1..{curv.n}")
    s = anisotropic_support_s(body, field)
    integrand = (curv.E[:, r - 1] - s * curv.E[:, r]) * field.gamma * curv.det_r
    return float(body.grid.integrate(integrand))


def heintze_karcher_slack(body, field, curv=None):
    """``int gamma / E_1 det(r) dsigma - (n+1) Vol(K)``; nonnegative, zero on ``rho W + p``."""
    curv = aniso_curvatures(body, field) if curv is None else curv
    lhs = float(body.grid.integrate(field.gamma / curv.E[:, 1] * curv.det_r))
    return lhs - (body.n + 1) * volume(body)


def af_slacks(body, field, mv=None):
    """Log-slacks of ``V_{n+1-j}^{k-i} >= V_{n+1-i}^{k-j} V_{n+1-k}^{j-i}``.

    Returns a list of ``((i, j, k), slack)`` over ``0 <= i < j < k <= n+1``.
    """
    mv = mixed_volumes(body, field) if mv is None else mv
    n = mv.n
    L = np.log(mv.as_array())
    out = []
    for i, j, k in combinations(range(n + 2), 3):
        s = (k - i) * L[n + 1 - j] - (k - j) * L[n + 1 - i] - (j - i) * L[n + 1 - k]
        out.append(((i, j, k), float(s)))
    return out


def factorization_error(body, field, curv=None):
    """Max relative error of ``E_n(kappa) = det(A_gamma) E_n(lam)`` over nodes."""
    curv = aniso_curvatures(body, field) if curv is None else curv
    n = curv.n
    lhs = curv.E[:, n]
    rhs = field.det_a * np.prod(curv.lam, axis=1)
    return float(np.max(np.abs(lhs - rhs) / np.abs(rhs)))


def maclaurin_slack(curv):
    """Smallest value of ``E_{r-1} E_1 - E_r`` over nodes and ``r = 2..n`` (0 if n = 1)."""
    n = curv.n
    if n < 2:
        return 0.0
    return float(min(np.min(curv.E[:, r - 1] * curv.E[:, 1] - curv.E[:, r]) for r in range(2, n + 1)))


def tau_cross_check(body, field, curv=None):
    """Compare the radii tensor on the Wulff boundary with ``1 / kappa``.

    ``tau_ab = Hess_bar(s)_ab + g_bar_ab s - Q_abc grad_bar(s)^c / 2`` is built
    in the sphere coordinates pulled back to ``Sigma`` by the Wulff map, with
    ``g_bar = G(phi_a, phi_b)`` and Christoffel symbols
    ``Gamma_{d,ab} = G(phi_ab, phi_d) + Q(phi_a, phi_b, phi_d) / 2``.
    Returns the max over nodes of ``|tau_i - 1/kappa_i| / (1/kappa_i)``.
    """
    if not field.q_available:
        raise QUnavailableError("tau cross-check needs materialize_q(field)")
    curv = aniso_curvatures(body, field) if curv is None else curv
    grid = body.grid
    G, Q = field.G, field.Q
    p1, p2 = field.wulff_coord_derivs
    s = anisotropic_support_s(body, field)
    ds, d2s = grid.coord_derivs(s)

    gbar = np.einsum("mai,mij,mbj->mab", p1, G, p1)
    q3 = np.einsum("mijk,mai,mbj,mck->mabc", Q, p1, p1, p1)
    low = np.einsum("mabi,mij,mdj->mdab", p2, G, p1) + 0.5 * q3.transpose(0, 3, 1, 2)
    ginv = np.linalg.inv(gbar)
    Gamma = np.einsum("mcd,mdab->mcab", ginv, low)
    grad_up = np.einsum("mcd,md->mc", ginv, ds)

    hess = d2s - np.einsum("mcab,mc->mab", Gamma, ds)
    tau = hess + gbar * s[:, None, None] - 0.5 * np.einsum("mabc,mc->mab", q3, grad_up)
    tau = 0.5 * (tau + np.swapaxes(tau, 1, 2))
    t_eigs = generalized_eigvalsh(tau, gbar)
    radii = np.sort(1.0 / curv.kappa, axis=1)
    return float(np.max(np.abs(np.sort(t_eigs, axis=1) - radii) / radii))
