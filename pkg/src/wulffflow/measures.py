"""Anisotropic metric projection and curvature measures.

The local curvature measures ``Phi_r(K; beta)`` are the coefficients of the
local Steiner polynomial

    L(A_eps(K, beta)) = 1/(n+1) sum_{r=0}^{n} eps^{n+1-r} C(n+1, r) Phi_r(K; beta),

where ``A_eps(K, beta)`` is the set of points at anisotropic distance
``0 < d_W(K, x) <= eps`` whose foot point lies in ``beta``.  The shell volume
is estimated by stratified Monte Carlo and the coefficients by weighted least
squares.  For polygons the measures are also known exactly (edges carry
``Phi_1``, vertices carry ``Phi_0``), which gives an independent reference.

Shells are half-open (``0 < d <= eps``); the boundary sets involved have
measure zero, so the convention never shows up in an estimate.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import comb

import numpy as np
from scipy.optimize import minimize

from .anisotropy import gamma0, gamma0_argmax, norm_equivalence_constant
from .bodies import PolytopeBody, SupportBody, add_wulff, polytope_support, volume
from .curvature import MixedVolumes, aniso_curvatures, mixed_volumes
from .errors import IllConditionedFitError

__all__ = [
    "RegionSpec",
    "Projection",
    "SteinerFit",
    "metric_projection",
    "project_batch",
    "local_parallel_volume",
    "steiner_fit_local",
    "steiner_fit_global",
    "default_eps_grid",
    "polygon_curvature_measures",
    "smooth_curvature_measures",
    "inscribed_polygon",
    "weak_continuity_probe",
    "volume_via_reach_check",
    "projection_lipschitz_constant",
    "worker_count",
]

_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)
_CHUNK = 1 << 16  # strata per Monte Carlo work unit


def worker_count():
    """Thread count from ``WULFFFLOW_THREADS`` (default: CPU count, at most 8)."""
    env = os.environ.get("WULFFFLOW_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


# ---------------------------------------------------------------------------
# regions
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RegionSpec:
    """Test region ``beta``: all space, an open ball, or an open axis box."""

    kind: str = "all"
    center: tuple = ()
    radius: float = 0.0
    lo: tuple = ()
    hi: tuple = ()

    def __post_init__(self):
        if self.kind not in ("all", "ball", "box"):
            raise ValueError(f"unknown region kind {self.kind!r}")
        if self.kind == "ball" and not self.radius > 0:
            raise ValueError("ball radius must be positive")
        if self.kind == "box" and not np.all(np.asarray(self.lo) < np.asarray(self.hi)):
            raise ValueError("box needs lo < hi componentwise")

    @classmethod
    def everywhere(cls):
        return cls("all")

    @classmethod
    def ball(cls, center, radius):
        return cls("ball", center=tuple(float(c) for c in center), radius=float(radius))

    @classmethod
    def box(cls, lo, hi):
        return cls("box", lo=tuple(float(v) for v in lo), hi=tuple(float(v) for v in hi))

    def contains(self, P):
        P = np.atleast_2d(P)
        if self.kind == "all":
            return np.ones(len(P), dtype=bool)
        if self.kind == "ball":
            return np.sum((P - np.asarray(self.center)) ** 2, axis=1) < self.radius**2
        return np.all((P > np.asarray(self.lo)) & (P < np.asarray(self.hi)), axis=1)

    def bbox(self, dim):
        """Axis box containing the region (infinite for all space)."""
        if self.kind == "all":
            return np.full(dim, -np.inf), np.full(dim, np.inf)
        if self.kind == "ball":
            c = np.asarray(self.center)
            return c - self.radius, c + self.radius
        return np.asarray(self.lo, dtype=float), np.asarray(self.hi, dtype=float)

    def to_dict(self):
        if self.kind == "all":
            return {"kind": "all"}
        if self.kind == "ball":
            return {"kind": "ball", "center": list(self.center), "radius": self.radius}
        return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d):
        # infer the kind from the keys so a bare {"center", "radius"} is not silently global
        default = "ball" if "radius" in d else "box" if "lo" in d else "all"
        kind = d.get("kind", default)
        if kind == "all":
            return cls.everywhere()
        if kind == "ball":
            return cls.ball(d["center"], d["radius"])
        if kind == "box":
            return cls.box(d["lo"], d["hi"])
        raise ValueError(f"unknown region kind {kind!r}")


# ---------------------------------------------------------------------------
# metric projection
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Projection:
    """Foot point, unit direction (``None`` inside ``K``) and anisotropic distance."""

    foot: np.ndarray
    direction: np.ndarray | None
    distance: float

    @property
    def inside(self):
        return self.direction is None


def _project_2d(poly, field, x, iters=40):
    # golden-section on every edge parameter at once; gamma0(x - q(s)) is convex in s
    V, D = poly.vertices, np.roll(poly.vertices, -1, axis=0) - poly.vertices
    lo, hi = np.zeros(len(V)), np.ones(len(V))

    def f(s):
        return gamma0(field, x - (V + s[:, None] * D))

    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        left = fc <= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
        fnew = f(new)
        c, d = np.where(left, new, d), np.where(left, c, new)
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
    # polish by bisection on the sign of the derivative -<D gamma0(x - q), d>
    w = np.maximum(hi - lo, 1e-6)  # golden-section is only sqrt(eps) accurate near a flat minimum
    lo, hi = np.clip(lo - w, 0.0, 1.0), np.clip(hi + w, 0.0, 1.0)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        _, Xs = gamma0_argmax(field, x - (V + mid[:, None] * D))
        slope = -np.einsum("ij,ij->i", Xs, D)
        lo = np.where(slope < 0, mid, lo)
        hi = np.where(slope < 0, hi, mid)
    # endpoints are candidates too (vertices)
    cand_s = np.concatenate([0.5 * (lo + hi), np.zeros(len(V))])
    cand_e = np.concatenate([np.arange(len(V)), np.arange(len(V))])
    Q = V[cand_e] + cand_s[:, None] * D[cand_e]
    vals = gamma0(field, x - Q)
    j = int(np.argmin(vals))
    return Q[j], float(vals[j])


def _project_3d(poly, field, x):
    def obj(q):
        val, X = gamma0_argmax(field, x - q)
        g = field.evaluator.value(X)
        # d/dq of gamma0(x - q)^2 / 2 is -gamma0 * X / gamma(X)
        return 0.5 * val[0] ** 2, -val[0] * X[0] / g[0]

    q0 = poly.vertices.mean(axis=0)
    cons = {"type": "ineq", "fun": lambda q: poly.offsets - poly.normals @ q, "jac": lambda q: -poly.normals}
    res = minimize(obj, q0, jac=True, constraints=[cons], method="SLSQP", options={"ftol": 1e-16, "maxiter": 500})
    q = res.x
    return q, float(gamma0(field, x - q))


def metric_projection(poly, field, x):
    """Anisotropic nearest point of ``poly`` to ``x``: minimizes ``gamma0(x - q)``.

    2D: per-edge golden-section search over all edges and vertices.
    3D: SLSQP over the facet inequalities with the exact gradient of the gauge.
    """
    x = np.asarray(x, dtype=float)
    if poly.contains(x[None, :])[0]:
        return Projection(x.copy(), None, 0.0)
    if poly.dim == 2:
        q, dist = _project_2d(poly, field, x)
    else:
        q, dist = _project_3d(poly, field, x)
    return Projection(q, (x - q) / dist, dist)


def _gauge(field, Z):
    # closed form for quadratic gauges, otherwise the general dual norm
    spec = field.spec
    if spec.kind == "constant":
        return np.linalg.norm(Z, axis=1) / spec.c
    if spec.kind == "ellipse":
        return np.sqrt(np.sum((Z / np.asarray(spec.axes)) ** 2, axis=1))
    return gamma0(field, Z)


def project_batch(poly, field, X):
    """Vectorized 2D projection by normal-cone classification.

    Returns ``(foot, distance)``; points inside ``poly`` get distance 0.  A point
    outside projects to the interior of edge ``i`` iff ``x = q + t phi(nu_i)``
    with ``q`` on the edge and ``t > 0`` (then ``d = t``); otherwise it lies in
    the cone ``v + pos{phi(nu_{i-1}), phi(nu_i)}`` of a vertex and ``d = gamma0(x - v)``.
    For 3D polytopes this falls back to the scalar solver.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if poly.dim == 3:
        out = [metric_projection(poly, field, x) for x in X]
        return np.array([p.foot for p in out]), np.array([p.distance for p in out])
    V, Nrm = poly.vertices, poly.normals
    m = len(V)
    g_nu = field.evaluator.value(Nrm)
    Phi = field.evaluator.grad(Nrm)  # D gamma(nu) is the Wulff point with normal nu
    foot = X.copy()
    dist = np.zeros(len(X))
    rel = np.einsum("pmi,mi->pm", X[:, None, :] - V[None], Nrm)
    outside = np.any(rel > 0, axis=1)
    Xo = X[outside]
    fo = np.empty_like(Xo)
    do = np.full(len(Xo), np.nan)
    for i in range(m):
        t = (Xo - V[i]) @ Nrm[i] / g_nu[i]
        q = Xo - t[:, None] * Phi[i]
        s = (q - V[i]) @ poly.edge_dirs[i] / poly.edge_lengths[i]
        hit = (t > 0) & (s > 0) & (s < 1) & np.isnan(do)
        # snap exactly onto the edge segment
        fo[hit] = V[i] + (s[hit, None] * poly.edge_lengths[i]) * poly.edge_dirs[i]
        do[hit] = t[hit]
    rest = np.isnan(do)
    if np.any(rest):
        Xr = Xo[rest]
        best = np.full(len(Xr), -1)
        for j in range(m):
            a, b = Phi[j - 1], Phi[j]
            w = Xr - V[j]
            ca = a[0] * w[:, 1] - a[1] * w[:, 0]
            cb = w[:, 0] * b[1] - w[:, 1] * b[0]
            best = np.where((best < 0) & (ca >= 0) & (cb >= 0), j, best)
        # numerical ties on cone boundaries: pick the nearest vertex by gauge
        miss = best < 0
        if np.any(miss):
            dv = np.stack([_gauge(field, Xr[miss] - V[j]) for j in range(m)], axis=1)
            best[miss] = np.argmin(dv, axis=1)
        fr = V[best]
        fo[rest] = fr
        do[rest] = _gauge(field, Xr - fr)
    foot[outside] = fo
    dist[outside] = do
    return foot, dist


def projection_lipschitz_constant(field):
    """Reported Lipschitz bound ``2 C^2`` for ``f_K``, ``C`` the norm-equivalence constant."""
    C = norm_equivalence_constant(field)
    return 2.0 * C**2


# ---------------------------------------------------------------------------
# Monte Carlo shell volumes
# ---------------------------------------------------------------------------
def _shell_box(poly, field, region, eps):
    P = field.wulff_points
    lo = poly.vertices.min(axis=0) + eps * P.min(axis=0) * 1.01
    hi = poly.vertices.max(axis=0) + eps * P.max(axis=0) * 1.01
    rlo, rhi = region.bbox(poly.dim)
    pad = eps * np.max(np.linalg.norm(P, axis=1)) * 1.01
    lo = np.maximum(lo, rlo - pad)
    hi = np.minimum(hi, rhi + pad)
    return lo, hi


def _strata_shape(count, dim):
    side = max(1, int(round(count ** (1.0 / dim))))
    return (side,) * dim


def _chunk_indicator(poly, field, region, eps, lo, hi, shape, start, stop, rng):
    dim = len(shape)
    idx = np.arange(start, stop)
    cell = np.stack(np.unravel_index(idx, shape), axis=1).astype(float)
    width = (hi - lo) / np.asarray(shape)
    y = []
    for _ in range(2):
        U = rng.random((len(idx), dim))
        X = lo + (cell + U) * width
        foot, d = project_batch(poly, field, X)
        y.append(((d > 0) & (d <= eps) & region.contains(foot)).astype(float))
    return np.sum(y[0] + y[1]), np.sum((y[0] - y[1]) ** 2)


def local_parallel_volume(poly, field, region, eps, samples=1_000_000, seed=0, eps_index=0, workers=None):
    """Stratified Monte Carlo estimate of the shell volume ``L(A_eps(K, beta))``.

    The sampling box is split into ``samples / 2`` strata with two uniform
    points each; the within-stratum differences give the variance.  Strata are
    processed in fixed chunks seeded from ``SeedSequence([seed, eps_index])``,
    so the estimate does not depend on the number of workers.

    Returns ``(volume, standard_error)``.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    lo, hi = _shell_box(poly, field, region, eps)
    if np.any(hi <= lo):
        return 0.0, 0.0
    shape = _strata_shape(max(1, samples // 2), poly.dim)
    S = int(np.prod(shape))
    bounds = list(range(0, S, _CHUNK)) + [S]
    seqs = np.random.SeedSequence([int(seed), int(eps_index)]).spawn(len(bounds) - 1)

    def job(c):
        rng = np.random.default_rng(seqs[c])
        return _chunk_indicator(poly, field, region, eps, lo, hi, shape, bounds[c], bounds[c + 1], rng)

    workers = worker_count() if workers is None else workers
    if workers > 1 and len(seqs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(job, range(len(seqs))))
    else:
        parts = [job(c) for c in range(len(seqs))]
    cell_vol = float(np.prod(hi - lo)) / S
    total = sum(p[0] for p in parts)
    sq = sum(p[1] for p in parts)
    est = cell_vol * total / 2.0
    se = cell_vol * np.sqrt(sq) / 2.0
    return float(est), float(se)


# ---------------------------------------------------------------------------
# Steiner fits
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class SteinerFit:
    """Least-squares fit of a Steiner polynomial.

    ``phi[r]`` is ``Phi_r`` for ``r = 0..n``; ``stderr`` are the standard
    errors from the fit covariance (zero for deterministic fits).
    """

    eps: np.ndarray
    volumes: np.ndarray
    errors: np.ndarray
    phi: np.ndarray
    stderr: np.ndarray
    residual: float
    cond: float

    def to_dict(self):
        return {
            "eps": self.eps.tolist(),
            "volumes": self.volumes.tolist(),
            "errors": self.errors.tolist(),
            "phi": self.phi.tolist(),
            "stderr": self.stderr.tolist(),
            "residual": self.residual,
            "cond": self.cond,
        }


def default_eps_grid(poly, count=8):
    """``count`` log-spaced values in ``[eps_max/30, eps_max]``, ``eps_max`` = shortest edge / 4."""
    emax = poly.shortest_edge / 4.0
    return np.geomspace(emax / 30.0, emax, count)


def _local_design(eps, n):
    return np.stack([eps ** (n + 1 - r) * comb(n + 1, r) / (n + 1) for r in range(n + 1)], axis=1)


def _weighted_lsq(A, y, sigma, max_cond=1e8):
    Aw = A / sigma[:, None]
    yw = y / sigma
    # column scaling keeps the condition number about the eps-grid, not units
    scale = np.linalg.norm(Aw, axis=0)
    As = Aw / scale
    cond = float(np.linalg.cond(As))
    if not np.isfinite(cond) or cond > max_cond:
        raise IllConditionedFitError(f"eps-grid design matrix condition number {cond:.3g} exceeds {max_cond:g}")
    coef, *_ = np.linalg.lstsq(As, yw, rcond=None)
    coef = coef / scale
    cov = np.linalg.inv(As.T @ As) / np.outer(scale, scale)
    return coef, cov, cond


def steiner_fit_local(poly, field, region, eps_grid=None, samples=1_000_000, seed=0, workers=None):
    """Fit ``Phi_0..Phi_n`` of ``poly`` restricted to ``region`` from Monte Carlo shells."""
    n = poly.dim - 1
    eps = default_eps_grid(poly) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if len(np.unique(eps)) < n + 2 or np.any(eps <= 0):
        raise ValueError(f"need at least {n + 2} distinct positive eps values")
    vols, errs = [], []
    for i, e in enumerate(eps):
        v, s = local_parallel_volume(poly, field, region, e, samples, seed, eps_index=i, workers=workers)
        vols.append(v)
        errs.append(s)
    vols, errs = np.array(vols), np.array(errs)
    A = _local_design(eps, n)
    # floor the error so shells that happen to be empty do not get infinite weight
    sigma = np.maximum(errs, 1e-12 * max(1.0, float(np.max(np.abs(vols)))))
    coef, cov, cond = _weighted_lsq(A, vols, sigma)
    resid = float(np.max(np.abs(A @ coef - vols)))
    return SteinerFit(eps, vols, errs, coef, np.sqrt(np.diag(cov)), resid, cond)


def steiner_fit_global(body, field, eps_grid=None):
    """Mixed volumes from an exact Steiner polynomial fit of ``Vol(K + eps W)``.

    Volumes come from support addition ``h + eps gamma``; polytopes are
    sampled with :func:`polytope_support` and use exact parallel volumes.
    Returns ``(MixedVolumes, SteinerFit)``; ``fit.phi`` holds the polynomial
    coefficients ``c_0..c_{n+1}``.
    """
    if isinstance(body, PolytopeBody):
        body = polytope_support(body, field.grid)
    n = body.n
    eps = np.linspace(0.05, 0.5, 8) if eps_grid is None else np.asarray(eps_grid, dtype=float)
    if len(np.unique(eps)) < n + 2:
        raise ValueError(f"need at least {n + 2} distinct eps values")
    vols = np.array([volume(add_wulff(body, field, e)) for e in eps])
    A = np.vander(eps, n + 2, increasing=True)
    coef, cov, cond = _weighted_lsq(A, vols, np.ones_like(vols))
    resid = float(np.max(np.abs(A @ coef - vols)))
    V = [(n + 1) * coef[j] / comb(n + 1, j) for j in range(n + 2)][::-1]
    fit = SteinerFit(eps, vols, np.zeros_like(vols), coef, np.zeros_like(coef), resid, cond)
    return MixedVolumes(tuple(float(v) for v in V)), fit


# ---------------------------------------------------------------------------
# exact polygon measures and weak continuity
# ---------------------------------------------------------------------------
def _segment_fraction(region, a, b):
    # fraction of the open segment (a, b) lying in the open region
    if region.kind == "all":
        return 1.0
    d = b - a
    if region.kind == "box":
        t0, t1 = 0.0, 1.0
        for k in range(len(a)):
            if d[k] == 0:
                if not (region.lo[k] < a[k] < region.hi[k]):
                    return 0.0
                continue
            u0, u1 = (region.lo[k] - a[k]) / d[k], (region.hi[k] - a[k]) / d[k]
            t0, t1 = max(t0, min(u0, u1)), min(t1, max(u0, u1))
        return max(0.0, t1 - t0)
    c = np.asarray(region.center)
    A = d @ d
    B = 2 * d @ (a - c)
    C = (a - c) @ (a - c) - region.radius**2
    disc = B * B - 4 * A * C
    if disc <= 0:
        return 0.0
    r = np.sqrt(disc)
    t0, t1 = (-B - r) / (2 * A), (-B + r) / (2 * A)
    return max(0.0, min(1.0, t1) - max(0.0, t0))


def _arc_measure(field, t0, t1, nodes=64):
    # int gamma (gamma'' + gamma) dtheta over normal angles [t0, t1]
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * (t1 - t0) * (x + 1) + t0
    g, _, g2 = field.evaluator.theta_derivs(t, order=2)
    return 0.5 * (t1 - t0) * float(np.dot(w, g * (g2 + g)))


def polygon_curvature_measures(poly, field, region=None):
    """Exact ``(Phi_0, Phi_1)`` of a convex polygon restricted to ``region``.

    Edge ``e`` contributes ``Phi_1 = |e cap beta| gamma(nu_e)``; vertex ``v`` in
    ``beta`` contributes ``Phi_0 = int gamma (gamma'' + gamma) dtheta`` over its
    normal cone.
    """
    if poly.dim != 2:
        raise ValueError("exact curvature measures are implemented for polygons only")
    region = RegionSpec.everywhere() if region is None else region
    V, Nrm = poly.vertices, poly.normals
    m = len(V)
    ang = np.arctan2(Nrm[:, 1], Nrm[:, 0])
    g_nu = field.evaluator.value(Nrm)
    phi1 = sum(
        poly.edge_lengths[i] * g_nu[i] * _segment_fraction(region, V[i], V[(i + 1) % m]) for i in range(m)
    )
    inside = region.contains(V)
    phi0 = 0.0
    for j in range(m):
        if inside[j]:
            t0 = ang[j - 1]
            t1 = ang[j]
            t1 = t0 + np.mod(t1 - t0, 2 * np.pi)
            phi0 += _arc_measure(field, t0, t1)
    return np.array([phi0, phi1])


def smooth_curvature_measures(body, field, region=None):
    """``Phi_r(K; beta) = int_{dK cap beta} E_{n-r}(kappa) gamma dmu`` by quadrature."""
    region = RegionSpec.everywhere() if region is None else region
    curv = aniso_curvatures(body, field)
    grid = body.grid
    pts = body.h[:, None] * grid.dirs + grid.tangent_to_ambient(grid.grad(body.h))
    mask = region.contains(pts).astype(float)
    w = mask * field.gamma * curv.det_r
    n = body.n
    return np.array([float(grid.integrate(curv.E[:, n - r] * w)) for r in range(n + 1)])


def inscribed_polygon(body, m):
    """Polygon through the boundary points of ``body`` with normals at angles ``2 pi i / m``.

    Boundary points ``X(theta) = h z + h' z_perp`` use the trigonometric
    interpolant of ``h``.
    """
    if body.n != 1:
        raise ValueError("inscribed polygons need a planar body")
    N = body.grid.size
    F = np.fft.rfft(body.h) / N
    k = np.arange(len(F))
    wts = np.where((k == 0) | (2 * k == N), 1.0, 2.0)
    t = 2 * np.pi * np.arange(m) / m
    E = np.exp(1j * np.outer(t, k))
    h = np.real(E @ (wts * F))
    dh = np.real(E @ (wts * 1j * k * F * (2 * k != N)))
    z = np.stack([np.cos(t), np.sin(t)], axis=1)
    zp = np.stack([-np.sin(t), np.cos(t)], axis=1)
    return PolytopeBody(h[:, None] * z + dh[:, None] * zp)


def weak_continuity_probe(body, field, m_values=(8, 16, 32, 64), region=None):
    """Exact polygon measures of inscribed ``m``-gons next to the smooth limit.

    Returns ``{"m": [...], "phi": [[Phi_0, Phi_1], ...], "limit": [Phi_0, Phi_1]}``.
    """
    region = RegionSpec.everywhere() if region is None else region
    rows = [polygon_curvature_measures(inscribed_polygon(body, m), field, region) for m in m_values]
    limit = smooth_curvature_measures(body, field, region)
    return {"m": list(m_values), "phi": [r.tolist() for r in rows], "limit": limit.tolist()}


def volume_via_reach_check(rho, field):
    """``|1/(n+1) sum_i (-1)^{n-i} C(n+1,i) rho^{n+1-i} Phi_i(rho W) - Vol(rho W)|``.

    For ``K = rho W`` the interior reach is constantly ``rho``; the measures
    ``Phi_i(K) = V_i(K, W)`` come from curvature quadrature.
    """
    n = field.n
    K = SupportBody(field.grid, rho * np.asarray(field.gamma))
    mv = mixed_volumes(K, field)
    total = sum((-1) ** (n - i) * comb(n + 1, i) * rho ** (n + 1 - i) * mv[i] for i in range(n + 1)) / (n + 1)
    return float(abs(total - volume(K)))
