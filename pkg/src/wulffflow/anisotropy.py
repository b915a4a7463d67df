"""Anisotropy functions, Wulff shapes and the dual norm.

An anisotropy is a smooth positive function ``gamma`` on S^n whose matrix
``A_gamma = Hess gamma + gamma * Id`` is positive definite.  It is the support
function of the Wulff shape ``W``; the gauge of ``W`` is the dual norm
``gamma0(z) = sup_x <x, z> / gamma(x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np

from ._linalg import sym_det, sym_eigvalsh
from ._io import load_json
from .errors import AdmissibilityError, PositivityError, QUnavailableError
from .sphere import make_grid

__all__ = [
    "GammaSpec",
    "AnisotropyField",
    "WulffShapeSummary",
    "build_anisotropy",
    "gamma0",
    "gamma0_argmax",
    "wulff_point",
    "d_W",
    "wulff_summary",
    "materialize_q",
    "norm_equivalence_constant",
    "ADMISSIBILITY_MARGIN",
]

ADMISSIBILITY_MARGIN = 1e-8
_GOLDEN = 0.5 * (np.sqrt(5.0) - 1.0)


# ---------------------------------------------------------------------------
# specification
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GammaSpec:
    """Declarative description of an anisotropy function.

    ``kind`` is one of ``"constant"`` (uses ``c``), ``"trig"`` (``a0`` plus
    ``terms``), ``"ellipse"`` (semi-axes ``axes``) or ``"table"`` (node samples
    ``values`` on the grid of size ``grid_size``).

    For ``n = 1`` a trig term ``{"m", "a", "b"}`` contributes
    ``a cos(m t) + b sin(m t)`` in the polar angle ``t``.  For ``n = 2`` the
    series is axially symmetric: a term contributes ``a cos(m theta)`` in the
    colatitude ``theta`` (a Chebyshev polynomial of ``z_3``), and ``b`` must
    be zero.
    """

    n: int
    kind: str
    c: float | None = None
    a0: float | None = None
    terms: tuple = ()
    axes: tuple | None = None
    values: tuple | None = None
    grid_size: object = None

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"dimension n must be 1 or 2, got {self.n}")
        if self.kind not in ("constant", "trig", "ellipse", "table"):
            raise ValueError(f"unknown gamma kind {self.kind!r}")
        if self.kind == "constant":
            if self.c is None or not self.c > 0:
                raise PositivityError("constant anisotropy requires c > 0")
        elif self.kind == "trig":
            if self.a0 is None:
                raise ValueError("trig anisotropy requires a0")
            for t in self.terms:
                if self.n == 2 and t.get("b", 0.0) != 0.0:
                    raise ValueError("n = 2 trig terms are axially symmetric (b must be 0)")
        elif self.kind == "ellipse":
            if self.axes is None or len(self.axes) != self.n + 1:
                raise ValueError(f"ellipse anisotropy needs {self.n + 1} semi-axes")
            if min(self.axes) <= 0:
                raise PositivityError("ellipse semi-axes must be positive")
        elif self.values is None:
            raise ValueError("table anisotropy requires values")

    # convenience constructors
    @classmethod
    def constant(cls, c=1.0, n=1, grid_size=None):
        return cls(n=n, kind="constant", c=float(c), grid_size=grid_size)

    @classmethod
    def trig(cls, a0=1.0, terms=(), n=1, grid_size=None):
        norm = tuple(
            {"m": int(t["m"]), "a": float(t.get("a", 0.0)), "b": float(t.get("b", 0.0))}
            for t in terms
        )
        return cls(n=n, kind="trig", a0=float(a0), terms=norm, grid_size=grid_size)

    @classmethod
    def ellipse(cls, axes, grid_size=None):
        axes = tuple(float(a) for a in axes)
        return cls(n=len(axes) - 1, kind="ellipse", axes=axes, grid_size=grid_size)

    @classmethod
    def table(cls, values, n=1, grid_size=None):
        values = tuple(float(v) for v in np.ravel(values))
        if grid_size is None and n == 1:
            grid_size = len(values)
        return cls(n=n, kind="table", values=values, grid_size=grid_size)

    # JSON
    def to_dict(self):
        d = {"n": self.n, "kind": self.kind}
        if self.kind == "constant":
            d["c"] = self.c
        elif self.kind == "trig":
            d["a0"] = self.a0
            d["terms"] = [dict(t) for t in self.terms]
        elif self.kind == "ellipse":
            d["axes"] = list(self.axes)
        else:
            d["values"] = list(self.values)
        if self.grid_size is not None:
            d["grid_size"] = self.grid_size
        return d

    @classmethod
    def from_dict(cls, d):
        n = int(d.get("n", 1))
        kind = d["kind"]
        gs = d.get("grid_size")
        if kind == "constant":
            return cls.constant(d["c"], n=n, grid_size=gs)
        if kind == "trig":
            return cls.trig(d.get("a0", 1.0), d.get("terms", ()), n=n, grid_size=gs)
        if kind == "ellipse":
            spec = cls.ellipse(d["axes"], grid_size=gs)
            if spec.n != n and "n" in d:
                raise ValueError("ellipse axes do not match declared n")
            return spec
        if kind == "table":
            return cls.table(d["values"], n=n, grid_size=gs)
        raise ValueError(f"unknown gamma kind {kind!r}")

    @classmethod
    def from_json(cls, path_or_text):
        return cls.from_dict(load_json(path_or_text))

    def default_grid(self):
        return make_grid(self.n, self.grid_size)


# ---------------------------------------------------------------------------
# pointwise evaluators (homogeneous of degree 1 on R^{n+1})
# ---------------------------------------------------------------------------
class _Evaluator:
    n: int

    def value(self, X):
        """gamma extended 1-homogeneously, ``X`` of shape ``(P, n+1)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r = np.linalg.norm(X, axis=1)
        out = np.zeros(len(X))
        nz = r > 0
        out[nz] = r[nz] * self.value_unit(X[nz] / r[nz, None])
        return out

    def grad(self, X):
        """Ambient gradient ``D gamma`` (0-homogeneous), shape ``(P, n+1)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        U = X / np.linalg.norm(X, axis=1)[:, None]
        return self.grad_unit(U)


class _Evaluator1(_Evaluator):
    """Circle evaluators expose derivatives in the polar angle."""

    n = 1

    def value_unit(self, U):
        return self.theta_derivs(np.arctan2(U[:, 1], U[:, 0]), order=0)[0]

    def grad_unit(self, U):
        t = np.arctan2(U[:, 1], U[:, 0])
        g, g1 = self.theta_derivs(t, order=1)
        e = np.stack([np.cos(t), np.sin(t)], axis=1)
        ep = np.stack([-np.sin(t), np.cos(t)], axis=1)
        return g[:, None] * e + g1[:, None] * ep


class _Trig1(_Evaluator1):
    def __init__(self, a0, m, a, b):
        self.a0 = float(a0)
        self.m = np.asarray(m, dtype=float)
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def theta_derivs(self, t, order=2):
        t = np.asarray(t, dtype=float)
        if self.m.size == 0:
            out = [np.full(t.shape, self.a0)] + [np.zeros(t.shape)] * order
            return out
        mt = np.multiply.outer(t, self.m)
        c, s = np.cos(mt), np.sin(mt)
        out = [self.a0 + c @ self.a + s @ self.b]
        if order >= 1:
            out.append(s @ (-self.m * self.a) + c @ (self.m * self.b))
        if order >= 2:
            out.append(-(c @ (self.m**2 * self.a) + s @ (self.m**2 * self.b)))
        return out


class _Ellipse1(_Evaluator1):
    def __init__(self, axes):
        self.a, self.b = (float(v) for v in axes)

    def theta_derivs(self, t, order=2):
        t = np.asarray(t, dtype=float)
        a2, b2 = self.a**2, self.b**2
        q = a2 * np.cos(t) ** 2 + b2 * np.sin(t) ** 2
        g = np.sqrt(q)
        out = [g]
        if order >= 1:
            q1 = (b2 - a2) * np.sin(2 * t)
            out.append(q1 / (2 * g))
        if order >= 2:
            q2 = 2 * (b2 - a2) * np.cos(2 * t)
            out.append(q2 / (2 * g) - q1**2 / (4 * g**3))
        return out


class _Ellipse2(_Evaluator):
    n = 2

    def __init__(self, axes):
        self.a2 = np.asarray(axes, dtype=float) ** 2

    def value_unit(self, U):
        return np.sqrt(U**2 @ self.a2)

    def grad_unit(self, U):
        return U * self.a2 / self.value_unit(U)[:, None]


class _AxisTrig2(_Evaluator):
    n = 2

    def __init__(self, a0, m, a):
        self.a0 = float(a0)
        self.m = np.asarray(m, dtype=float)
        self.a = np.asarray(a, dtype=float)

    def _colat(self, U):
        return np.arccos(np.clip(U[:, 2], -1.0, 1.0))

    def value_unit(self, U):
        th = self._colat(U)
        return self.a0 + np.cos(np.multiply.outer(th, self.m)) @ self.a

    def grad_unit(self, U):
        th = self._colat(U)
        g = self.a0 + np.cos(np.multiply.outer(th, self.m)) @ self.a
        gt = np.sin(np.multiply.outer(th, self.m)) @ (-self.m * self.a)
        rho = np.hypot(U[:, 0], U[:, 1])
        safe = np.where(rho > 0, rho, 1.0)
        e_t = np.stack([U[:, 2] * U[:, 0] / safe, U[:, 2] * U[:, 1] / safe, -rho], axis=1)
        return g[:, None] * U + gt[:, None] * e_t


class _Table2(_Evaluator):
    n = 2

    def __init__(self, grid, values):
        from scipy.interpolate import RectSphereBivariateSpline

        nt, nph = grid.shape
        th = grid.theta.reshape(nt, nph)[:, 0]
        ph = grid.phi.reshape(nt, nph)[0]
        self._spl = RectSphereBivariateSpline(th, ph, np.asarray(values).reshape(nt, nph))

    def _tp(self, U):
        th = np.arccos(np.clip(U[:, 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(U[:, 1], U[:, 0]), 2 * np.pi)
        return th, ph

    def value_unit(self, U):
        th, ph = self._tp(U)
        return self._spl.ev(th, ph)

    def grad_unit(self, U):
        th, ph = self._tp(U)
        g = self._spl.ev(th, ph)
        gt = self._spl.ev(th, ph, dtheta=1)
        gp = self._spl.ev(th, ph, dphi=1)
        st = np.sin(th)
        e_t = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -st], axis=1)
        e_p = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=1)
        return g[:, None] * U + gt[:, None] * e_t + (gp / st)[:, None] * e_p


def _make_evaluator(spec, grid):
    if spec.kind == "constant":
        if spec.n == 1:
            return _Trig1(spec.c, [], [], [])
        return _AxisTrig2(spec.c, [], [])
    if spec.kind == "trig":
        m = [t["m"] for t in spec.terms]
        a = [t["a"] for t in spec.terms]
        if spec.n == 1:
            return _Trig1(spec.a0, m, a, [t["b"] for t in spec.terms])
        return _AxisTrig2(spec.a0, m, a)
    if spec.kind == "ellipse":
        return _Ellipse1(spec.axes) if spec.n == 1 else _Ellipse2(spec.axes)
    values = np.asarray(spec.values, dtype=float)
    if values.size != grid.size:
        raise ValueError(f"table has {values.size} samples, grid has {grid.size} nodes")
    if spec.n == 1:
        # exact trigonometric interpolant of the node samples
        N = values.size
        F = np.fft.rfft(values) / N
        m = np.arange(1, F.size)
        a = 2 * F.real[1:]
        b = -2 * F.imag[1:]
        if N % 2 == 0:
            a[-1] *= 0.5
            b[-1] = 0.0
        return _Trig1(F.real[0], m, a, b)
    return _Table2(grid, values)


# ---------------------------------------------------------------------------
# the field
# ---------------------------------------------------------------------------
class AnisotropyField:
    """``gamma``, its tangential gradient and ``A_gamma`` sampled on a grid.

    Instances are treated as immutable; derived quantities are cached.
    """

    def __init__(self, spec, grid, gamma, grad_gamma, a_gamma, evaluator, q_data=None):
        self.spec = spec
        self.grid = grid
        self.gamma = gamma
        self.grad_gamma = grad_gamma
        self.a_gamma = a_gamma
        self.evaluator = evaluator
        self._q = q_data
        for arr in (gamma, grad_gamma, a_gamma):
            arr.setflags(write=False)

    @property
    def n(self):
        return self.grid.n

    @property
    def q_available(self):
        return self._q is not None

    @property
    def G(self):
        """``G`` at the Wulff points, shape ``(M, n+1, n+1)``."""
        if self._q is None:
            raise QUnavailableError("call materialize_q(field) first")
        return self._q["G"]

    @property
    def Q(self):
        """``Q`` at the Wulff points, shape ``(M, n+1, n+1, n+1)``."""
        if self._q is None:
            raise QUnavailableError("call materialize_q(field) first")
        return self._q["Q"]

    @cached_property
    def wulff_points(self):
        """``phi(z) = gamma(z) z + grad gamma(z)`` at every node."""
        return self.gamma[:, None] * self.grid.dirs + self.grid.tangent_to_ambient(self.grad_gamma)

    @cached_property
    def det_a(self):
        return sym_det(self.a_gamma)

    @cached_property
    def a_eigs(self):
        return sym_eigvalsh(self.a_gamma)

    @cached_property
    def wulff_volume(self):
        return float(self.grid.integrate(self.gamma * self.det_a)) / (self.n + 1)

    @cached_property
    def _wulff_angles(self):
        # n = 1 only: unwrapped polar angle of the Wulff points, increasing
        P = self.wulff_points
        psi = np.unwrap(np.arctan2(P[:, 1], P[:, 0]))
        return psi

    @cached_property
    def wulff_coord_derivs(self):
        """Coordinate derivatives of the Wulff points: ``(d1, d2)`` with shapes
        ``(M, n, n+1)`` and ``(M, n, n, n+1)``."""
        P = self.wulff_points
        d1s, d2s = [], []
        for j in range(self.n + 1):
            d1, d2 = self.grid.coord_derivs(P[:, j])
            d1s.append(d1)
            d2s.append(d2)
        return np.stack(d1s, axis=-1), np.stack(d2s, axis=-1)

    @cached_property
    def sigma_metric(self):
        """Induced metric of ``Sigma`` from ``G``, in sphere coordinates ``(M, n, n)``.

        Uses ``G(phi(x)) = [D^2 (gamma^2 / 2)(x)]^{-1}`` (Legendre duality of
        ``gamma^2/2`` and ``(gamma0)^2/2``), so no derivatives of ``gamma0``
        are needed.
        """
        F = self.grid.frame
        phi = self.wulff_points
        H = phi[:, :, None] * phi[:, None, :] + self.gamma[:, None, None] * np.einsum(
            "mai,mab,mbj->mij", F, self.a_gamma, F
        )
        Ginv = np.linalg.inv(H)
        d1, _ = self.wulff_coord_derivs
        return np.einsum("mai,mij,mbj->mab", d1, Ginv, d1)


def build_anisotropy(spec, grid=None, margin=ADMISSIBILITY_MARGIN):
    """Sample ``gamma`` on ``grid`` and verify positivity and admissibility."""
    if grid is None:
        grid = spec.default_grid()
    if spec.n != grid.n:
        raise ValueError(f"spec dimension {spec.n} does not match grid dimension {grid.n}")
    ev = _make_evaluator(spec, grid)
    if spec.kind == "table":
        gamma = np.array(spec.values, dtype=float)
    else:
        gamma = ev.value_unit(grid.dirs)
    if np.any(gamma <= 0):
        j = int(np.argmin(gamma))
        raise PositivityError(f"gamma <= 0 at node {j} (value {gamma[j]:.6g})")
    grad = grid.grad(gamma)
    A = grid.hess(gamma) + gamma[:, None, None] * np.eye(grid.n)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    lam = sym_eigvalsh(A)[:, 0]
    j = int(np.argmin(lam))
    if lam[j] <= margin:
        raise AdmissibilityError(j, lam[j], margin)
    return AnisotropyField(spec, grid, gamma, grad, A, ev)


def norm_equivalence_constant(field):
    """``C`` with ``|y-x|/C <= d_W(x, y) <= C |y-x|``."""
    g = field.gamma
    return float(max(g.max(), 1.0 / g.min()))


# ---------------------------------------------------------------------------
# dual norm
# ---------------------------------------------------------------------------
def _gamma0_circle(field, Z):
    ev = field.evaluator
    grid = field.grid
    N = grid.size
    dt = 2 * np.pi / N
    psi = field._wulff_angles
    base = psi[0]
    q = np.mod(np.arctan2(Z[:, 1], Z[:, 0]) - base, 2 * np.pi) + base
    ext = np.concatenate([psi, [base + 2 * np.pi]])
    j = np.clip(np.searchsorted(ext, q, side="right") - 1, 0, N - 1)
    lo = grid.theta[j] - dt
    hi = grid.theta[j] + 2 * dt

    def f(t):
        return (Z[:, 0] * np.cos(t) + Z[:, 1] * np.sin(t)) / ev.theta_derivs(t, order=0)[0]

    # golden-section maximisation, vectorised over queries
    c = hi - _GOLDEN * (hi - lo)
    d = lo + _GOLDEN * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(64):
        left = fc >= fd
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        new = np.where(left, hi - _GOLDEN * (hi - lo), lo + _GOLDEN * (hi - lo))
        fnew = f(new)
        c, d = np.where(left, new, d), np.where(left, c, new)
        fc, fd = np.where(left, fnew, fd), np.where(left, fc, fnew)
    t = 0.5 * (lo + hi)
    # Newton polish on the stationarity condition; the bracket is already tight
    for _ in range(3):
        g, g1, g2 = ev.theta_derivs(t, order=2)
        zc = Z[:, 0] * np.cos(t) + Z[:, 1] * np.sin(t)
        zs = -Z[:, 0] * np.sin(t) + Z[:, 1] * np.cos(t)
        num = zs * g - zc * g1
        den = -zc * (g + g2)
        step = np.where(den < 0, num / np.where(den < 0, den, -1.0), 0.0)
        t = np.clip(t - step, lo - dt, hi + dt)
    return f(t), np.stack([np.cos(t), np.sin(t)], axis=1)


def _tangent_basis(X):
    # orthonormal basis of the tangent plane at unit vectors X (P, 3)
    helper = np.where(np.abs(X[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    t1 = np.cross(X, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(X, t1)
    return t1, t2


def _gamma0_sphere(field, Z, chunk=2048):
    ev = field.evaluator
    grid = field.grid
    U = grid.dirs
    inv_g = 1.0 / field.gamma
    X = np.empty_like(Z)
    for s in range(0, len(Z), chunk):
        r = (Z[s : s + chunk] @ U.T) * inv_g
        X[s : s + chunk] = U[np.argmax(r, axis=1)]

    def f(Y):
        Y = Y / np.linalg.norm(Y, axis=1)[:, None]
        return np.einsum("pi,pi->p", Y, Z) / ev.value_unit(Y)

    nt = grid.shape[0]
    max_step = np.pi / nt
    for delta in (1e-2, 1e-3, 1e-4, 1e-5, 1e-5, 1e-5):
        t1, t2 = _tangent_basis(X)
        f0 = f(X)
        fp1, fm1 = f(X + delta * t1), f(X - delta * t1)
        fp2, fm2 = f(X + delta * t2), f(X - delta * t2)
        fpp = f(X + delta * (t1 + t2))
        fmm = f(X - delta * (t1 + t2))
        g1 = (fp1 - fm1) / (2 * delta)
        g2 = (fp2 - fm2) / (2 * delta)
        h11 = (fp1 - 2 * f0 + fm1) / delta**2
        h22 = (fp2 - 2 * f0 + fm2) / delta**2
        h12 = (fpp - fp1 - fp2 + 2 * f0 - fm1 - fm2 + fmm) / (2 * delta**2)
        det = h11 * h22 - h12**2
        ok = (h11 < 0) & (det > 0)
        s1 = np.where(ok, -(h22 * g1 - h12 * g2) / np.where(ok, det, 1.0), g1 * max_step)
        s2 = np.where(ok, -(h11 * g2 - h12 * g1) / np.where(ok, det, 1.0), g2 * max_step)
        norm = np.hypot(s1, s2)
        scale = np.minimum(1.0, max_step / np.maximum(norm, 1e-300))
        Xn = X + (scale * s1)[:, None] * t1 + (scale * s2)[:, None] * t2
        Xn /= np.linalg.norm(Xn, axis=1)[:, None]
        better = f(Xn) >= f0
        X = np.where(better[:, None], Xn, X)
    return f(X), X


def gamma0_argmax(field, z):
    """Dual norm together with the maximizing unit direction.

    The maximizer ``x*`` is the outer normal of ``W`` at ``z / gamma0(z)``;
    ``D gamma0(z) = x* / gamma(x*)``.
    """
    Z = np.atleast_2d(np.asarray(z, dtype=float))
    if field.n == 1:
        val, X = _gamma0_circle(field, Z)
    else:
        val, X = _gamma0_sphere(field, Z)
    zero = ~np.any(Z != 0, axis=1)
    val = np.where(zero, 0.0, val)
    return val, X


def gamma0(field, z):
    """Dual Minkowski norm ``sup_x <x, z> / gamma(x)``; vectorized over rows."""
    z = np.asarray(z, dtype=float)
    val, _ = gamma0_argmax(field, z)
    return float(val[0]) if z.ndim == 1 else val


def d_W(field, x, y):
    """Anisotropic distance ``gamma0(y - x)`` (not symmetric in general)."""
    return gamma0(field, np.asarray(y, dtype=float) - np.asarray(x, dtype=float))


def wulff_point(field, node):
    """Point of ``Sigma = dW`` whose outer normal is grid direction ``node``."""
    return field.wulff_points[node].copy()


@dataclass(frozen=True)
class WulffShapeSummary:
    volume: float
    area_gamma: float
    points: np.ndarray = dc_field(repr=False)

    def to_dict(self, with_points=False):
        d = {"volume": self.volume, "area_gamma": self.area_gamma}
        if with_points:
            d["points"] = self.points.tolist()
        return d


def wulff_summary(field):
    """Volume and anisotropic area of ``W`` by support-function quadrature."""
    area = float(field.grid.integrate(field.gamma * field.det_a))
    return WulffShapeSummary(
        volume=field.wulff_volume, area_gamma=area, points=field.wulff_points.copy()
    )


# ---------------------------------------------------------------------------
# G and Q tensors by finite differences of (gamma0)^2 / 2
# ---------------------------------------------------------------------------
def _fd_weights(offsets, order):
    offsets = np.asarray(offsets, dtype=float)
    k = len(offsets)
    V = np.array([offsets**p / np.prod(np.arange(1, p + 1)) for p in range(k)])
    rhs = np.zeros(k)
    rhs[order] = 1.0
    return np.linalg.solve(V, rhs)


def materialize_q(field, step=0.005):
    """Return a copy of ``field`` carrying ``G`` and ``Q`` at the Wulff points.

    For constant and ellipse anisotropies the gauge is quadratic and both
    tensors are exact.  Otherwise they are finite differences (9-point central stencils per axis,
    at least sixth order) of ``(gamma0)^2 / 2`` in ambient coordinates.
    """
    if field.q_available:
        return field
    d = field.n + 1
    P = field.wulff_points
    if field.spec.kind in ("constant", "ellipse"):
        # quadratic gauge: (gamma0)^2 / 2 = sum z_i^2 / (2 a_i^2), so Q = 0
        axes = np.full(d, field.spec.c) if field.spec.kind == "constant" else np.asarray(field.spec.axes)
        G = np.broadcast_to(np.diag(1.0 / axes**2), (len(P), d, d)).copy()
        return _with_q(field, {"G": G, "Q": np.zeros((len(P), d, d, d))})
    offs = np.arange(-4, 5)
    W = [np.zeros(9)] + [_fd_weights(offs, p) for p in (1, 2, 3)]
    W[0][4] = 1.0
    grids = np.stack(np.meshgrid(*([offs] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = (P[:, None, :] + step * grids[None, :, :]).reshape(-1, d)
    f = 0.5 * gamma0(field, pts) ** 2
    f = f.reshape((len(P),) + (9,) * d)

    def deriv(multi):
        out = f
        for ax in range(d):
            out = np.tensordot(out, W[multi[ax]], axes=([1], [0]))
        return out / step ** sum(multi)

    G = np.empty((len(P), d, d))
    Q = np.empty((len(P), d, d, d))
    for i in range(d):
        for j in range(d):
            m = [0] * d
            m[i] += 1
            m[j] += 1
            G[:, i, j] = deriv(m)
            for k in range(d):
                mk = list(m)
                mk[k] += 1
                Q[:, i, j, k] = deriv(mk)
    return _with_q(field, {"G": G, "Q": Q})


def _with_q(field, q):
    return AnisotropyField(
        field.spec, field.grid, field.gamma.copy(), field.grad_gamma.copy(),
        field.a_gamma.copy(), field.evaluator, q_data=q,
    )
