"""Convex bodies: smooth bodies by support function, polytopes by vertices.

A :class:`SupportBody` stores the isotropic support function ``h`` on a
sphere grid.  Its radii matrix ``r = Hess h + h * Id`` has the principal radii
of curvature as eigenvalues.  A :class:`PolytopeBody` stores vertices; its
support function is evaluated exactly and its parallel volumes
``Vol(P + eps W)`` are computed in closed form from facet, edge and vertex
data, so no smoothing of the polytope is ever needed.
"""

from __future__ import annotations

import json
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

from ._linalg import sym_det, sym_eigvalsh
from ._io import load_json
from .errors import ConvexityError
from .sphere import make_grid

__all__ = [
    "SupportBody",
    "PolytopeBody",
    "ConvexityReport",
    "RadiusResult",
    "radii_matrix",
    "check_convex",
    "volume",
    "aniso_area",
    "anisotropic_support_s",
    "inner_outer_radius",
    "hausdorff_W",
    "distance_to_scaled_wulff",
    "best_wulff_translation",
    "polytope_support",
    "parallel_volume_poly",
    "ellipse_body",
    "scaled_wulff",
    "translate",
    "dilate",
    "add_wulff",
]


# ---------------------------------------------------------------------------
# polytopes
# ---------------------------------------------------------------------------
class PolytopeBody:
    """Convex polytope in R^2 or R^3 given by its vertices.

    Every vertex must be extreme and the interior nonempty.  In 2D vertices
    are reordered counter-clockwise.
    """

    def __init__(self, vertices):
        V = np.asarray(vertices, dtype=float)
        if V.ndim != 2 or V.shape[1] not in (2, 3):
            raise ValueError("vertices must be an array of shape (m, 2) or (m, 3)")
        self.dim = V.shape[1]
        try:
            hull = ConvexHull(V)
        except Exception as exc:  # qhull raises on flat input
            raise ValueError(f"polytope has empty interior: {exc}") from None
        if len(hull.vertices) != len(V):
            raise ValueError("vertex list is not in convex position")
        if self.dim == 2:
            V = V[hull.vertices]  # qhull returns 2D hull vertices counter-clockwise
            hull = ConvexHull(V)
        self.vertices = V
        self._hull = hull
        if self.dim == 2:
            nxt = np.roll(V, -1, axis=0)
            d = nxt - V
            self.edge_lengths = np.linalg.norm(d, axis=1)
            self.edge_dirs = d / self.edge_lengths[:, None]
            self.normals = np.stack([self.edge_dirs[:, 1], -self.edge_dirs[:, 0]], axis=1)
            self.offsets = np.einsum("ij,ij->i", self.normals, V)
            self.facet_sizes = self.edge_lengths
        else:
            self._facets_3d(hull)

    def _facets_3d(self, hull):
        eq = hull.equations
        # merge coplanar triangles into facets
        keys = np.round(eq, 10)
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = np.ravel(inv)
        self.normals = uniq[:, :3] / np.linalg.norm(uniq[:, :3], axis=1)[:, None]
        self.offsets = -uniq[:, 3] / np.linalg.norm(uniq[:, :3], axis=1)
        P = hull.points
        areas = np.zeros(len(uniq))
        for simplex, f in zip(hull.simplices, inv):
            a, b, c = P[simplex]
            areas[f] += 0.5 * np.linalg.norm(np.cross(b - a, c - a))
        self.facet_sizes = areas
        # edges between distinct facets: (length, normal_1, normal_2)
        edge_facets = {}
        for simplex, f in zip(hull.simplices, inv):
            for i in range(3):
                e = tuple(sorted((simplex[i], simplex[(i + 1) % 3])))
                edge_facets.setdefault(e, set()).add(int(f))
        edges = []
        for (i, j), fs in edge_facets.items():
            if len(fs) == 2:
                f1, f2 = sorted(fs)
                edges.append((i, j, f1, f2))
        self.edges = edges

    def support(self, Z):
        """Exact support function ``max_v <v, z>`` at rows of ``Z``."""
        return np.max(np.atleast_2d(Z) @ self.vertices.T, axis=1)

    @property
    def volume(self):
        return float(self._hull.volume)

    def contains(self, X, tol=0.0):
        X = np.atleast_2d(X)
        return np.all(X @ self.normals.T - self.offsets <= tol, axis=1)

    @property
    def shortest_edge(self):
        if self.dim == 2:
            return float(self.edge_lengths.min())
        return float(min(np.linalg.norm(self.vertices[i] - self.vertices[j]) for i, j, _, _ in self.edges))

    def to_dict(self):
        return {"dim": self.dim, "vertices": self.vertices.tolist()}

    @classmethod
    def from_dict(cls, d):
        P = cls(d["vertices"])
        if "dim" in d and int(d["dim"]) != P.dim:
            raise ValueError("declared dim does not match vertex coordinates")
        return P

    @classmethod
    def regular_polygon(cls, m, radius=1.0, center=(0.0, 0.0), phase=0.0):
        t = phase + 2 * np.pi * np.arange(m) / m
        return cls(np.stack([np.cos(t), np.sin(t)], axis=1) * radius + np.asarray(center))

    @classmethod
    def unit_square(cls):
        return cls([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def _wedge_area(field, u1, u2, e_axis, nodes=48):
    # area of the sector of the projection of W onto e_axis^perp between the
    # support directions u1 and u2 (unit, both orthogonal to e_axis)
    b = np.cross(e_axis, u1)
    ang = np.arctan2(np.dot(u2, b), np.dot(u2, u1))
    if ang < 0:
        b, ang = -b, -ang
    x, w = np.polynomial.legendre.leggauss(nodes)
    t = 0.5 * ang * (x + 1.0)
    hstep = 1e-3

    def g(s):
        U = np.cos(s)[:, None] * u1 + np.sin(s)[:, None] * b
        return field.evaluator.value(U)

    g0 = g(t)
    g2 = (-g(t + 2 * hstep) + 16 * g(t + hstep) - 30 * g0 + 16 * g(t - hstep) - g(t - 2 * hstep)) / (12 * hstep**2)
    return 0.25 * ang * float(np.dot(w, g0 * (g2 + g0)))


def parallel_volume_poly(poly, field):
    """Coefficients ``c`` with ``Vol(P + t W) = sum_j c[j] t**j`` (exact for 2D).

    2D: ``Vol(P) + t sum_e L_e gamma(nu_e) + t^2 Vol(W)``.  3D adds the edge
    term ``t^2 sum_e length_e * wedge_e`` where ``wedge_e`` is the sector area
    of the projected Wulff shape across the dihedral normal arc; the arc
    integral uses Gauss-Legendre quadrature.
    """
    g_f = field.evaluator.value(poly.normals)
    c = [poly.volume, float(np.dot(poly.facet_sizes, g_f))]
    if poly.dim == 2:
        c.append(field.wulff_volume)
    else:
        c2 = 0.0
        for i, j, f1, f2 in poly.edges:
            ev = poly.vertices[j] - poly.vertices[i]
            length = np.linalg.norm(ev)
            c2 += length * _wedge_area(field, poly.normals[f1], poly.normals[f2], ev / length)
        c.extend([c2, field.wulff_volume])
    return np.array(c)


# ---------------------------------------------------------------------------
# smooth bodies
# ---------------------------------------------------------------------------
class SupportBody:
    """Convex body encoded by its isotropic support function on a grid.

    ``offset`` is bookkeeping for translations applied through :func:`translate`.
    When the body came from :func:`polytope_support`, ``polytope`` holds the
    polytope and ``wulff_eps`` the amount of ``W`` Minkowski-added to it (with
    ``wulff_field`` the corresponding anisotropy); volumes then use the exact
    polytope formulas instead of grid quadrature.
    """

    def __init__(self, grid, h, offset=None, polytope=None, wulff_eps=0.0, wulff_field=None):
        h = np.asarray(h, dtype=float)
        if h.shape != (grid.size,):
            raise ValueError(f"h has shape {h.shape}, expected ({grid.size},)")
        self.grid = grid
        self.h = h
        self.offset = np.zeros(grid.n + 1) if offset is None else np.asarray(offset, dtype=float)
        self.polytope = polytope
        self.wulff_eps = float(wulff_eps)
        self.wulff_field = wulff_field

    @property
    def n(self):
        return self.grid.n

    @property
    def is_polytopal(self):
        return self.polytope is not None

    def with_h(self, h, offset=None):
        return SupportBody(self.grid, h, self.offset if offset is None else offset)

    def to_dict(self):
        return {
            "n": self.n,
            "grid_size": self.grid.grid_size,
            "h": self.h.tolist(),
            "offset": self.offset.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        grid = make_grid(int(d["n"]), d.get("grid_size"))
        return cls(grid, d["h"], d.get("offset"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, path_or_text):
        return cls.from_dict(load_json(path_or_text))


def ellipse_body(grid, axes, center=None):
    """Support function of the ellipse/ellipsoid with the given semi-axes."""
    a = np.asarray(axes, dtype=float)
    h = np.sqrt(grid.dirs**2 @ a**2)
    body = SupportBody(grid, h)
    return translate(body, center) if center is not None else body


def scaled_wulff(field, rho=1.0, center=None):
    body = SupportBody(field.grid, rho * np.asarray(field.gamma))
    return translate(body, center) if center is not None else body


def translate(body, v):
    v = np.asarray(v, dtype=float)
    h = body.h + body.grid.linear_field(v)
    if body.is_polytopal:
        poly = PolytopeBody(body.polytope.vertices + v)
        return SupportBody(body.grid, h, body.offset + v, poly, body.wulff_eps, body.wulff_field)
    return SupportBody(body.grid, h, body.offset + v)


def dilate(body, rho, center=None):
    """Homothety ``center + rho (K - center)``."""
    c = np.zeros(body.n + 1) if center is None else np.asarray(center, dtype=float)
    lin = body.grid.linear_field(c)
    h = rho * (body.h - lin) + lin
    if body.is_polytopal:
        poly = PolytopeBody(c + rho * (body.polytope.vertices - c))
        return SupportBody(body.grid, h, body.offset, poly, rho * body.wulff_eps, body.wulff_field)
    return SupportBody(body.grid, h, body.offset)


def add_wulff(body, field, eps):
    """Minkowski sum ``K + eps W`` (support addition ``h + eps gamma``)."""
    h = body.h + eps * np.asarray(field.gamma)
    if body.is_polytopal:
        if body.wulff_field is not None and body.wulff_field is not field and body.wulff_eps:
            raise ValueError("cannot mix Wulff shapes of different anisotropies")
        return SupportBody(body.grid, h, body.offset, body.polytope, body.wulff_eps + eps, field)
    return SupportBody(body.grid, h, body.offset)


def polytope_support(poly, grid):
    """Sample the exact support function of ``poly`` on ``grid``."""
    if poly.dim != grid.n + 1:
        raise ValueError("polytope dimension does not match grid")
    return SupportBody(grid, poly.support(grid.dirs), polytope=poly)


def radii_matrix(body):
    """Per-node radii matrix ``Hess h + h Id`` in the orthonormal frame, ``(M, n, n)``."""
    R = body.grid.hess(body.h) + body.h[:, None, None] * np.eye(body.n)
    return 0.5 * (R + np.swapaxes(R, 1, 2))


class ConvexityReport(NamedTuple):
    ok: bool
    node: int
    eigenvalue: float

    def __bool__(self):
        return self.ok


def check_convex(body, margin=0.0):
    """True iff the smallest radii eigenvalue is ``>= margin`` at every node."""
    lam = sym_eigvalsh(radii_matrix(body))[:, 0]
    j = int(np.argmin(lam))
    return ConvexityReport(bool(lam[j] >= margin), j, float(lam[j]))


def _require_convex(body, R=None):
    R = radii_matrix(body) if R is None else R
    lam = sym_eigvalsh(R)[:, 0]
    j = int(np.argmin(lam))
    if not lam[j] > 0:
        raise ConvexityError(j, lam[j])
    return R


def _poly_coeffs(body, field=None):
    fld = body.wulff_field if body.wulff_field is not None else field
    if fld is None:
        if body.wulff_eps:
            raise ValueError("polytopal body with Wulff part needs its anisotropy")
        c = np.array([body.polytope.volume])
        return c
    return parallel_volume_poly(body.polytope, fld)


def volume(body):
    """Enclosed volume, ``(1/(n+1)) int h det(r) dsigma`` for smooth bodies."""
    if body.is_polytopal:
        c = _poly_coeffs(body)
        return float(np.polyval(c[::-1], body.wulff_eps))
    R = _require_convex(body)
    return float(body.grid.integrate(body.h * sym_det(R))) / (body.n + 1)


def aniso_area(body, field):
    """Anisotropic area ``int gamma(nu) dmu = V_n(K, W)``."""
    if body.is_polytopal:
        if body.wulff_eps and body.wulff_field is not field:
            raise ValueError("anisotropic area needs the same anisotropy as the Wulff part")
        c = parallel_volume_poly(body.polytope, field)
        dc = np.arange(1, len(c)) * c[1:]
        return float(np.polyval(dc[::-1], body.wulff_eps))
    R = _require_convex(body)
    return float(body.grid.integrate(np.asarray(field.gamma) * sym_det(R)))


def anisotropic_support_s(body, field):
    """Anisotropic support function ``s = h / gamma`` as a node field."""
    return body.h / np.asarray(field.gamma)


class RadiusResult(NamedTuple):
    r: float
    R: float
    inner_center: np.ndarray
    outer_center: np.ndarray


def _samples(body, field):
    if isinstance(body, PolytopeBody):
        return body.support(field.grid.dirs), body
    return body.h, body.polytope


def inner_outer_radius(body, field):
    """Anisotropic inner and outer radii relative to ``W``, with centres.

    Both are linear programs in ``(p, rho)`` over the support samples:
    ``rho gamma + <p, z> <= h`` (inner, maximize ``rho``) and
    ``h - <p, z> <= rho gamma`` (outer, minimize ``rho``).  For polytopes the
    inner constraints are taken exactly at the facet normals.
    """
    h, poly = _samples(body, field)
    Z = field.grid.dirs
    g = np.asarray(field.gamma)
    d = Z.shape[1]
    cost = np.zeros(d + 1)
    cost[-1] = -1.0
    bounds = [(None, None)] * d + [(0, None)]
    if poly is not None:
        gi = field.evaluator.value(poly.normals)
        A_in = np.hstack([poly.normals, gi[:, None]])
        b_in = poly.offsets
    else:
        A_in = np.hstack([Z, g[:, None]])
        b_in = h
    res_in = linprog(cost, A_ub=A_in, b_ub=b_in, bounds=bounds, method="highs")
    cost[-1] = 1.0
    res_out = linprog(cost, A_ub=np.hstack([-Z, -g[:, None]]), b_ub=-h, bounds=bounds, method="highs")
    if not (res_in.success and res_out.success):
        raise RuntimeError("radius linear program failed")
    return RadiusResult(
        float(res_in.x[-1]), float(res_out.x[-1]), res_in.x[:d].copy(), res_out.x[:d].copy()
    )


def hausdorff_W(a, b, field):
    """``W``-Hausdorff distance ``max |h_a - h_b| / gamma`` (support characterization)."""
    return float(np.max(np.abs(a.h - b.h) / np.asarray(field.gamma)))


def best_wulff_translation(body, field, rho):
    """Minimize ``max |h - rho gamma - <p, z>| / gamma`` over translations ``p``.

    Returns ``(distance, p)``.  Solved exactly on the grid as a linear program.
    """
    Z = field.grid.dirs
    g = np.asarray(field.gamma)
    d = Z.shape[1]
    r = body.h - rho * g
    cost = np.zeros(d + 1)
    cost[-1] = 1.0
    A = np.vstack([np.hstack([-Z, -g[:, None]]), np.hstack([Z, -g[:, None]])])
    b = np.concatenate([-r, r])
    res = linprog(cost, A_ub=A, b_ub=b, bounds=[(None, None)] * d + [(0, None)], method="highs")
    if not res.success:
        raise RuntimeError("translation linear program failed")
    p = res.x[:d]
    dist = float(np.max(np.abs(r - Z @ p) / g))
    return dist, p.copy()


def distance_to_scaled_wulff(body, field, rho):
    """Translation-minimized ``W``-Hausdorff distance from ``body`` to ``rho W + p``."""
    return best_wulff_translation(body, field, rho)[0]
