"""Random bodies, the verification suite and plot-data export."""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from scipy.special import sph_harm_y

from ._linalg import sym_eigvalsh
from .anisotropy import GammaSpec, build_anisotropy
from .bodies import (
    PolytopeBody,
    SupportBody,
    aniso_area,
    ellipse_body,
    inner_outer_radius,
    polytope_support,
    radii_matrix,
    scaled_wulff,
    translate,
    volume,
)
from .curvature import (
    aniso_curvatures,
    af_slacks,
    factorization_error,
    heintze_karcher_slack,
    iso_ratio,
    maclaurin_slack,
    minkowski_residual,
    mixed_volumes,
)
from .errors import MissingRunError
from .flow import CSV_HEADER, read_csv
from .measures import steiner_fit_global, worker_count
from .sphere import make_grid

__all__ = [
    "RandomBodySpec",
    "random_convex_body",
    "CheckEntry",
    "VerificationReport",
    "verify_suite",
    "body_checks",
    "standard_gamma",
    "export_plot_data",
]


# ---------------------------------------------------------------------------
# random bodies
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class RandomBodySpec:
    seed: int = 0
    n: int = 1
    modes: int = 6
    decay: float = 2.0
    margin: float = 0.1

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError("n must be 1 or 2")
        if self.modes < 0:
            raise ValueError("modes must be nonnegative")
        if not 0 <= self.margin < 1:
            raise ValueError("margin must lie in [0, 1)")


def _mode_field(spec, grid, rng):
    p = np.zeros(grid.size)
    if spec.n == 1:
        for m in range(1, spec.modes + 1):
            a, b = rng.standard_normal(2) * m ** (-spec.decay)
            p += a * np.cos(m * grid.theta) + b * np.sin(m * grid.theta)
        return p
    for ell in range(1, spec.modes + 1):
        c = rng.standard_normal(2 * ell + 1) * ell ** (-spec.decay)
        Y0 = sph_harm_y(ell, 0, grid.theta, grid.phi)
        p += c[0] * Y0.real
        # real harmonics: sqrt(2) Re / Im of the complex ones for m > 0
        for m in range(1, ell + 1):
            Y = sph_harm_y(ell, m, grid.theta, grid.phi)
            p += np.sqrt(2.0) * (c[2 * m - 1] * Y.real + c[2 * m] * Y.imag)
    return p


def random_convex_body(spec, grid):
    """``h = 1 + s * sum_m c_m mode_m`` with the largest ``s <= 1`` keeping ``min eig(r) >= margin``.

    The radii matrix is affine in ``s`` and its smallest eigenvalue concave, so
    the admissible ``s`` form an interval found by bisection.
    """
    if spec.n != grid.n:
        raise ValueError("spec dimension does not match grid")
    rng = np.random.default_rng(spec.seed)
    p = _mode_field(spec, grid, rng)
    one = np.ones(grid.size)

    def ok(s):
        R = radii_matrix(SupportBody(grid, one + s * p))
        return float(np.min(sym_eigvalsh(R)[:, 0])) >= spec.margin

    if ok(1.0):
        s = 1.0
    else:
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if ok(mid) else (lo, mid)
        s = lo
    return SupportBody(grid, one + s * p)


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------
def standard_gamma(name, n=1, grid=None):
    """Named anisotropies used by the suite: ``iso`` and ``trig`` (``1 + 0.05 cos 3 theta``)."""
    if name == "iso":
        spec = GammaSpec.constant(1.0, n=n)
    elif name == "trig":
        spec = GammaSpec.trig(1.0, [{"m": 3, "a": 0.05, "b": 0.0}], n=n)
    elif name == "ellipse":
        spec = GammaSpec.ellipse((1.2, 1.0) if n == 1 else (1.2, 1.0, 0.9))
    else:
        raise ValueError(f"unknown anisotropy name {name!r}")
    return build_anisotropy(spec, grid)


@dataclass
class CheckEntry:
    """One aggregated check.  Passing means ``worst >= -tol``.

    For two-sided checks (residuals, equality cases) ``worst`` is ``-|value|``.
    """

    name: str
    status: str
    worst: float
    tol: float
    runtime: float | None = None
    bodies: int = 0
    snapshot: dict | None = None

    def to_dict(self, timings=False):
        d = {"name": self.name, "status": self.status, "worst": self.worst, "tol": self.tol, "bodies": self.bodies}
        if timings:
            d["runtime"] = self.runtime
        if self.snapshot is not None:
            d["snapshot"] = self.snapshot
        return d


@dataclass
class VerificationReport:
    seed: int
    count: int
    checks: list = dc_field(default_factory=list)

    @property
    def passed(self):
        return all(c.status == "pass" for c in self.checks)

    def to_dict(self, timings=False):
        return {
            "seed": self.seed,
            "count": self.count,
            "passed": self.passed,
            "checks": [c.to_dict(timings) for c in self.checks],
        }

    def to_json(self, timings=False):
        return json.dumps(self.to_dict(timings), indent=2)

    def lines(self):
        return [f"{c.status.upper():4s} {c.name}: worst={c.worst:.3e} tol={c.tol:.1e}" for c in self.checks]


def body_checks(body, field, equality=False):
    """Slack values for every per-body invariant, as ``{name: (slack, tol)}``.

    ``equality=True`` marks a scaled translate of ``W``; then the
    Heintze-Karcher and Alexandrov-Fenchel slacks must also vanish.
    """
    n = body.n
    out = {}
    curv = aniso_curvatures(body, field)
    mv = mixed_volumes(body, field, curv)
    af = min(s for _, s in af_slacks(body, field, mv))
    out["af_slack"] = (af, 1e-8)
    hk = heintze_karcher_slack(body, field, curv)
    out["hk_slack"] = (hk, 1e-8)
    if equality:
        out["af_equality"] = (-abs(af), 1e-8)
        out["hk_equality"] = (-abs(hk), 1e-8)
    area = aniso_area(body, field)
    mres = max(abs(minkowski_residual(body, field, r, curv)) for r in range(1, n + 1))
    out["minkowski_residual"] = (-mres / area, 1e-6)
    vol = volume(body)
    rad = inner_outer_radius(body, field)
    lower = vol / area
    upper = area**n / ((n + 1) ** (n - 1) * field.wulff_volume * vol ** (n - 1))
    out["radius_bounds"] = (min(rad.r - lower, rad.R - rad.r, upper - rad.R), 1e-8)
    out["factorization"] = (-factorization_error(body, field, curv), 1e-10)
    out["maclaurin"] = (maclaurin_slack(curv), 1e-12)
    out["iso_ratio"] = (min(iso_ratio(body, field, ell, mv) for ell in range(1, n + 1)) - 1.0, 1e-8)
    mvs, _ = steiner_fit_global(body, field)
    rel = max(abs(a - b) / abs(b) for a, b in zip(mvs.V, mv.V))
    out["steiner_vs_quadrature"] = (-rel, 1e-6)
    return out


def _fixtures(field):
    grid = field.grid
    n = grid.n
    axes = (2.0, 1.0) if n == 1 else (2.0, 1.0, 1.5)
    return [
        ("wulff", scaled_wulff(field, 1.0), True),
        ("scaled_wulff", translate(scaled_wulff(field, 2.0), np.linspace(0.3, -0.2, n + 1)), True),
        ("ellipse", ellipse_body(grid, axes), False),
    ]


def _square_checks(field):
    n = field.n
    if n == 1:
        poly = PolytopeBody.unit_square()
    else:
        poly = PolytopeBody([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)])
    mv, fit = steiner_fit_global(poly, field)
    exact = mixed_volumes(polytope_support(poly, field.grid), field)
    rel = max(abs(a - b) / abs(b) for a, b in zip(mv.V, exact.V))
    return {"polytope_steiner_residual": (-fit.residual, 1e-9), "polytope_steiner_exact": (-rel, 1e-9)}


def verify_suite(seed=0, count=100, gammas=("iso", "trig"), n=1, grid_size=None, spec_kwargs=None, workers=None):
    """Run every per-body invariant on fixtures plus ``count`` random bodies.

    Checks are aggregated per ``(anisotropy, name)`` in a fixed order; the
    worst body's support function is attached to failing checks.
    """
    report = VerificationReport(seed, count)
    workers = worker_count() if workers is None else workers
    spec_kwargs = dict(spec_kwargs or {})
    for gname in gammas:
        grid = make_grid(n, grid_size)
        field = gname if not isinstance(gname, str) else standard_gamma(gname, n, grid)
        label = gname if isinstance(gname, str) else field.spec.kind
        cases = [(name, b, eq) for name, b, eq in _fixtures(field)]
        seeds = np.random.SeedSequence(seed).generate_state(max(count, 1))[:count]
        for i, s in enumerate(seeds):
            spec = RandomBodySpec(seed=int(s), n=n, **spec_kwargs)
            cases.append((f"random_{i}", random_convex_body(spec, grid), False))

        def run(case):
            t0 = time.perf_counter()
            res = body_checks(case[1], field, equality=case[2])
            return res, time.perf_counter() - t0

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(run, cases))
        else:
            results = [run(c) for c in cases]

        agg = {}
        for (name, body, _), (res, dt) in zip(cases, results):
            for key, (slack, tol) in res.items():
                e = agg.setdefault(key, {"worst": np.inf, "tol": tol, "body": None, "time": 0.0, "count": 0})
                e["time"] += dt / len(res)
                e["count"] += 1
                if slack < e["worst"]:
                    e["worst"], e["body"] = slack, (name, body)
        t0 = time.perf_counter()
        sq = _square_checks(field) if label in ("iso", "constant") else {}
        sq_time = time.perf_counter() - t0
        for key, (slack, tol) in sq.items():
            agg[key] = {"worst": slack, "tol": tol, "body": None, "time": sq_time / len(sq), "count": 1}
        for key, e in agg.items():
            ok = e["worst"] >= -e["tol"]
            snap = None
            if not ok and e["body"] is not None:
                snap = {"name": e["body"][0], **e["body"][1].to_dict()}
            report.checks.append(
                CheckEntry(
                    name=f"{label}/{key}",
                    status="pass" if ok else "fail",
                    worst=float(e["worst"]),
                    tol=float(e["tol"]),
                    runtime=float(e["time"]),
                    bodies=e["count"],
                    snapshot=snap,
                )
            )
    return report


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------
def export_plot_data(prefix, out_dir=None):
    """Write tidy CSV series for a finished run.

    Produces ``<stem>_series.csv`` (columns ``t, quantity, value``) and
    ``<stem>_logdefect.csv`` (``t, log_I_minus_1``).  Returns a dict with the
    paths, the row count and ``logdefect_empty`` (stationary runs).
    """
    src = Path(f"{prefix}.csv")
    if not src.exists():
        raise MissingRunError(f"no run output at {src}")
    records = read_csv(src)
    out_dir = src.parent if out_dir is None else Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(str(prefix)).name
    series = out_dir / f"{stem}_series.csv"
    defect = out_dir / f"{stem}_logdefect.csv"
    with open(series, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "quantity", "value"])
        for r in records:
            for q in CSV_HEADER[1:]:
                w.writerow([repr(r.t), q, repr(float(getattr(r, q)))])
    rows = [(r.t, np.log(r.I - 1.0)) for r in records if r.I - 1.0 > 1e-12]
    with open(defect, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "log_I_minus_1"])
        for t, v in rows:
            w.writerow([repr(t), repr(float(v))])
    return {
        "series": str(series),
        "logdefect": str(defect),
        "records": len(records),
        "logdefect_rows": len(rows),
        "logdefect_empty": not rows,
    }
