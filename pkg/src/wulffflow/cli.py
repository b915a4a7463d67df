"""Command-line interface: ``wulffflow {wulff,measure,evolve,verify,export}``.

Settings resolve as command-line flag, then the ``[<subcommand>]`` table of the
TOML file given by ``--config``, then the built-in default.  The exit code is
0 only when every check the subcommand performs passes.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np
import tomli

from ._io import load_json
from .anisotropy import GammaSpec, build_anisotropy, gamma0, wulff_summary
from .bodies import PolytopeBody, SupportBody, ellipse_body, scaled_wulff
from .curvature import (
    aniso_curvatures,
    af_slacks,
    heintze_karcher_slack,
    iso_ratio,
    minkowski_residual,
    mixed_volumes,
)
from .errors import WulffFlowError
from .flow import FlowConfig, evolve, monitor_checks, rate_fit
from .harness import export_plot_data, standard_gamma, verify_suite
from .measures import RegionSpec, default_eps_grid, steiner_fit_local
from .sphere import make_grid

__all__ = ["main", "build_parser", "load_gamma", "load_body"]

FLOW_GRID = {1: 128, 2: (24, 48)}

DEFAULTS = {
    "wulff": {"grid_size": None, "points": False},
    "measure": {
        "grid_size": None,
        "local": False,
        "region": '{"kind": "all"}',
        "eps_grid": None,
        "samples": 1_000_000,
        "seed": 0,
    },
    "evolve": {
        "grid_size": None,
        "k": 1,
        "alpha": 1.0,
        "tol": 1e-3,
        "tmax": 50.0,
        "max_steps": 1_000_000,
        "safety": 0.5,
        "stride": 25,
        "renormalize": False,
        "out_prefix": "run",
    },
    "verify": {"seed": 0, "count": 100, "gamma": "iso,trig", "n": 1, "grid_size": None, "json": False, "timings": False},
    "export": {"prefix": None, "out_dir": None},
}


def _json_or_path(text):
    return load_json(text)


def _grid_size_arg(text):
    parts = [int(v) for v in str(text).replace("x", ",").split(",") if v]
    return parts[0] if len(parts) == 1 else parts


def load_gamma(source, grid_size=None):
    """Anisotropy from a JSON file/string, or one of the names ``iso``, ``trig``."""
    if source in ("iso", "trig", "ellipse"):
        n = 1
        grid = make_grid(n, grid_size)
        return standard_gamma(source, n, grid)
    spec = GammaSpec.from_dict(_json_or_path(source))
    size = grid_size if grid_size is not None else spec.grid_size
    return build_anisotropy(spec, make_grid(spec.n, size))


def load_body(source, field):
    """Body from JSON: ``{"h": [...]}``, ``{"vertices": [...]}``, or
    ``{"kind": "ellipse", "axes": [...], "center": [...]}`` /
    ``{"kind": "wulff", "rho": r}``.  Returns a SupportBody or PolytopeBody."""
    d = _json_or_path(source) if isinstance(source, str) else source
    if "body" in d and isinstance(d["body"], dict):
        d = d["body"]  # flow snapshot
    if "vertices" in d:
        return PolytopeBody.from_dict(d)
    if "h" in d:
        if len(d["h"]) != field.grid.size:
            raise ValueError(f"support samples have length {len(d['h'])}, grid has {field.grid.size} nodes")
        return SupportBody(field.grid, d["h"], d.get("offset"))
    kind = d.get("kind")
    if kind == "ellipse":
        return ellipse_body(field.grid, d["axes"], d.get("center"))
    if kind == "wulff":
        return scaled_wulff(field, float(d.get("rho", 1.0)), d.get("center"))
    raise ValueError("body JSON needs 'h', 'vertices', or a 'kind' of ellipse/wulff")


def _resolve(args, command, config):
    table = config.get(command, {})
    out = {}
    for key, default in DEFAULTS[command].items():
        v = getattr(args, key, None)
        if v is None:
            v = table.get(key, default)
        out[key] = v
    return out


def _dump(obj):
    print(json.dumps(obj, indent=2))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------
def cmd_wulff(args, opts):
    field = load_gamma(args.gamma, opts["grid_size"])
    summ = wulff_summary(field)
    n = field.n
    W = scaled_wulff(field, 1.0)
    kappa = aniso_curvatures(W, field).kappa
    duality = float(np.max(np.abs(gamma0(field, field.wulff_points) - 1.0)))
    identity = abs(summ.area_gamma - (n + 1) * summ.volume) / summ.area_gamma
    curv_gap = float(np.max(np.abs(kappa - 1.0)))
    checks = {"area_identity": identity <= 1e-8, "duality": duality <= 1e-6, "unit_curvature": curv_gap <= 1e-8}
    out = summ.to_dict(with_points=bool(opts["points"]))
    out.update({"n": n, "area_identity_gap": identity, "duality_gap": duality, "curvature_gap": curv_gap, "checks": checks})
    _dump(out)
    return 0 if all(checks.values()) else 1


def cmd_measure(args, opts):
    field = load_gamma(args.gamma, opts["grid_size"])
    body = load_body(args.body, field)
    if opts["local"]:
        if not isinstance(body, PolytopeBody):
            raise ValueError("--local needs a polytope body ({'vertices': ...})")
        region = RegionSpec.from_dict(_json_or_path(opts["region"]) if isinstance(opts["region"], str) else opts["region"])
        eps = opts["eps_grid"]
        if isinstance(eps, str):
            eps = [float(v) for v in eps.split(",")]
        eps = default_eps_grid(body) if eps is None else np.asarray(eps, dtype=float)
        fit = steiner_fit_local(body, field, region, eps, int(opts["samples"]), int(opts["seed"]))
        out = {
            "region": region.to_dict(),
            "coefficients": fit.phi.tolist(),
            "stderr": fit.stderr.tolist(),
            "residual": fit.residual,
            "eps": fit.eps.tolist(),
            "volumes": fit.volumes.tolist(),
            "volume_stderr": fit.errors.tolist(),
        }
        _dump(out)
        ok = bool(np.all(np.isfinite(fit.phi)) and fit.phi[0] >= -3 * fit.stderr[0] and fit.phi[-1] >= -3 * fit.stderr[-1])
        return 0 if ok else 1
    if isinstance(body, PolytopeBody):
        from .bodies import polytope_support

        support = polytope_support(body, field.grid)
        mv = mixed_volumes(support, field)
        n = support.n
        out = {"V": mv.to_list(), "I": [iso_ratio(support, field, ell, mv) for ell in range(1, n + 1)]}
        out["af_min_slack"] = min(s for _, s in af_slacks(support, field, mv))
        _dump(out)
        return 0 if out["af_min_slack"] >= -1e-8 else 1
    n = body.n
    curv = aniso_curvatures(body, field)
    mv = mixed_volumes(body, field, curv)
    out = {
        "V": mv.to_list(),
        "I": [iso_ratio(body, field, ell, mv) for ell in range(1, n + 1)],
        "hk_slack": heintze_karcher_slack(body, field, curv),
        "af_min_slack": min(s for _, s in af_slacks(body, field, mv)),
        "minkowski_residuals": [minkowski_residual(body, field, r, curv) for r in range(1, n + 1)],
    }
    _dump(out)
    area = mv[n]
    ok = (
        out["hk_slack"] >= -1e-8
        and out["af_min_slack"] >= -1e-8
        and all(abs(r) <= 1e-6 * area for r in out["minkowski_residuals"])
    )
    return 0 if ok else 1


def cmd_evolve(args, opts):
    spec = GammaSpec.from_dict(_json_or_path(args.gamma)) if args.gamma not in ("iso", "trig") else None
    if spec is None:
        n = 1
        size = opts["grid_size"] or FLOW_GRID[n]
        field = standard_gamma(args.gamma, n, make_grid(n, size))
    else:
        size = opts["grid_size"] or spec.grid_size or FLOW_GRID[spec.n]
        field = build_anisotropy(spec, make_grid(spec.n, size))
    body = load_body(args.initial, field)
    if isinstance(body, PolytopeBody):
        raise ValueError("the flow needs a smooth strictly convex initial body")
    config = FlowConfig(
        n=field.n,
        k=int(opts["k"]),
        alpha=float(opts["alpha"]),
        grid_size=field.grid.grid_size,
        safety=float(opts["safety"]),
        max_steps=int(opts["max_steps"]),
        tmax=float(opts["tmax"]),
        tol=float(opts["tol"]),
        renormalize=bool(opts["renormalize"]),
        stride=int(opts["stride"]),
    )
    state, records = evolve(body, config, field, out_prefix=opts["out_prefix"])
    checks = monitor_checks(records, field, config)
    out = {
        "converged": records.converged,
        "t": state.t,
        "steps": records.steps,
        "records": len(records),
        "final": {k: getattr(records[-1], k) for k in ("vol", "I", "dhaus", "phi")},
        "checks": [c.to_dict() for c in checks],
        "csv": f"{opts['out_prefix']}.csv",
    }
    try:
        lam, r2 = rate_fit(records)
        out["rate"] = {"lambda": lam, "r2": r2}
    except WulffFlowError as exc:
        out["rate"] = {"error": str(exc)}
    _dump(out)
    return 0 if records.converged and all(c.passed for c in checks) else 1


def cmd_verify(args, opts):
    gammas = opts["gamma"]
    if isinstance(gammas, str):
        gammas = [g.strip() for g in gammas.split(",") if g.strip()]
    named = []
    for g in gammas:
        if g in ("iso", "trig", "ellipse"):
            named.append(g)
        else:
            named.append(load_gamma(g, opts["grid_size"]))
    n = int(opts["n"])
    t0 = time.perf_counter()
    report = verify_suite(int(opts["seed"]), int(opts["count"]), tuple(named), n=n, grid_size=opts["grid_size"])
    if opts["json"]:
        d = report.to_dict(timings=bool(opts["timings"]))
        if opts["timings"]:
            d["total_runtime"] = time.perf_counter() - t0
        print(json.dumps(d, indent=2))
    else:
        print("\n".join(report.lines()))
    return 0 if report.passed else 1


def cmd_export(args, opts):
    if not opts["prefix"]:
        raise ValueError("--prefix is required")
    out = export_plot_data(opts["prefix"], opts["out_dir"])
    _dump(out)
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------
def build_parser():
    p = argparse.ArgumentParser(prog="wulffflow", description="Anisotropic convex geometry and curvature flow.")
    p.add_argument("--config", help="TOML file with one table per subcommand")
    sub = p.add_subparsers(dest="command", required=True)
    S = argparse.SUPPRESS

    w = sub.add_parser("wulff", help="Wulff shape summary and identity checks")
    w.add_argument("--gamma", required=True, help="anisotropy JSON file or string (or iso/trig)")
    w.add_argument("--grid-size", type=_grid_size_arg, default=None)
    w.add_argument("--points", action="store_true", default=None, help="include the Wulff point samples")

    m = sub.add_parser("measure", help="mixed volumes and inequality slacks, or local curvature measures")
    m.add_argument("--body", required=True, help="body JSON file or string")
    m.add_argument("--gamma", required=True)
    m.add_argument("--grid-size", type=_grid_size_arg, default=None)
    m.add_argument("--local", action="store_true", default=None, help="local Steiner fit (polygons)")
    m.add_argument("--region", default=None, help='region JSON, e.g. {"kind":"ball","center":[0,0],"radius":0.1}')
    m.add_argument("--eps-grid", default=None, help="comma-separated eps values")
    m.add_argument("--samples", type=int, default=None)
    m.add_argument("--seed", type=int, default=None)

    e = sub.add_parser("evolve", help="run the volume-preserving anisotropic flow")
    e.add_argument("--gamma", required=True)
    e.add_argument("--initial", required=True, help="initial body JSON")
    e.add_argument("--k", type=int, default=None)
    e.add_argument("--alpha", type=float, default=None)
    e.add_argument("--tol", type=float, default=None)
    e.add_argument("--tmax", type=float, default=None)
    e.add_argument("--max-steps", type=int, default=None)
    e.add_argument("--safety", type=float, default=None)
    e.add_argument("--stride", type=int, default=None)
    e.add_argument("--renormalize", action="store_true", default=None)
    e.add_argument("--out-prefix", default=None)
    e.add_argument("--grid-size", type=_grid_size_arg, default=None)

    v = sub.add_parser("verify", help="run the invariant suite on fixtures and random bodies")
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--count", type=int, default=None)
    v.add_argument("--gamma", default=None, help="comma-separated list: iso, trig, or JSON files")
    v.add_argument("--n", type=int, default=None)
    v.add_argument("--grid-size", type=_grid_size_arg, default=None)
    v.add_argument("--json", action="store_true", default=None)
    v.add_argument("--timings", action="store_true", default=None, help="include runtimes (breaks byte-identity)")

    x = sub.add_parser("export", help="write tidy CSV series for a finished run")
    x.add_argument("--prefix", default=None)
    x.add_argument("--out-dir", default=None)
    del S
    return p


COMMANDS = {"wulff": cmd_wulff, "measure": cmd_measure, "evolve": cmd_evolve, "verify": cmd_verify, "export": cmd_export}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        with open(args.config, "rb") as fh:
            config = tomli.load(fh)
    opts = _resolve(args, args.command, config)
    try:
        return COMMANDS[args.command](args, opts)
    except (WulffFlowError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
