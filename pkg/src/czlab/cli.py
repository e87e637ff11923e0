"""Command-line driver: czlab {build,sweep,warp,poisson,norms} --config FILE --out DIR.

Exit codes: 0 success, 1 verification failed, 2 invalid configuration,
3 solver failure, 4 convexity-gate failure, 5 infeasible splice.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_CONVEXITY = 4
EXIT_INFEASIBLE = 5


class ConfigError(ValueError):
    pass


def _dump(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"not serializable: {type(x).__name__}")


def _g(x) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# graph functions named in configs


def _function(block: dict | None, n: int = 2):
    from . import convexlab as cl

    block = block or {"kind": "paraboloid"}
    kind = block.get("kind", "paraboloid")
    if kind == "paraboloid":
        return cl.quadratic(int(block.get("n", n)), float(block.get("scale", 1.0)))
    if kind == "flat":
        return cl.flat(int(block.get("n", n)))
    if kind == "linear":
        return cl.linear(block["slope"])
    if kind == "hemisphere":
        return cl.hemisphere(int(block.get("n", n)), float(block.get("radius", 1.0)))
    if kind == "spec":
        return cl.SmoothedFunction(cl.ConvexSpec.from_dict(block["spec"]).validate())
    raise ConfigError(f"unknown function kind {kind!r}")


# --------------------------------------------------------------------------
# commands


def cmd_build(cfg: dict, out: Path, seed: int | None) -> int:
    from dataclasses import replace

    from . import convexlab as cl
    from .graphgeo import min_sectional_curvature, sample_planes

    if "spec" in cfg:
        spec = cl.ConvexSpec.from_dict(cfg["spec"])
    else:
        std = cfg.get("standard", {})
        spec = cl.standard_spec(n=int(std.get("n", 2)), count=int(std.get("K", 8)),
                                eta0=float(std.get("eta0", 0.05)), radius=float(std.get("radius", 6.0)),
                                delta=float(std.get("delta", 0.0)))
    if seed is not None:
        spec = replace(spec, seed=seed)
    spec.validate()
    cert = cfg.get("certificate", {})
    per_axis = int(cert.get("per_axis", 121))
    pts = cl.certificate_points(spec, per_axis=per_axis, margin=float(cert.get("margin", 0.1)))
    f = cl.SmoothedFunction(spec)
    lo = cl.verify_convexity(f, pts)
    rng = np.random.default_rng(spec.seed)
    planes = sample_planes(spec.dimension, int(cert.get("planes", 8)), rng)
    kmin, where = min_sectional_curvature(f, pts, planes)
    origin = np.array([spec.ball_center])
    k_center = None
    if spec.smoothing > 0 or not f.support_mask(origin, 0.0)[0]:
        k_center = min_sectional_curvature(f, origin, planes)[0]
    _dump(out / "spec.json", spec.to_json())
    _dump(out / "certificate.json", _json({
        "min_hessian_eigenvalue": lo, "points": len(pts), "per_axis": per_axis, "convex": lo > 0}))
    _dump(out / "curvature.json", _json({
        "min_sectional_curvature": kmin, "argmin": where.tolist(), "planes": len(planes),
        "curvature_at_ball_center": k_center, "positive": kmin > 0}))
    if not lo > 0:
        print(f"convexity certificate failed: min eigenvalue {lo:.6g}", file=sys.stderr)
        return EXIT_CONVEXITY
    if not kmin > 0:
        print(f"curvature positivity failed: min sectional curvature {kmin:.6g}", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path, seed: int | None) -> int:
    from dataclasses import replace

    from . import czexp

    config = czexp.SweepConfig.from_dict(cfg.get("sweep", cfg))
    if seed is not None:
        config = replace(config, seed=seed)
    config.validate()
    records = czexp.run_sweep(config)
    baseline = czexp.run_baseline(config) if cfg.get("baseline", False) and records else None
    _dump(out / "sweep.csv", czexp.records_csv(records))
    _dump(out / "summary.json", czexp.summary_json(czexp.summary(config, records, baseline)))
    return EXIT_OK


def _annuli(block: dict):
    from . import warped

    if "synthetic" in block:
        syn = block["synthetic"]
        return warped.synthetic_annuli(tuple(syn.get("kappa", (1.0, 2.0, 3.0))))
    data = warped.AnnuliData.from_dict(block)
    if "kappa" not in block or block["kappa"] is None:
        raise ConfigError("annuli need kappa")
    return data


def cmd_warp(cfg: dict, out: Path, seed: int | None) -> int:
    from . import warped

    annuli = _annuli(cfg.get("annuli", {"synthetic": {}}))
    if "kappa" in cfg:
        annuli = warped.AnnuliData(annuli.sigma, annuli.a, annuli.b, annuli.c, annuli.d, annuli.e,
                                   annuli.f, tuple(cfg["kappa"]), annuli.start)
    b = cfg.get("bound", {"kind": "log1p", "scale": 1.0})
    bound = warped.BoundFunction(b.get("kind", "log1p"), float(b.get("scale", 1.0)))
    opts = cfg.get("splice", {})
    w = warped.splice(annuli, bound, fillet=float(opts.get("fillet", 0.25)), room=float(opts.get("room", 1.0)),
                      t_min=float(opts.get("t_min", 0.0)), horizon=float(opts.get("horizon", 1e4)),
                      step=float(opts.get("step", 0.5)))
    lo = w.anchors[0]
    hi = w.blocks[-1][1] + float(cfg.get("tail", 5.0))
    ts = np.linspace(lo, hi, int(cfg.get("samples", 10000)))
    rep = warped.verify_bound(w, ts)
    _dump(out / "spliced.json", w.to_json())
    _dump(out / "bound.csv", rep.to_csv())
    _dump(out / "warp_summary.json", _json({
        "anchors": list(w.anchors), "junctions": list(w.junctions), "fillet_widths": list(w.fillet_widths),
        "min_margin": rep.min_margin, "argmin": rep.argmin, "passed": rep.passed,
        "translation_defect": warped.translation_defect(w)}))
    return EXIT_OK if rep.passed else EXIT_FAILED


def cmd_poisson(cfg: dict, out: Path, seed: int | None) -> int:
    from .meshdisc import ChartGrid
    from .poisson import SourceSpec, assemble_operator, build_source, solve

    f = _function(cfg.get("function"))
    g = cfg.get("grid", {"center": [0.0, 0.0], "radius": 1.0, "h": 1 / 32})
    grid = ChartGrid.ball(g["center"], float(g["radius"]), float(g["h"]))
    bc = cfg.get("bc", "dirichlet")
    op = assemble_operator(f, grid, bc)
    s = cfg.get("source")
    if s is None:
        from .meshdisc import ScalarField

        src = ScalarField(grid, grid.mask.astype(float), "source")
    else:
        _, src = build_source(f, grid, SourceSpec(tuple(s["center"]), float(s["radius"]), s.get("working_radius")),
                              op.weights() if bc == "neumann" else None)
    rep = solve(op, src, tol=float(cfg.get("tol", 1e-10)))
    out.mkdir(parents=True, exist_ok=True)
    rep.solution.to_binary(out / "solution.bin")
    rep.solution.to_csv(out / "solution.csv")
    _dump(out / "report.json", rep.to_json())
    return EXIT_OK


def cmd_norms(cfg: dict, out: Path, seed: int | None) -> int:
    from .meshdisc import ChartGrid, ScalarField, lp_norm, read_binary

    values, h = read_binary(cfg["field"])
    mask = np.isfinite(values)
    lower = np.asarray(cfg.get("lower", [0.0] * values.ndim), dtype=float)
    grid = ChartGrid(lower, h, values.shape, mask, np.ones(values.shape))
    field = ScalarField(grid, np.where(mask, values, 0.0))
    f = _function(cfg.get("function"), values.ndim)
    w = grid.volume_weights(f)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["p", "norm"])
    for p in cfg.get("p", [2, 4]):
        wr.writerow([_g(p), _g(lp_norm(field, f, float(p), w))])
    _dump(out / "norms.csv", buf.getvalue())
    return EXIT_OK


COMMANDS = {"build": cmd_build, "sweep": cmd_sweep, "warp": cmd_warp, "poisson": cmd_poisson, "norms": cmd_norms}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="czlab", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", type=Path, help="JSON configuration (defaults apply when omitted)")
    ap.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    ap.add_argument("--threads", type=int, default=None, help="thread budget for numerical libraries")
    ap.add_argument("--seed", type=int, default=None, help="override the configured seed")
    return ap


def main(argv=None) -> int:
    from .convexlab import InvalidSpecError
    from .czexp import ConvexityGateError
    from .poisson import MeanViolationError, SolverError
    from .warped import InvalidAnnuliError, SpliceInfeasibleError

    args = build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be positive", file=sys.stderr)
            return EXIT_INVALID
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        cfg = json.loads(args.config.read_text()) if args.config else {}
    except (OSError, json.JSONDecodeError) as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](cfg, args.out, args.seed)
    except SpliceInfeasibleError as exc:
        print(f"infeasible splice: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConvexityGateError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONVEXITY
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (InvalidSpecError, InvalidAnnuliError, MeanViolationError, ConfigError,
            ValueError, KeyError, TypeError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
