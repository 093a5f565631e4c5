"""Command-line front end.

Exit codes: 0 success, 1 validation error, 2 solver error, 3 I/O error.
All diagnostics go to stderr; data goes to stdout or the --out file.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import bistability, entanglement, params as params_mod, sweep as sweep_mod
from .errors import (AboveLasingThresholdError, CascadeLaserError,
                     DegenerateParametersError, EliminationError, SolverError,
                     UnphysicalCovarianceError, ValidationError)
from .gain_medium import atomic_steady_state_linear, xi_coefficients

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2
EXIT_IO = 3

_SOLVER_ERRORS = (AboveLasingThresholdError, SolverError, EliminationError,
                  DegenerateParametersError, UnphysicalCovarianceError)


def _load(args) -> params_mod.SystemParams:
    config = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except OSError as exc:
            raise _IOFailure(f"cannot read config {args.config}: {exc}")
        except json.JSONDecodeError as exc:
            raise ValidationError("config", f"invalid JSON: {exc}")
    if args.preset:
        config["preset"] = args.preset
    p = params_mod.load_params(config)
    if args.set:
        p = params_mod.apply_overrides(p, args.set)
    return p


class _IOFailure(Exception):
    pass


def _emit(text, args):
    if getattr(args, "out", None):
        try:
            with open(args.out, "w", encoding="utf-8") as fh:
                fh.write(text)
                if not text.endswith("\n"):
                    fh.write("\n")
        except OSError as exc:
            raise _IOFailure(f"cannot write {args.out}: {exc}")
    else:
        print(text)


def _cmd_xi(args):
    p = _load(args)
    xi = xi_coefficients(p.atom, atomic_steady_state_linear(p.atom))
    rows = [("xi11", xi.xi11), ("xi12", xi.xi12),
            ("xi21", xi.xi21), ("xi22", xi.xi22)]
    if args.format == "json":
        _emit(json.dumps({k: {"re": z.real, "im": z.imag} for k, z in rows},
                         indent=2), args)
    else:
        lines = ["coefficient,re_rad_s,im_rad_s"]
        lines += [f"{k},{z.real:.17g},{z.imag:.17g}" for k, z in rows]
        _emit("\n".join(lines), args)
    return EXIT_OK


def _cmd_roots(args):
    p = _load(args)
    if args.frame == "rwa":
        roots = bistability.rwa_roots(p, args.mode, p.cavity.P1)
        recs = [dict(I=r.I, delta_eff=r.delta_eff, stable=r.stable)
                for r in roots]
    else:
        mu = p.cavity.mu if p.cavity.mu is not None else args.mu
        roots = bistability.coupled_roots(p, p.cavity.P1, p.cavity.delta01, mu)
        recs = [dict(I1=r.I1, I2=r.I2, residual=r.residual_norm,
                     stable=r.stable, branch=r.branch_id) for r in roots]
    if args.format == "json":
        _emit(json.dumps(recs, indent=2), args)
    else:
        keys = list(recs[0].keys())
        lines = [",".join(keys)]
        for r in recs:
            lines.append(",".join(sweep_mod._fmt(r[k]) for k in keys))
        _emit("\n".join(lines), args)
    return EXIT_OK


def _cmd_hysteresis(args):
    p = _load(args)
    mu = p.cavity.mu if p.cavity.mu is not None else args.mu
    lo, hi = (float(x) for x in args.p_range.split(":"))
    trace = bistability.trace_hysteresis(p, (lo, hi), args.steps,
                                         p.cavity.delta01, mu)
    doc = {
        "sweep_values": list(trace.sweep_values),
        "branches": [[list(pt) for pt in b] for b in trace.branches],
        "turning_points": [list(t) for t in trace.turning_points],
        "topology": {str(k): v for k, v in trace.topology.items()},
    }
    _emit(json.dumps(doc, indent=1), args)
    return EXIT_OK


def _cmd_entangle(args):
    p = _load(args)
    res, eff, V = entanglement.entangle(p, paper_literal=args.paper_literal_D)
    doc = dict(stable=res.stable,
               Gamma1=eff.Gamma1, Gamma2=eff.Gamma2,
               G12=eff.G12, G21=eff.G21, K=eff.K,
               kappa1_prime=eff.kappa1p, kappa2_prime=eff.kappa2p,
               I1=eff.I1, I2=eff.I2)
    if res.stable:
        doc.update(E_N=res.E_N, Lambda=res.Lambda, sigma=res.sigma,
                   physical=V.is_physical())
    if args.format == "json":
        _emit(json.dumps(doc, indent=2), args)
    else:
        _emit("\n".join(f"{k},{sweep_mod._fmt(v)}" for k, v in doc.items()),
              args)
    return EXIT_OK


def _parse_axis(text):
    # path=start:stop:count[:log]
    path, _, rng = text.partition("=")
    if not rng:
        raise ValidationError("axis", f"expected path=start:stop:count, got {text!r}")
    parts = rng.split(":")
    if len(parts) not in (3, 4):
        raise ValidationError("axis", f"expected start:stop:count[:scale] in {text!r}")
    scale = parts[3] if len(parts) == 4 else "linear"
    return sweep_mod.AxisSpec(
        path=path.strip(),
        start=params_mod.parse_override_value(parts[0]),
        stop=params_mod.parse_override_value(parts[1]),
        count=int(parts[2]), scale=scale)


def _cmd_sweep(args):
    p = _load(args)
    axes = [_parse_axis(a) for a in args.axis]
    options = {}
    if args.evaluator == "entanglement":
        options["paper_literal"] = args.paper_literal_D
    if args.evaluator == "bistability":
        options["frame"] = args.frame
        options["mu"] = p.cavity.mu if p.cavity.mu is not None else args.mu
    spec = sweep_mod.SweepSpec(axes=axes, evaluator=args.evaluator, base=p,
                               options=options, jobs=args.jobs)
    try:
        result = sweep_mod.run_sweep(spec, out_path=args.out, fmt=args.format,
                                     resume=args.resume)
    except OSError as exc:
        raise _IOFailure(str(exc))
    if args.out is None:
        if args.format == "json":
            import io
            import tempfile
            with tempfile.NamedTemporaryFile("r", suffix=".json",
                                             delete=False) as fh:
                path = fh.name
            sweep_mod.write_result(result, path, "json", base=p)
            with open(path, "r", encoding="utf-8") as fh:
                print(fh.read())
        else:
            print(sweep_mod._csv_header(result.evaluator, result.axes,
                                        result.columns))
            for row in result.cells:
                print(sweep_mod._csv_row(result.evaluator, row, result.columns))
    return EXIT_OK


def _cmd_presets(args):
    lines = []
    for name in params_mod.preset_names():
        lines.append(f"{name}: {params_mod.preset_citation(name)}")
    _emit("\n".join(lines), args)
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(
        prog="cascadelaser",
        description="Steady states, bistability phase diagrams, and "
                    "mirror-mirror entanglement of a two-mode cascade-laser "
                    "optomechanical system.")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--preset", help="built-in parameter set")
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--set", action="append", default=[],
                        metavar="PATH=VALUE[UNIT]",
                        help="override, e.g. cavity.delta01=2pi*1.5MHz")
        if out:
            sp.add_argument("--out", help="output file (default: stdout)")
            sp.add_argument("--format", choices=("csv", "json"), default="csv")

    sp = sub.add_parser("xi", help="print the gain/coupling coefficient table")
    common(sp)
    sp.set_defaults(fn=_cmd_xi)

    sp = sub.add_parser("roots", help="steady-state intensities with stability")
    common(sp)
    sp.add_argument("--frame", choices=("rwa", "beyond-rwa"), default="rwa")
    sp.add_argument("--mode", type=int, choices=(1, 2), default=1)
    sp.add_argument("--mu", type=float, default=1.0,
                    help="drive-amplitude ratio (beyond-rwa frame)")
    sp.set_defaults(fn=_cmd_roots)

    sp = sub.add_parser("hysteresis", help="trace branches over a power range")
    common(sp)
    sp.add_argument("--p-range", required=True, metavar="LO:HI",
                    help="power window in watts, e.g. 1e-14:2e-12")
    sp.add_argument("--steps", type=int, default=200)
    sp.add_argument("--mu", type=float, default=1.0)
    sp.set_defaults(fn=_cmd_hysteresis)

    sp = sub.add_parser("entangle", help="mirror-mirror logarithmic negativity")
    common(sp)
    sp.add_argument("--paper-literal-D", action="store_true",
                    dest="paper_literal_D",
                    help="use the unreduced printed diffusion entries")
    sp.set_defaults(fn=_cmd_entangle)

    sp = sub.add_parser("sweep", help="grid sweep with a named evaluator")
    common(sp)
    sp.add_argument("--evaluator", required=True,
                    choices=sorted(sweep_mod.EVALUATORS))
    sp.add_argument("--axis", action="append", required=True,
                    metavar="PATH=START:STOP:COUNT[:log]")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--resume", action="store_true")
    sp.add_argument("--frame", choices=("rwa", "beyond-rwa"),
                    default="beyond-rwa")
    sp.add_argument("--mu", type=float, default=1.0)
    sp.add_argument("--paper-literal-D", action="store_true",
                    dest="paper_literal_D")
    sp.set_defaults(fn=_cmd_sweep)

    sp = sub.add_parser("presets", help="list built-in parameter sets")
    sp.add_argument("--out", help="output file (default: stdout)")
    sp.set_defaults(fn=_cmd_presets)

    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _SOLVER_ERRORS as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (_IOFailure, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except CascadeLaserError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
