"""Command-line interface.

Exit status: 0 on success, 1 on invalid input (bad spec, bad polytope,
bad weight), 2 on numerical failure.  Every run writes manifest.json into
the output directory with the resolved configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys

import numpy as np

from . import __version__
from .curvature import sample_curvature
from .energy import MinimizeOptions, k_energy, minimize_k_energy
from .errors import NotNormalized, NumericalError, SpecFormatError, ValidationError
from .polytope import delzant_warnings, load_polytope_spec, validate_weight
from .potentials import (PLConvexFunction, guillemin_potential, normalize, parse_potential_spec,
                         potential_to_spec)
from .quadrature import QuadratureScheme, default_scheme, probe_points
from .selftest import run_checks
from .stability import (ScanConfig, boundary_norm, check_normalized, extremal_affine, futaki,
                        stability_scan)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


def _load_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecFormatError(f"{path}: {exc}") from None


def _scheme(args, dim) -> QuadratureScheme:
    base = default_scheme(dim)
    order = base.order if args.scheme_order is None else args.scheme_order
    bo = base.boundary_order if args.scheme_order is None else args.scheme_order
    refine = base.refine if args.refine is None else args.refine
    grade = base.grade if args.grade is None else args.grade
    return QuadratureScheme(order, bo, refine, grade)


def _affine_str(s, names) -> str:
    scale = 1.0 + float(np.max(np.abs(s.coefficients())))
    text = f"{s.constant:.12g}"
    for g, name in zip(s.gradient, names):
        if abs(g) > 1e-9 * scale:
            text += f" {'+' if g > 0 else '-'} {abs(g):.12g}*{name}"
    return text


def _load_potential(args, p):
    if getattr(args, "potential", None):
        return parse_potential_spec(_load_json(args.potential), p)
    return guillemin_potential(p)


def _write(out, name, text):
    path = os.path.join(out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


# -- subcommands -----------------------------------------------------------------

def cmd_validate(args, p, f, scheme, out):
    w = validate_weight(p, f)
    print(f"valid polytope: dim {p.dim}, {p.n_facets} facets, {len(p.vertices)} vertices")
    print(f"weight range on the polytope: [{w.min_value:.12g}, {w.max_value:.12g}]")
    for msg in delzant_warnings(p):
        print(f"note: {msg}")
    return {"vertices": p.vertices.tolist()}


def cmd_extremal(args, p, f, scheme, out):
    validate_weight(p, f)
    sol = extremal_affine(p, f, scheme)
    names = [f"x{k + 1}" for k in range(p.dim)]
    print(f"s = {_affine_str(sol.affine, names)}")
    print(f"coefficients (a0, a1..am): {[float(a) for a in sol.coefficients]}")
    print(f"gram condition number: {sol.condition:.6g}")
    print(f"linear-system residual: {sol.residual:.3g}")
    return {"coefficients": [float(a) for a in sol.coefficients], "condition": sol.condition,
            "residual": sol.residual}


def cmd_futaki(args, p, f, scheme, out):
    validate_weight(p, f)
    s = extremal_affine(p, f, scheme).affine
    v = parse_potential_spec(_load_json(args.function), p)
    fu = futaki(p, f, s, v, scheme)
    try:
        check_normalized(p, v)
        normalized = False
    except NotNormalized:
        v = normalize(v, p.basepoint)
        normalized = True
    bn = boundary_norm(p, f, v, scheme)
    print(f"futaki = {fu!r}")
    print(f"bnorm = {bn!r}" + ("  (after projecting with pi)" if normalized else ""))
    ratio = fu / bn if bn > 1e-10 else None
    print(f"ratio = {ratio!r}")
    return {"futaki": fu, "bnorm": bn, "ratio": ratio,
            "projected": normalized, "kind": "pl" if isinstance(v, PLConvexFunction) else "potential"}


def cmd_curvature(args, p, f, scheme, out):
    validate_weight(p, f)
    u = _load_potential(args, p)
    pts = probe_points(p, args.resolution)
    samples = sample_curvature(u, f, pts)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([f"x{k + 1}" for k in range(p.dim)] + ["value"])
    for smp in samples:
        w.writerow([repr(float(x)) for x in smp.point] + [repr(smp.weighted)])
    path = _write(out, "curvature.csv", buf.getvalue())
    vals = np.array([smp.weighted for smp in samples])
    print(f"{len(vals)} points written to {path}")
    print(f"s_(u,f): min {vals.min():.12g}, max {vals.max():.12g}")
    return {"csv": path, "min": float(vals.min()), "max": float(vals.max())}


def cmd_scan(args, p, f, scheme, out):
    validate_weight(p, f)
    s = extremal_affine(p, f, scheme).affine
    cfg = ScanConfig(crease_directions=args.directions, crease_offsets=args.offsets,
                     random_maxima=args.random, pieces=args.pieces,
                     total_samples=args.samples, seed=args.seed)
    rep = stability_scan(p, f, s, cfg, scheme)
    path = _write(out, "scan.csv", rep.to_csv())
    print(f"{rep.n_samples} samples ({rep.n_skipped} skipped with zero boundary norm) "
          f"written to {path}")
    if rep.n_samples:
        best = rep.argmin
        print(f"lambda_hat = {rep.lambda_hat!r}  (upper estimate of the stability constant)")
        print(f"argmin: sample {best.sample_id} ({best.family}) {best.params}")
    else:
        print("no valid samples")
    return {"csv": path, "lambda_hat": None if not rep.n_samples else rep.lambda_hat,
            "n_samples": rep.n_samples, "n_skipped": rep.n_skipped, "config": cfg.as_dict()}


def cmd_kenergy(args, p, f, scheme, out):
    validate_weight(p, f)
    u = _load_potential(args, p)
    e = k_energy(p, f, u, scheme)
    print(f"energy = {e.total!r}")
    print(f"futaki = {e.futaki!r}")
    print(f"entropy = {e.entropy!r}")
    return {"energy": e.total, "futaki": e.futaki, "entropy": e.entropy}


def cmd_minimize(args, p, f, scheme, out):
    validate_weight(p, f)
    initial = None
    if args.initial:
        u = parse_potential_spec(_load_json(args.initial), p)
        if isinstance(u, PLConvexFunction) or not u.canonical:
            raise SpecFormatError("the initial potential must be canonical plus a perturbation")
        initial = u.perturbation
    opts = MinimizeOptions(max_iters=args.max_iters, tol=args.tol, seed=args.seed)
    res = minimize_k_energy(p, f, args.degree, opts, initial, scheme)
    hist = _write(out, "history.csv", res.history_csv())
    pot = _write(out, "potential.json",
                 json.dumps(potential_to_spec(res.potential), indent=2) + "\n")
    print(f"termination: {res.reason} after {res.iterations} iterations")
    print(f"energy = {res.energy!r}")
    print(f"residual = {res.residual!r}")
    print(f"futaki(final) = {res.futaki_final!r}; m*int dmu/f^(2m-1) = {res.identity_target!r}")
    print(f"history: {hist}; final potential: {pot}")
    return {"reason": res.reason, "iterations": res.iterations, "energy": res.energy,
            "residual": res.residual, "futaki_final": res.futaki_final,
            "identity_target": res.identity_target, "history": hist, "potential": pot}


def cmd_selftest(args, out):
    checks = run_checks()
    for chk in checks:
        print(chk.line())
    n_pass = sum(c.passed for c in checks)
    print(f"{n_pass}/{len(checks)} checks passed")
    return {"passed": n_pass, "total": len(checks)}, n_pass == len(checks)


COMMANDS = {"validate": cmd_validate, "extremal": cmd_extremal, "futaki": cmd_futaki,
            "curvature": cmd_curvature, "scan": cmd_scan, "kenergy": cmd_kenergy,
            "minimize": cmd_minimize}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scheme-order", type=int, default=None,
                        help="polynomial exactness of the quadrature rules")
    common.add_argument("--refine", type=int, default=None, help="radial bisection levels")
    common.add_argument("--grade", type=int, default=None,
                        help="extra geometric levels toward the boundary")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default="toricstab_out", help="output directory")
    common.add_argument("--tol", type=float, default=1e-5, help="minimizer residual tolerance")

    ap = argparse.ArgumentParser(prog="toricstab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def spec_cmd(name, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.add_argument("spec", help="polytope spec (JSON)")
        return sp

    spec_cmd("validate", "check a polytope and weight")
    spec_cmd("extremal", "weighted extremal affine function")
    sp = spec_cmd("futaki", "Futaki invariant and boundary norm of a PL or potential spec")
    sp.add_argument("function", help="PL or potential spec (JSON)")
    sp = spec_cmd("curvature", "sample s_(u,f) on a probe grid (CSV)")
    sp.add_argument("--potential", help="potential spec (default: canonical)")
    sp.add_argument("--resolution", type=int, default=32)
    sp = spec_cmd("scan", "stability scan (CSV)")
    sp.add_argument("--directions", type=int, default=24)
    sp.add_argument("--offsets", type=int, default=4)
    sp.add_argument("--random", type=int, default=None,
                    help="random maxima (default: fill up to --samples)")
    sp.add_argument("--pieces", type=int, default=3)
    sp.add_argument("--samples", type=int, default=500)
    sp = spec_cmd("kenergy", "relative K-energy of a potential")
    sp.add_argument("--potential", help="potential spec (default: canonical)")
    sp = spec_cmd("minimize", "K-energy descent (history CSV + final potential)")
    sp.add_argument("--degree", type=int, default=4)
    sp.add_argument("--max-iters", type=int, default=500)
    sp.add_argument("--initial", help="initial potential spec")
    sub.add_parser("selftest", parents=[common], help="closed-form oracle suite")
    return ap


def _manifest(args, scheme, result, status):
    cfg = {k: v for k, v in vars(args).items()}
    return {"version": __version__, "command": args.command, "config": cfg,
            "scheme": None if scheme is None else scheme.as_dict(),
            "status": status, "result": result}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out
    scheme = None
    result, status = None, EXIT_OK
    try:
        os.makedirs(out, exist_ok=True)
        if args.command == "selftest":
            result, ok = cmd_selftest(args, out)
            status = EXIT_OK if ok else EXIT_NUMERICAL
        else:
            p, f = load_polytope_spec(args.spec)
            scheme = _scheme(args, p.dim)
            result = COMMANDS[args.command](args, p, f, scheme, out)
    except (ValidationError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, result = EXIT_INVALID, {"error": type(exc).__name__, "message": str(exc)}
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        status, result = EXIT_NUMERICAL, {"error": type(exc).__name__, "message": str(exc)}
    try:
        _write(out, "manifest.json",
               json.dumps(_manifest(args, scheme, result, status), indent=2, default=str) + "\n")
    except OSError:
        pass
    return status


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
