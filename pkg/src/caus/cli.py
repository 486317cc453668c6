"""Command-line pipeline: fit, calibrate, build-set, solve, evaluate, compare.

Every command writes one JSON artifact that embeds the SHA-256 of its input
files and echoes the seeds it used. Exit codes:

    0  success
    1  invalid input or other domain error
    2  bad command-line usage
    3  parse error (message carries file:line:column)
    4  missing input file
    5  solver failure
    6  iteration limit reached without convergence
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .calibration import CalibratedRadius, calibrate
from .dispatch import CcgConfig, UcInstance, assemble, evaluate_reliability, solve_ccg
from .errors import CausError, InconsistentInstance, ParseError
from .experiment import CompareConfig, calibration_draws, run_compare
from .files import artifact, dumps, read_history, read_json, write_csv, write_json
from .gmm import EmConfig, JointGmm, condition, fit_gmm
from .sets import build_box, build_caus, build_uos_baseline, make_directions, set_from_dict
from .solver import BACKEND_ENV, SolveOptions
from .synth import generate_history, history_csv

log = logging.getLogger("caus")


def _covariates(args) -> list[np.ndarray]:
    if args.covariates:
        data = read_json(args.covariates)
        rows = data["covariates"] if isinstance(data, dict) else data
        return [np.asarray(r, dtype=float) for r in rows]
    if not args.x:
        raise InconsistentInstance("give --x once per period or --covariates FILE")
    try:
        return [np.array([float(v) for v in x.split(",")]) for x in args.x]
    except ValueError as exc:
        raise ParseError(f"bad --x value: {exc}") from exc


def _model(path) -> JointGmm:
    data = read_json(path)
    body = data.get("result", data)
    return JointGmm.from_dict(body["model"] if "model" in body else body)


def _emit(args, payload: dict):
    if args.out:
        write_json(args.out, payload)
    else:
        sys.stdout.write(dumps(payload))


def cmd_fit(args):
    _, x, xi = read_history(args.history)
    model = fit_gmm((x, xi), args.k, EmConfig(seed=args.seed))
    result = {"model": model.to_dict(), "weights": model.weights.tolist(),
              "log_likelihood": model.log_likelihood[-1] if model.log_likelihood else None,
              "iterations": len(model.log_likelihood)}
    _emit(args, artifact("model", {"history": args.history}, {"k": args.k, "seed": args.seed}, result))


def cmd_calibrate(args):
    model = _model(args.model)
    covs = _covariates(args)
    radii = [calibrate(condition(model, x), args.ns, args.epsilon, args.seed + t, period=t + 1)
             for t, x in enumerate(covs)]
    inputs = {"model": args.model}
    if args.covariates:
        inputs["covariates"] = args.covariates
    params = {"epsilon": args.epsilon, "n_samples": args.ns, "seed": args.seed,
              "covariates": [c.tolist() for c in covs], "period_seeds": [args.seed + t for t in range(len(covs))]}
    result = {"radii": [r.to_dict() for r in radii], "kappa": radii[0].kappa}
    _emit(args, artifact("radius", inputs, params, result))


def cmd_build_set(args):
    model = _model(args.model)
    covs = _covariates(args)
    conds = [condition(model, x) for x in covs]
    inputs = {"model": args.model}
    params = {"set": args.set, "covariates": [c.tolist() for c in covs]}
    if args.set == "caus":
        if not args.radius:
            raise InconsistentInstance("--set caus needs --radius FILE from the calibrate command")
        inputs["radius"] = args.radius
        body = read_json(args.radius)["result"]
        radii = [CalibratedRadius.from_dict(r) for r in body["radii"]]
        dirs = make_directions(model.m, args.j, args.seed)
        uset = build_caus(conds, radii, dirs)
        params.update({"j": dirs.j, "seed": args.seed})
    elif args.set == "box":
        uset = build_box(calibration_draws(conds, args.ns, args.seed))
        params.update({"n_samples": args.ns, "seed": args.seed})
    else:
        uset = build_uos_baseline(model.marginal_uncertainty(), periods=len(covs))
    _emit(args, artifact("set", inputs, params, {"set": uset.to_dict()}))


def cmd_solve(args):
    inst = UcInstance.load(args.instance)
    form = assemble(inst)
    uset = set_from_dict(read_json(args.set_file)["result"]["set"])
    sol = solve_ccg(form, uset, CcgConfig(options=SolveOptions(backend=args.backend)))
    result = sol.to_dict(form)
    result["dimensions"] = form.dimension_report()
    params = {"backend": args.backend or os.environ.get(BACKEND_ENV) or "highs", "tolerance": 1e-4}
    _emit(args, artifact("solution", {"instance": args.instance, "set": args.set_file}, params, result))


def cmd_evaluate(args):
    inst = UcInstance.load(args.instance)
    form = assemble(inst)
    sol = read_json(args.solution)["result"]
    x = np.asarray(sol["commitment_vector"], dtype=float)
    model = _model(args.model)
    conds = [condition(model, c) for c in _covariates(args)]
    if len(conds) != form.t:
        raise InconsistentInstance("need one covariate vector per period")
    rep = evaluate_reliability(form, x, conds, args.n, args.seed, options=SolveOptions(backend=args.backend))
    inputs = {"instance": args.instance, "solution": args.solution, "model": args.model}
    params = {"n": args.n, "seed": args.seed, "covariates": [c.tolist() for c in _covariates(args)]}
    if args.out:
        Path(str(args.out) + ".hist.csv").write_text(rep.histogram_csv())
    _emit(args, artifact("reliability", inputs, params, rep.to_dict()))


def cmd_compare(args):
    cfg = CompareConfig.load(args.config)
    if args.backend:
        cfg.backend = args.backend
    if args.seed is not None:
        cfg.seed_eval = args.seed
    out = run_compare(cfg)
    out_dir = Path(args.out or "compare_out")
    timing = out.pop("timing")
    inputs = {"config": args.config, "instance": cfg.instance, "history": cfg.history}
    write_json(out_dir / "compare.json", artifact("compare", inputs, cfg.params(), out))
    write_json(out_dir / "timing.json", {"wall_time_s": timing})
    write_csv(out_dir / "table.csv", ["method", "cost", "reliability", "wall_time_s"],
              [[r["method"], r["cost"], r["reliability"], timing[r["method"]]] for r in out["table"]])
    write_csv(out_dir / "sweep.csv", ["epsilon", "cost", "reliability"],
              [[s["epsilon"], s["cost"], s["reliability"]] for s in out["sweep"]])
    for r in out["table"]:
        print(f"{r['method']:8s} cost={r['cost']:.2f} reliability={r['reliability']:.4f}")


def cmd_synth(args):
    period, x, xi = generate_history(args.rows, args.seed)
    text = history_csv(period, x, xi)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="caus", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=0):
        sp.add_argument("--seed", type=int, default=seed)
        sp.add_argument("--out", help="output file (stdout when omitted)")
        sp.add_argument("--backend", choices=("highs", "scipy", "exact"),
                        help=f"solver backend (default: ${BACKEND_ENV} or highs)")

    def covariate_args(sp):
        sp.add_argument("--x", action="append", help="comma-separated covariate vector, once per period")
        sp.add_argument("--covariates", help="JSON file with a list of per-period covariate vectors")

    sp = sub.add_parser("fit", help="fit the joint mixture to a history CSV")
    sp.add_argument("history")
    sp.add_argument("--k", type=int, default=2)
    common(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("calibrate", help="calibrated radius per period")
    sp.add_argument("model")
    sp.add_argument("--epsilon", type=float, default=0.05)
    sp.add_argument("--ns", type=int, default=10000)
    covariate_args(sp)
    common(sp, seed=11)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("build-set", help="build a caus, box or uos uncertainty set")
    sp.add_argument("model")
    sp.add_argument("--set", choices=("caus", "box", "uos"), default="caus")
    sp.add_argument("--radius", help="radius file from the calibrate command (caus)")
    sp.add_argument("--j", type=int, default=None, help="directions per polytope")
    sp.add_argument("--ns", type=int, default=10000, help="draws for the box set")
    covariate_args(sp)
    common(sp, seed=0)
    sp.set_defaults(func=cmd_build_set)

    sp = sub.add_parser("solve", help="robust unit commitment over a set file")
    sp.add_argument("instance")
    sp.add_argument("set_file", metavar="set")
    common(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("evaluate", help="out-of-sample reliability of a solution")
    sp.add_argument("instance")
    sp.add_argument("solution")
    sp.add_argument("model")
    sp.add_argument("--n", type=int, default=10000)
    covariate_args(sp)
    common(sp, seed=7)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("compare", help="DO/SO/RO comparison table and confidence sweep")
    sp.add_argument("config")
    sp.add_argument("--seed", type=int, default=None, help="override the evaluation seed")
    sp.add_argument("--out", help="output directory (default compare_out)")
    sp.add_argument("--backend", choices=("highs", "scipy", "exact"))
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("synth", help="write a synthetic two-farm history CSV")
    sp.add_argument("--rows", type=int, default=2000)
    sp.add_argument("--seed", type=int, default=2024)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "backend", None):
        os.environ[BACKEND_ENV] = args.backend
    try:
        args.func(args)
    except CausError as exc:
        print(f"caus {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
