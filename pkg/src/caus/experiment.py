"""End-to-end comparison of dispatch methods on one instance.

Methods: DO (deterministic at the conditional mean), SO (sample average),
RO-box (bounding box of the calibration draws), RO-uos (covariate-free
union of subsets) and RO-caus (calibrated contextual union), plus a CAUS
sweep over confidence levels.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import calibrate
from .dispatch import (
    CcgConfig,
    UcInstance,
    assemble,
    evaluate_reliability,
    sample_trajectories,
    solve_ccg,
    solve_deterministic,
    solve_saa,
)
from .errors import InconsistentInstance
from .files import read_history, read_json
from .gmm import EmConfig, condition, fit_gmm, sample_conditional
from .sets import build_box, build_caus, build_uos_baseline, make_directions
from .solver import SolveOptions

METHODS = ("DO", "SO", "RO-box", "RO-uos", "RO-caus")
DEFAULT_SWEEP = (0.2, 0.1, 0.05, 0.01)


@dataclass
class CompareConfig:
    instance: Path
    history: Path
    covariates: list
    k: int = 2
    epsilon: float = 0.05
    n_samples: int = 10000
    j: int | None = None
    n_eval: int = 10000
    saa_scenarios: int = 50
    sweep: tuple = DEFAULT_SWEEP
    periods: int | None = None
    seed_fit: int = 0
    seed_calibrate: int = 11
    seed_eval: int = 7
    seed_saa: int = 3
    seed_directions: int = 0
    backend: str | None = None
    methods: tuple = METHODS
    extra: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path) -> "CompareConfig":
        path = Path(path)
        data = read_json(path)
        base = path.parent
        seeds = data.get("seeds", {})
        try:
            return cls(
                instance=base / data["instance"],
                history=base / data["history"],
                covariates=[list(map(float, c)) for c in data["covariates"]],
                k=int(data.get("k", 2)),
                epsilon=float(data.get("epsilon", 0.05)),
                n_samples=int(data.get("n_samples", 10000)),
                j=data.get("j"),
                n_eval=int(data.get("n_eval", 10000)),
                saa_scenarios=int(data.get("saa_scenarios", 50)),
                sweep=tuple(float(e) for e in data.get("sweep", DEFAULT_SWEEP)),
                periods=data.get("periods"),
                seed_fit=int(seeds.get("fit", 0)),
                seed_calibrate=int(seeds.get("calibrate", 11)),
                seed_eval=int(seeds.get("evaluate", 7)),
                seed_saa=int(seeds.get("saa", 3)),
                seed_directions=int(seeds.get("directions", 0)),
                backend=data.get("backend"),
                methods=tuple(data.get("methods", METHODS)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InconsistentInstance(f"malformed compare config: {exc}") from exc

    def params(self) -> dict:
        return {
            "k": self.k, "epsilon": self.epsilon, "n_samples": self.n_samples, "j": self.j,
            "n_eval": self.n_eval, "saa_scenarios": self.saa_scenarios, "sweep": list(self.sweep),
            "periods": self.periods, "covariates": self.covariates, "methods": list(self.methods),
            "backend": self.backend,
            "seeds": {"fit": self.seed_fit, "calibrate": self.seed_calibrate, "evaluate": self.seed_eval,
                      "saa": self.seed_saa, "directions": self.seed_directions},
        }


def calibration_draws(conds, n_samples: int, seed: int) -> list:
    """The per-period draws calibrate() scores; period t uses seed + t."""
    return [sample_conditional(c, n_samples, seed + t) for t, c in enumerate(conds)]


def caus_set(conds, epsilon: float, n_samples: int, seed: int, dirs, options=None):
    radii = [calibrate(c, n_samples, epsilon, seed + t, period=t + 1) for t, c in enumerate(conds)]
    return build_caus(conds, radii, dirs, options=options), radii


def run_compare(cfg: CompareConfig, keep_solutions: bool = False) -> dict:
    """Run every method; returns the numeric payload and wall times separately.

    With ``keep_solutions`` the robust solutions and their sets are returned
    under ``solutions`` as ``{label: (RobustSolution, set)}``.
    """
    options = SolveOptions(backend=cfg.backend)
    ccg = CcgConfig(options=options)
    _, x_hist, xi_hist = read_history(cfg.history)
    model = fit_gmm((x_hist, xi_hist), cfg.k, EmConfig(seed=cfg.seed_fit))
    inst = UcInstance.load(cfg.instance)
    if cfg.periods is not None:
        inst = inst.truncated(int(cfg.periods))
    if len(cfg.covariates) < inst.periods:
        raise InconsistentInstance("need one covariate vector per period")
    form = assemble(inst)
    conds = [condition(model, cfg.covariates[t]) for t in range(inst.periods)]
    dirs = make_directions(form.m, cfg.j, cfg.seed_directions)

    rows, timing, commitments, solutions = [], {}, {}, {}

    def record(method, cost, x):
        rel = evaluate_reliability(form, x, conds, cfg.n_eval, cfg.seed_eval, options=options)
        rows.append({"method": method, "cost": cost, "reliability": rel.reliability,
                     "oos_cost_mean": rel.cost_mean})
        commitments[method] = [int(v) for v in x]

    caus_cache = {}

    def caus_solution(eps):
        if eps not in caus_cache:
            uset, radii = caus_set(conds, eps, cfg.n_samples, cfg.seed_calibrate, dirs, options)
            caus_cache[eps] = (solve_ccg(form, uset, ccg), radii)
            solutions[f"RO-caus@{eps}"] = (caus_cache[eps][0], uset)
        return caus_cache[eps]

    for method in cfg.methods:
        t0 = time.perf_counter()
        if method == "DO":
            mean = np.array([c.mean() for c in conds])
            out = solve_deterministic(form, mean, options)
            cost, x = out.cost, out.commitment
        elif method == "SO":
            scen = sample_trajectories(conds, cfg.saa_scenarios, cfg.seed_saa)
            out = solve_saa(form, list(scen), options=options)
            cost, x = out.cost, out.commitment
        elif method == "RO-box":
            box = build_box(calibration_draws(conds, cfg.n_samples, cfg.seed_calibrate))
            sol = solve_ccg(form, box, ccg)
            solutions[method] = (sol, box)
            cost, x = sol.total_cost, sol.commitment
        elif method == "RO-uos":
            uos = build_uos_baseline(model.marginal_uncertainty(), periods=inst.periods)
            sol = solve_ccg(form, uos, ccg)
            solutions[method] = (sol, uos)
            cost, x = sol.total_cost, sol.commitment
        elif method == "RO-caus":
            sol, _ = caus_solution(cfg.epsilon)
            cost, x = sol.total_cost, sol.commitment
        else:
            raise InconsistentInstance(f"unknown method {method!r}")
        timing[method] = time.perf_counter() - t0
        record(method, cost, x)

    sweep = []
    for eps in cfg.sweep:
        t0 = time.perf_counter()
        sol, radii = caus_solution(eps)
        rel = evaluate_reliability(form, sol.commitment, conds, cfg.n_eval, cfg.seed_eval, options=options)
        timing[f"sweep_{eps}"] = time.perf_counter() - t0
        sweep.append({"epsilon": eps, "cost": sol.total_cost, "reliability": rel.reliability,
                      "gap": sol.gap, "iterations": sol.iterations,
                      "gamma": [r.gamma for r in radii], "kappa": radii[0].kappa})
    out = {
        "table": rows,
        "sweep": sweep,
        "commitments": commitments,
        "model_weights": model.weights.tolist(),
        "timing": timing,
    }
    if keep_solutions:
        out["solutions"] = solutions
    return out
