"""Neutral LP/MILP model plus pluggable backends.

Problems are stated once as a :class:`LinearProgram` (variables with bounds
and kinds, triplet-form constraint rows with a sense and right-hand side) and
handed to :func:`solve`. The backend is picked by ``options.backend`` or the
``CAUS_SOLVER`` environment variable:

* ``highs``  -- HiGHS through its native ``highspy`` interface (default)
* ``scipy``  -- HiGHS through ``scipy.optimize`` (no duals for MILPs)
* ``exact``  -- the bundled rational simplex, LP only, small problems only

Every optimal result is re-checked for primal feasibility against the stored
rows before it is returned.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import BackendUnavailable, DimensionMismatch, NumericalFailure, SolverFailure

INF = math.inf
SENSES = ("<=", ">=", "==")

FEASIBILITY_TOL = 1e-6
INTEGRALITY_TOL = 1e-5


class LinearProgram:
    """A mutable linear or mixed-binary program in triplet form."""

    def __init__(self, sense: str = "min", name: str = "lp"):
        if sense not in ("min", "max"):
            raise ValueError(f"unknown objective sense {sense!r}")
        self.sense = sense
        self.name = name
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._binary: list[bool] = []
        self._obj: list[float] = []
        self.var_names: list[str] = []
        self._rows: list[np.ndarray] = []
        self._cols: list[np.ndarray] = []
        self._vals: list[np.ndarray] = []
        self.senses: list[str] = []
        self.rhs: list[float] = []
        self.row_names: dict[int, str] = {}

    # -- construction -----------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self._lb)

    @property
    def n_rows(self) -> int:
        return len(self.rhs)

    def add_var(self, lb=0.0, ub=INF, binary=False, obj=0.0, name=None) -> int:
        return int(self.add_vars(1, lb, ub, binary, obj, name)[0])

    def add_vars(self, count, lb=0.0, ub=INF, binary=False, obj=0.0, name=None) -> np.ndarray:
        """Add ``count`` variables and return their column indices."""
        start = self.n_vars
        lb = np.broadcast_to(np.asarray(lb, dtype=float), (count,))
        ub = np.broadcast_to(np.asarray(ub, dtype=float), (count,))
        obj = np.broadcast_to(np.asarray(obj, dtype=float), (count,))
        if binary:
            lb = np.maximum(lb, 0.0)
            ub = np.minimum(ub, 1.0)
        if np.any(np.isnan(lb)) or np.any(np.isnan(ub)) or not np.all(np.isfinite(obj)):
            raise ValueError("variable data must not contain NaN")
        self._lb.extend(lb.tolist())
        self._ub.extend(ub.tolist())
        self._obj.extend(obj.tolist())
        self._binary.extend([bool(binary)] * count)
        base = name or "x"
        if count == 1 and name:
            self.var_names.append(name)
        else:
            self.var_names.extend(f"{base}[{start + i}]" for i in range(count))
        return np.arange(start, start + count)

    def add_constraint(self, cols, coefs, sense: str, rhs: float, name=None) -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown constraint sense {sense!r}")
        cols = np.asarray(cols, dtype=np.int64).ravel()
        coefs = np.asarray(coefs, dtype=float).ravel()
        if cols.shape != coefs.shape:
            raise DimensionMismatch("cols and coefs differ in length")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise IndexError("constraint references an unknown variable")
        if not np.all(np.isfinite(coefs)) or not math.isfinite(rhs):
            raise ValueError("constraint data must be finite")
        row = self.n_rows
        self._rows.append(np.full(cols.size, row, dtype=np.int64))
        self._cols.append(cols)
        self._vals.append(coefs)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        if name:
            self.row_names[row] = name
        return row

    def add_rows(self, matrix, cols, sense, rhs, name=None) -> np.ndarray:
        """Add one row per line of ``matrix`` (dense or sparse) over ``cols``.

        ``sense`` is a single sense or one per row.
        """
        mat = sparse.coo_matrix(matrix)
        n_new = mat.shape[0]
        cols = np.asarray(cols, dtype=np.int64)
        if mat.shape[1] != cols.size:
            raise DimensionMismatch("matrix width differs from the column list")
        rhs = np.broadcast_to(np.asarray(rhs, dtype=float), (n_new,))
        senses = np.broadcast_to(np.asarray(sense), (n_new,))
        if not set(np.unique(senses)) <= set(SENSES):
            raise ValueError("unknown constraint sense")
        if not (np.all(np.isfinite(mat.data)) and np.all(np.isfinite(rhs))):
            raise ValueError("constraint data must be finite")
        if cols.size and (cols.min() < 0 or cols.max() >= self.n_vars):
            raise IndexError("constraint references an unknown variable")
        first = self.n_rows
        self._rows.append(mat.row.astype(np.int64) + first)
        self._cols.append(cols[mat.col])
        self._vals.append(mat.data.astype(float))
        self.senses.extend(senses.tolist())
        self.rhs.extend(rhs.tolist())
        if name:
            for i in range(n_new):
                self.row_names[first + i] = f"{name}[{i}]"
        return np.arange(first, first + n_new)

    def set_objective(self, cols, coefs, sense: str | None = None, constant: float = 0.0):
        self._obj = [0.0] * self.n_vars
        for c, v in zip(np.asarray(cols).ravel(), np.asarray(coefs, dtype=float).ravel()):
            self._obj[int(c)] += float(v)
        if sense is not None:
            self.sense = sense
        self.objective_constant = constant

    def set_bounds(self, col: int, lb: float, ub: float):
        self._lb[col] = float(lb)
        self._ub[col] = float(ub)

    # -- views ------------------------------------------------------------
    objective_constant = 0.0

    @property
    def objective(self) -> np.ndarray:
        return np.asarray(self._obj, dtype=float)

    @property
    def lb(self) -> np.ndarray:
        return np.asarray(self._lb, dtype=float)

    @property
    def ub(self) -> np.ndarray:
        return np.asarray(self._ub, dtype=float)

    @property
    def binary(self) -> np.ndarray:
        return np.asarray(self._binary, dtype=bool)

    @property
    def is_mip(self) -> bool:
        return any(self._binary)

    def matrix(self) -> sparse.csr_matrix:
        if self._rows:
            rows = np.concatenate(self._rows)
            cols = np.concatenate(self._cols)
            vals = np.concatenate(self._vals)
        else:
            rows = cols = np.zeros(0, dtype=np.int64)
            vals = np.zeros(0)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.asarray(self.rhs, dtype=float)
        senses = np.asarray(self.senses)
        lo = np.where(senses == "<=", -INF, rhs)
        hi = np.where(senses == ">=", INF, rhs)
        return lo, hi

    def validate(self):
        lb, ub = self.lb, self.ub
        if np.any(lb > ub):
            bad = int(np.argmax(lb > ub))
            raise ValueError(f"variable {self.var_names[bad]} has lb > ub")
        if np.any(np.isnan(self.objective)):
            raise ValueError("objective contains NaN")

    def evaluate(self, x) -> float:
        return float(self.objective @ np.asarray(x, dtype=float)) + self.objective_constant


@dataclass
class SolveOptions:
    backend: str | None = None
    mip_rel_gap: float = 1e-6
    feasibility_tol: float = 1e-7
    verify_tol: float = FEASIBILITY_TOL
    time_limit: float = INF
    threads: int = 1
    exact_var_cap: int = 60


@dataclass
class SolveResult:
    status: str  # optimal | infeasible | unbounded | limit
    objective: float = math.nan
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    dual_objective: float | None = None
    stats: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class FeasibilityReport:
    max_violation: float
    violated_rows: list[int]
    row_violations: np.ndarray
    bound_violation: float = 0.0
    integrality_violation: float = 0.0

    @property
    def feasible(self) -> bool:
        return not self.violated_rows and self.bound_violation == 0.0


def check_feasibility(problem: LinearProgram, point, tol: float = FEASIBILITY_TOL,
                      scaled: bool = False) -> FeasibilityReport:
    """Evaluate every row at ``point`` and report violations above ``tol``.

    With ``scaled=True`` each row violation is divided by
    ``max(1, |rhs|, max|coef|)`` before comparison, which is how backend
    results are re-verified (Big-M rows carry large coefficients).
    """
    x = np.asarray(point, dtype=float).ravel()
    if x.size != problem.n_vars:
        raise DimensionMismatch(f"point has {x.size} entries, problem has {problem.n_vars} variables")
    if problem.n_rows:
        a = problem.matrix()
        act = a @ x
        rhs = np.asarray(problem.rhs)
        senses = np.asarray(problem.senses)
        viol = np.zeros(problem.n_rows)
        le = senses == "<="
        ge = senses == ">="
        eq = senses == "=="
        viol[le] = np.maximum(act[le] - rhs[le], 0.0)
        viol[ge] = np.maximum(rhs[ge] - act[ge], 0.0)
        viol[eq] = np.abs(act[eq] - rhs[eq])
        if scaled:
            coef_max = np.zeros(problem.n_rows)
            if a.nnz:
                coef_max = np.asarray(abs(a).max(axis=1).todense()).ravel()
            viol = viol / np.maximum.reduce([np.ones_like(rhs), np.abs(rhs), coef_max])
    else:
        viol = np.zeros(0)
    bound = float(max(np.max(problem.lb - x, initial=0.0), np.max(x - problem.ub, initial=0.0)))
    binary = problem.binary
    integ = float(np.max(np.abs(x[binary] - np.round(x[binary])), initial=0.0))
    bad = [int(i) for i in np.flatnonzero(viol > tol)]
    return FeasibilityReport(
        max_violation=float(np.max(viol, initial=0.0)),
        violated_rows=bad,
        row_violations=viol,
        bound_violation=bound if bound > tol else 0.0,
        integrality_violation=integ,
    )


BACKEND_ENV = "CAUS_SOLVER"


def default_backend() -> str:
    return os.environ.get(BACKEND_ENV, "highs")


def solve(problem: LinearProgram, options: SolveOptions | None = None) -> SolveResult:
    options = options or SolveOptions()
    problem.validate()
    backend = options.backend or default_backend()
    runner = _BACKENDS.get(backend)
    if runner is None:
        raise BackendUnavailable(f"unknown solver backend {backend!r}")
    t0 = time.perf_counter()
    result = runner(problem, options)
    result.stats.setdefault("backend", backend)
    result.stats["wall_time"] = time.perf_counter() - t0
    if result.optimal:
        report = check_feasibility(problem, result.x, tol=options.verify_tol, scaled=True)
        result.stats["max_violation"] = report.max_violation
        if report.violated_rows or report.bound_violation > options.verify_tol * 10:
            raise NumericalFailure(
                f"{backend} returned an optimal point violating {len(report.violated_rows)} rows "
                f"(max scaled violation {report.max_violation:.3e})"
            )
        if problem.is_mip:
            x = result.x.copy()
            x[problem.binary] = np.round(x[problem.binary])
            result.x = x
    return result


# -- HiGHS via highspy ------------------------------------------------------

def _solve_highspy(problem: LinearProgram, options: SolveOptions) -> SolveResult:
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise BackendUnavailable("highspy is not installed") from exc

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("threads", int(options.threads))
    h.setOptionValue("random_seed", 0)
    h.setOptionValue("primal_feasibility_tolerance", options.feasibility_tol)
    h.setOptionValue("dual_feasibility_tolerance", options.feasibility_tol)
    h.setOptionValue("mip_feasibility_tolerance", options.feasibility_tol)
    h.setOptionValue("mip_rel_gap", options.mip_rel_gap)
    if math.isfinite(options.time_limit):
        h.setOptionValue("time_limit", float(options.time_limit))

    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = problem.n_vars
    lp.num_row_ = problem.n_rows
    sign = 1.0 if problem.sense == "min" else -1.0
    lp.col_cost_ = sign * problem.objective
    lp.col_lower_ = np.where(np.isinf(problem.lb), -inf, problem.lb)
    lp.col_upper_ = np.where(np.isinf(problem.ub), inf, problem.ub)
    lo, hi = problem.row_bounds()
    lp.row_lower_ = np.where(np.isinf(lo), -inf, lo)
    lp.row_upper_ = np.where(np.isinf(hi), inf, hi)
    csc = problem.matrix().tocsc()
    csc.sort_indices()
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = csc.indptr.astype(np.int32)
    lp.a_matrix_.index_ = csc.indices.astype(np.int32)
    lp.a_matrix_.value_ = csc.data.astype(float)
    if problem.is_mip:
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous
            for b in problem.binary
        ]
    h.passModel(lp)
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    stats = {"mip_gap": float(info.mip_gap) if problem.is_mip else 0.0,
             "simplex_iterations": int(info.simplex_iteration_count)}
    S = highspy.HighsModelStatus
    if status == S.kOptimal:
        sol = h.getSolution()
        x = np.asarray(sol.col_value, dtype=float)
        res = SolveResult("optimal", problem.evaluate(x), x, stats=stats)
        if problem.is_mip:
            stats["dual_bound"] = sign * float(info.mip_dual_bound) + problem.objective_constant
        elif sol.dual_valid:
            y = np.asarray(sol.row_dual, dtype=float)
            rc = np.asarray(sol.col_dual, dtype=float)
            res.duals = sign * y
            res.dual_objective = sign * _dual_objective(problem, y, rc) + problem.objective_constant
        return res
    if status == S.kInfeasible:
        return SolveResult("infeasible", stats=stats)
    if status in (S.kUnbounded, S.kUnboundedOrInfeasible):
        return SolveResult("unbounded" if status == S.kUnbounded else "infeasible", stats=stats)
    if status in (S.kTimeLimit, S.kIterationLimit, S.kSolutionLimit, S.kInterrupt):
        return SolveResult("limit", stats=stats)
    raise SolverFailure(f"HiGHS finished with status {h.modelStatusToString(status)}")


def _dual_objective(problem: LinearProgram, y: np.ndarray, rc: np.ndarray) -> float:
    # Dual objective of the minimization form; active bound picked by dual sign.
    lo, hi = problem.row_bounds()
    row_term = np.where(y > 0, lo, hi)
    row_term = np.where(y == 0, 0.0, row_term)
    col_term = np.where(rc > 0, problem.lb, problem.ub)
    col_term = np.where(rc == 0, 0.0, col_term)
    with np.errstate(invalid="ignore"):
        return float(np.nansum(y * row_term) + np.nansum(rc * col_term))


# -- HiGHS via scipy ----------------------------------------------------------

def _solve_scipy(problem: LinearProgram, options: SolveOptions) -> SolveResult:
    from scipy.optimize import Bounds, LinearConstraint, linprog, milp

    sign = 1.0 if problem.sense == "min" else -1.0
    c = sign * problem.objective
    a = problem.matrix()
    lo, hi = problem.row_bounds()
    if problem.is_mip:
        cons = [LinearConstraint(a, lo, hi)] if problem.n_rows else []
        res = milp(c, constraints=cons, integrality=problem.binary.astype(int),
                   bounds=Bounds(problem.lb, problem.ub),
                   options={"mip_rel_gap": options.mip_rel_gap, "presolve": True})
        code = res.status
        if code == 0:
            x = np.asarray(res.x)
            return SolveResult("optimal", problem.evaluate(x), x)
        return SolveResult({1: "limit", 2: "infeasible", 3: "unbounded"}.get(code, "limit"))
    senses = np.asarray(problem.senses)
    rhs = np.asarray(problem.rhs)
    a = a.tocsr()
    ub_rows = np.flatnonzero(senses != "==")
    flip = np.where(senses[ub_rows] == ">=", -1.0, 1.0)
    a_ub = sparse.diags(flip) @ a[ub_rows] if ub_rows.size else None
    b_ub = flip * rhs[ub_rows] if ub_rows.size else None
    eq_rows = np.flatnonzero(senses == "==")
    a_eq = a[eq_rows] if eq_rows.size else None
    b_eq = rhs[eq_rows] if eq_rows.size else None
    bounds = list(zip(np.where(np.isinf(problem.lb), None, problem.lb),
                      np.where(np.isinf(problem.ub), None, problem.ub)))
    res = linprog(c, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 0:
        x = np.asarray(res.x)
        out = SolveResult("optimal", problem.evaluate(x), x)
        y = np.zeros(problem.n_rows)
        if ub_rows.size:
            y[ub_rows] = flip * res.ineqlin.marginals
        if eq_rows.size:
            y[eq_rows] = res.eqlin.marginals
        out.duals = sign * y
        # marginals are d(obj)/d(rhs), so the dual objective is their pairing with the data
        lb_term = res.lower.marginals * np.where(np.isfinite(problem.lb), problem.lb, 0.0)
        ub_term = res.upper.marginals * np.where(np.isfinite(problem.ub), problem.ub, 0.0)
        dual = float(y @ rhs + lb_term.sum() + ub_term.sum())
        out.dual_objective = sign * dual + problem.objective_constant
        return out
    return SolveResult({1: "limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "limit"))


def _solve_exact(problem: LinearProgram, options: SolveOptions) -> SolveResult:
    from .exact import solve_exact

    if problem.is_mip:
        raise BackendUnavailable("the exact backend solves continuous LPs only")
    if problem.n_vars > options.exact_var_cap:
        raise BackendUnavailable(
            f"exact backend is capped at {options.exact_var_cap} variables, got {problem.n_vars}"
        )
    return solve_exact(problem)


_BACKENDS = {"highs": _solve_highspy, "scipy": _solve_scipy, "exact": _solve_exact}


# -- neutral text format ------------------------------------------------------

def dumps(problem: LinearProgram) -> str:
    """Serialize to the line-oriented constraint-list format.

    ::

        caus-lp 1
        sense min
        var <name> <continuous|binary> <lb> <ub>
        obj <col>:<coef> ...
        con <name> <col>:<coef> ... <sense> <rhs>
    """
    out = ["caus-lp 1", f"sense {problem.sense}"]
    for name, lb, ub, b in zip(problem.var_names, problem.lb, problem.ub, problem.binary):
        out.append(f"var {name} {'binary' if b else 'continuous'} {float(lb)!r} {float(ub)!r}")
    obj = problem.objective
    terms = " ".join(f"{j}:{float(obj[j])!r}" for j in np.flatnonzero(obj))
    out.append(f"obj {terms}".rstrip())
    if problem.objective_constant:
        out.append(f"objconst {float(problem.objective_constant)!r}")
    a = problem.matrix().tocsr()
    for i in range(problem.n_rows):
        lo, hi = a.indptr[i], a.indptr[i + 1]
        terms = " ".join(f"{j}:{float(v)!r}" for j, v in zip(a.indices[lo:hi], a.data[lo:hi]))
        label = problem.row_names.get(i, f"c{i}")
        out.append(f"con {label} {terms} {problem.senses[i]} {float(problem.rhs[i])!r}")
    return "\n".join(out) + "\n"


def loads(text: str) -> LinearProgram:
    from .errors import ParseError

    lines = text.splitlines()
    if not lines or not lines[0].startswith("caus-lp"):
        raise ParseError("missing 'caus-lp' header", line=1, column=1)
    problem = LinearProgram()
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        try:
            tag = parts[0]
            if tag == "sense":
                problem.sense = parts[1]
            elif tag == "var":
                _, name, kind, lb, ub = parts
                problem.add_var(float(lb), float(ub), binary=(kind == "binary"), name=name)
            elif tag == "obj":
                cols, vals = _parse_terms(parts[1:])
                problem.set_objective(cols, vals, constant=problem.objective_constant)
            elif tag == "objconst":
                problem.objective_constant = float(parts[1])
            elif tag == "con":
                cols, vals = _parse_terms(parts[2:-2])
                problem.add_constraint(cols, vals, parts[-2], float(parts[-1]), name=parts[1])
            else:
                raise ValueError(f"unknown record {tag!r}")
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc), line=lineno, column=1) from exc
    return problem


def _parse_terms(tokens):
    cols, vals = [], []
    for tok in tokens:
        j, v = tok.split(":")
        cols.append(int(j))
        vals.append(float(v))
    return cols, vals
