"""Union-of-polytopes uncertainty sets, their mixed-integer encoding, and baselines.

Every set handled here is a Cartesian product over periods of a finite
union of bounded polytopes ``{xi : D xi <= d}``:

* :class:`CausSet` -- one polytope per conditional mixture component, the
  intersection of ``J`` supporting halfspaces of the calibrated ellipsoid;
* :class:`BoxSet` -- a single axis-aligned box per period;
* :class:`UosBaselineSet` -- affine images of the latent polytope
  ``{||eta||_inf <= 1, ||eta||_1 <= phi}``.

The union is encoded for a MILP with one binary per (component, period)
selecting the active polytope, and one auxiliary copy of ``xi_t`` per
(component, period) tied to ``xi_t`` by Big-M rows.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.stats import chi2, norm, qmc

from .errors import (
    DimensionMismatch,
    EmptyBounds,
    EnumerationTooLarge,
    MissingBigM,
    SingularCholesky,
    TooFewDirections,
)
from .gmm import ConditionalComponent, ConditionalGmm
from .solver import LinearProgram, SolveOptions, SolverFailure, solve

MEMBERSHIP_TOL = 1e-9
BIG_M_MARGIN = 1.1


# -- directions ---------------------------------------------------------------

@dataclass(frozen=True)
class DirectionSet:
    directions: np.ndarray  # (J, m)

    @property
    def j(self) -> int:
        return self.directions.shape[0]

    @property
    def m(self) -> int:
        return self.directions.shape[1]


def default_direction_count(m: int) -> int:
    return max(8, 2 * m + 2) if m > 1 else 2


def make_directions(m: int, j: int | None = None, seed: int = 0) -> DirectionSet:
    """Signed coordinate axes followed by ``j - 2m`` extra unit vectors.

    In two dimensions the extras are evenly spaced angles offset from the
    axes (the diagonals for ``j = 8``); in higher dimensions they are
    scrambled Sobol points pushed through the normal quantile function and
    normalized.
    """
    if j is None:
        j = default_direction_count(m)
    if m < 1:
        raise ValueError("dimension must be positive")
    if j < 2 * m:
        raise TooFewDirections(f"need at least {2 * m} directions in dimension {m}, got {j}")
    axes = []
    for i in range(m):
        e = np.zeros(m)
        e[i] = 1.0
        axes.extend([e, -e])
    extra_count = j - 2 * m
    if extra_count == 0:
        extras = np.zeros((0, m))
    elif m == 1:
        extras = np.array([[1.0 if i % 2 == 0 else -1.0] for i in range(extra_count)])
    elif m == 2:
        angles = 2.0 * np.pi * (np.arange(extra_count) + 0.5) / extra_count
        extras = np.column_stack([np.cos(angles), np.sin(angles)])
    else:
        sampler = qmc.Sobol(d=m, scramble=True, seed=seed)
        u = sampler.random(extra_count)
        u = np.clip(u, 1e-12, 1 - 1e-12)
        extras = norm.ppf(u)
        extras /= np.linalg.norm(extras, axis=1, keepdims=True)
    dirs = np.vstack([np.array(axes), extras])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    dirs.setflags(write=False)
    return DirectionSet(dirs)


# -- polytopes ------------------------------------------------------------------

@dataclass(frozen=True)
class SubsetPolytope:
    d_matrix: np.ndarray
    d_vector: np.ndarray
    center: np.ndarray
    cholesky: np.ndarray | None = None

    @property
    def m(self) -> int:
        return self.d_matrix.shape[1]

    def contains(self, point, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(self.d_matrix @ np.asarray(point, dtype=float) <= self.d_vector + tol))

    def contains_many(self, points, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
        pts = np.atleast_2d(points)
        return np.all(pts @ self.d_matrix.T <= self.d_vector + tol, axis=1)

    def pull_inside(self, point) -> np.ndarray:
        """Shrink ``point`` toward the center until every row holds exactly."""
        point = np.asarray(point, dtype=float)
        step = self.d_matrix @ (point - self.center)
        room = self.d_vector - self.d_matrix @ self.center
        theta = 1.0
        for s, r in zip(step, room):
            if s > r and s > 0:
                theta = min(theta, max(r, 0.0) / s)
        return self.center + theta * (point - self.center)

    def vertices(self, tol: float = 1e-9, cap: int = 200_000) -> np.ndarray:
        """Vertices by solving every m-row subsystem and keeping the feasible ones."""
        D, d = self.d_matrix, self.d_vector
        m = self.m
        if math.comb(D.shape[0], m) > cap:
            raise ValueError("too many row subsets for vertex enumeration")
        found = []
        scale = max(1.0, float(np.max(np.abs(d))))
        for rows in itertools.combinations(range(D.shape[0]), m):
            sub = D[list(rows)]
            if abs(np.linalg.det(sub)) < 1e-12:
                continue
            v = np.linalg.solve(sub, d[list(rows)])
            if np.all(D @ v <= d + tol * scale) and not any(
                    np.max(np.abs(v - u)) <= 1e-7 * scale for u in found):
                found.append(v)
        if not found:
            raise SolverFailure("polytope has no vertices (empty or unbounded)")
        return np.array(found)

    def coordinate_bounds(self, options: SolveOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-coordinate LP minimum and maximum over the polytope."""
        lo = np.empty(self.m)
        hi = np.empty(self.m)
        for i in range(self.m):
            for sense, out in (("max", hi), ("min", lo)):
                lp = LinearProgram(sense)
                cols = lp.add_vars(self.m, lb=-math.inf, ub=math.inf, name="xi")
                lp.add_rows(self.d_matrix, cols, "<=", self.d_vector)
                lp.set_objective([cols[i]], [1.0])
                res = solve(lp, options)
                if not res.optimal:
                    raise SolverFailure(f"polytope is {res.status} along coordinate {i}")
                out[i] = res.objective
        return lo, hi

    def to_dict(self) -> dict:
        out = {
            "D": self.d_matrix.ravel().tolist(),
            "d": self.d_vector.tolist(),
            "center": self.center.tolist(),
        }
        if self.cholesky is not None:
            out["cholesky"] = self.cholesky.ravel().tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict, m: int) -> "SubsetPolytope":
        chol = data.get("cholesky")
        return cls(
            np.asarray(data["D"], dtype=float).reshape(-1, m),
            np.asarray(data["d"], dtype=float),
            np.asarray(data["center"], dtype=float),
            None if chol is None else np.asarray(chol, dtype=float).reshape(m, m),
        )


def build_subset_polytope(component: ConditionalComponent, gamma: float,
                          dirs: DirectionSet) -> SubsetPolytope:
    """Supporting-halfspace outer approximation of one calibrated ellipsoid.

    Row ``j`` reads ``v_j' L^{-1} (xi - mu) <= sqrt(gamma)`` with ``L`` the
    lower Cholesky factor of the component covariance.
    """
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if dirs.m != component.mean.size:
        raise DimensionMismatch("direction set and component dimensions differ")
    try:
        chol = linalg.cholesky(component.covariance, lower=True)
    except linalg.LinAlgError as exc:
        raise SingularCholesky("component covariance is not positive definite") from exc
    # rows v_j' L^{-1} = (L^{-T} v_j)'
    d_matrix = linalg.solve_triangular(chol, dirs.directions.T, lower=True, trans="T").T
    d_vector = math.sqrt(gamma) + d_matrix @ component.mean
    return SubsetPolytope(d_matrix, d_vector, np.array(component.mean), chol)


def _positively_spans(dirs: np.ndarray) -> bool:
    m = dirs.shape[1]
    for i in range(m):
        for s in (1.0, -1.0):
            target = np.zeros(m)
            target[i] = s
            lp = LinearProgram("min")
            lam = lp.add_vars(dirs.shape[0], lb=0.0)
            lp.add_rows(dirs.T, lam, "==", target)
            if not solve(lp).optimal:
                return False
    return True


# -- union sets -------------------------------------------------------------------

@dataclass(frozen=True)
class PolytopeUnion:
    """Per-period finite unions of polytopes plus coordinate bounds."""

    periods: tuple[tuple[SubsetPolytope, ...], ...]
    big_m: np.ndarray | None = None  # (T, m)
    lower: np.ndarray | None = None  # (T, m)
    upper: np.ndarray | None = None  # (T, m)
    kind: str = "union"

    @property
    def t(self) -> int:
        return len(self.periods)

    @property
    def k(self) -> int:
        return max(len(p) for p in self.periods)

    @property
    def m(self) -> int:
        return self.periods[0][0].m

    def as_union(self) -> "PolytopeUnion":
        return self

    def with_bounds(self, options: SolveOptions | None = None):
        lo = np.full((self.t, self.m), math.inf)
        hi = np.full((self.t, self.m), -math.inf)
        for t, subsets in enumerate(self.periods):
            for poly in subsets:
                plo, phi = poly.coordinate_bounds(options)
                lo[t] = np.minimum(lo[t], plo)
                hi[t] = np.maximum(hi[t], phi)
        big_m = BIG_M_MARGIN * np.maximum(np.abs(lo), np.abs(hi)) + 1e-6
        return _replace(self, big_m=big_m, lower=lo, upper=hi)

    def to_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "m": self.m,
            "periods": [{"subsets": [p.to_dict() for p in subs]} for subs in self.periods],
        }
        for name in ("big_m", "lower", "upper"):
            val = getattr(self, name)
            if val is not None:
                out[name] = np.asarray(val).tolist()
        return out


def _replace(obj, **changes):
    import dataclasses

    return dataclasses.replace(obj, **changes)


@dataclass(frozen=True)
class CausSet(PolytopeUnion):
    gamma_per_period: tuple[float, ...] = ()
    directions: DirectionSet | None = None
    kind: str = "caus"

    def to_dict(self) -> dict:
        out = super().to_dict()
        for p, g in zip(out["periods"], self.gamma_per_period):
            p["gamma"] = g
        return out


def build_caus(models: Sequence[ConditionalGmm], radii, dirs: DirectionSet,
               share_radius: bool = False, options: SolveOptions | None = None) -> CausSet:
    """Assemble the per-period union of component polytopes.

    ``radii`` holds one :class:`~caus.calibration.CalibratedRadius` (or a
    plain float) per period. With ``share_radius`` every period uses the
    largest radius.
    """
    if len(models) != len(radii):
        raise DimensionMismatch("need one radius per period")
    ks = {mdl.k for mdl in models}
    ms = {mdl.m for mdl in models}
    if len(ks) != 1 or len(ms) != 1:
        raise DimensionMismatch("all periods must share K and m")
    gammas = [float(getattr(r, "gamma", r)) for r in radii]
    if share_radius:
        gammas = [max(gammas)] * len(gammas)
    if not _positively_spans(dirs.directions):
        raise TooFewDirections("direction set does not positively span the space")
    periods = []
    for mdl, gamma in zip(models, gammas):
        polys = tuple(build_subset_polytope(c, gamma, dirs) for c in mdl.components)
        for poly in polys:
            if not poly.contains(poly.center):
                raise ValueError("component mean is outside its own polytope")
        periods.append(polys)
    caus = CausSet(tuple(periods), gamma_per_period=tuple(gammas), directions=dirs)
    return caus.with_bounds(options)


def membership(uset, trajectory, tol: float = MEMBERSHIP_TOL) -> bool:
    """True iff every period's point lies in at least one of that period's polytopes."""
    union = uset.as_union()
    traj = np.asarray(trajectory, dtype=float)
    if traj.ndim == 1 and union.t == 1:
        traj = traj.reshape(1, -1)
    if traj.shape != (union.t, union.m):
        raise DimensionMismatch(f"trajectory shape {traj.shape}, expected {(union.t, union.m)}")
    return all(any(p.contains(traj[t], tol) for p in union.periods[t]) for t in range(union.t))


def membership_many(uset, points, period: int = 0, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Vectorized per-period membership for an (N, m) array of points."""
    union = uset.as_union()
    pts = np.atleast_2d(points)
    inside = np.zeros(pts.shape[0], dtype=bool)
    for poly in union.periods[period]:
        inside |= poly.contains_many(pts, tol)
    return inside


def subset_choice(uset, trajectory, tol: float = 1e-6) -> tuple[int, ...]:
    """Lexicographically smallest subset index containing each period's point."""
    union = uset.as_union()
    out = []
    for t, polys in enumerate(union.periods):
        viol = [float(np.max(p.d_matrix @ trajectory[t] - p.d_vector)) for p in polys]
        hits = [k for k, v in enumerate(viol) if v <= tol]
        out.append(hits[0] if hits else int(np.argmin(viol)))
    return tuple(out)


def repair_trajectory(uset, trajectory, choice=None) -> np.ndarray:
    """Pull each period's point exactly inside its selected polytope."""
    union = uset.as_union()
    traj = np.array(trajectory, dtype=float)
    choice = choice if choice is not None else subset_choice(union, traj)
    for t, k in enumerate(choice):
        traj[t] = union.periods[t][k].pull_inside(traj[t])
    return traj


# -- MILP encoding ------------------------------------------------------------------

@dataclass
class MilpEncoding:
    problem: LinearProgram
    xi: np.ndarray  # (T, m) column indices
    alpha: np.ndarray  # (K, T)
    w: np.ndarray  # (K, T, m)
    big_m: np.ndarray  # (T, m)
    rows: list[int] = field(default_factory=list)

    @property
    def n_binaries(self) -> int:
        return int(self.alpha.size)

    @property
    def n_auxiliaries(self) -> int:
        return int(self.w.size)

    def decode(self, x) -> tuple[np.ndarray, tuple[int, ...]]:
        x = np.asarray(x)
        traj = x[self.xi]
        choice = tuple(int(np.argmax(x[self.alpha[:, t]])) for t in range(self.alpha.shape[1]))
        return traj, choice


def encode_milp(uset, problem: LinearProgram | None = None, xi_cols=None) -> MilpEncoding:
    """Add the binary-indicator Big-M description of the union set.

    When ``xi_cols`` (a (T, m) index array) is given the encoding constrains
    those existing columns; otherwise fresh ``xi`` columns are created.
    """
    union = uset.as_union()
    if union.big_m is None:
        raise MissingBigM("set has no Big-M bounds; call with_bounds() first")
    problem = problem if problem is not None else LinearProgram("max", name="worst_case")
    T, K, m = union.t, union.k, union.m
    big_m = np.asarray(union.big_m, dtype=float)
    if xi_cols is None:
        xi = np.stack([problem.add_vars(m, lb=-big_m[t], ub=big_m[t], name=f"xi_{t}") for t in range(T)])
    else:
        xi = np.asarray(xi_cols).reshape(T, m)
    alpha = np.stack([problem.add_vars(T, binary=True, name=f"alpha_{k}") for k in range(K)])
    w = np.stack([
        np.stack([problem.add_vars(m, lb=-big_m[t], ub=big_m[t], name=f"w_{k}_{t}") for t in range(T)])
        for k in range(K)
    ])
    rows: list[int] = []
    j_max = max(p.d_matrix.shape[0] for subs in union.periods for p in subs)
    for t in range(T):
        rows.append(problem.add_constraint(alpha[:, t], np.ones(K), "==", 1.0, name=f"sos1_{t}"))
        # sum_k (D_k w_kt - alpha_kt d_k) <= 0, rows padded to a common count
        for r in range(j_max):
            cols, coefs = [], []
            for k, poly in enumerate(union.periods[t]):
                if r < poly.d_matrix.shape[0]:
                    cols.extend(w[k, t])
                    coefs.extend(poly.d_matrix[r])
                    cols.append(alpha[k, t])
                    coefs.append(-poly.d_vector[r])
            rows.append(problem.add_constraint(cols, coefs, "<=", 0.0, name=f"face_{t}_{r}"))
        for k in range(len(union.periods[t])):
            for i in range(m):
                M = big_m[t, i]
                a, x_, wk = alpha[k, t], xi[t, i], w[k, t, i]
                rows.append(problem.add_constraint([x_, wk, a], [1.0, -1.0, M], "<=", M))
                rows.append(problem.add_constraint([x_, wk, a], [-1.0, 1.0, M], "<=", M))
                rows.append(problem.add_constraint([wk, a], [1.0, -M], "<=", 0.0))
                rows.append(problem.add_constraint([wk, a], [-1.0, -M], "<=", 0.0))
        # fewer subsets in this period than K: the spare indicators stay off
        for k in range(len(union.periods[t]), K):
            problem.set_bounds(int(alpha[k, t]), 0.0, 0.0)
    return MilpEncoding(problem, xi, alpha, w, big_m, rows)


def _combo_lp(union: PolytopeUnion, combo, objective: np.ndarray, options=None):
    lp = LinearProgram("max")
    T, m = union.t, union.m
    xi = np.stack([lp.add_vars(m, lb=-math.inf, ub=math.inf) for _ in range(T)])
    for t, k in enumerate(combo):
        poly = union.periods[t][k]
        lp.add_rows(poly.d_matrix, xi[t], "<=", poly.d_vector)
    lp.set_objective(xi.ravel(), objective.ravel())
    res = solve(lp, options)
    if not res.optimal:
        raise SolverFailure(f"subset combination {combo} LP is {res.status}")
    return res.objective, res.x[xi]


def worst_case_enumerate(uset, objective, cap: int = 10**6, options: SolveOptions | None = None):
    """Maximize a linear functional over the set by solving one LP per subset combination.

    Returns ``(value, trajectory, combination)``; ties keep the
    lexicographically smallest combination.
    """
    union = uset.as_union()
    objective = np.asarray(objective, dtype=float).reshape(union.t, union.m)
    sizes = [len(p) for p in union.periods]
    if math.prod(sizes) > cap:
        raise EnumerationTooLarge(f"{math.prod(sizes)} subset combinations exceed the cap {cap}")
    best = None
    for combo in itertools.product(*(range(s) for s in sizes)):
        value, traj = _combo_lp(union, combo, objective, options)
        if best is None or value > best[0] + 1e-9 * max(1.0, abs(best[0])):
            best = (value, traj, combo)
    return best


def worst_case_milp(uset, objective, options: SolveOptions | None = None):
    """Same maximization through the Big-M encoding; the decoded subset choice
    is polished with one LP so the value is exact for that choice."""
    union = uset.as_union()
    objective = np.asarray(objective, dtype=float).reshape(union.t, union.m)
    enc = encode_milp(union)
    enc.problem.set_objective(enc.xi.ravel(), objective.ravel(), sense="max")
    res = solve(enc.problem, options)
    if not res.optimal:
        raise SolverFailure(f"worst-case MILP is {res.status}")
    _, choice = enc.decode(res.x)
    value, traj = _combo_lp(union, choice, objective, options)
    return value, traj, choice, res.objective


# -- baselines ------------------------------------------------------------------------

@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray  # (T, m)
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_2d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_2d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape:
            raise DimensionMismatch("lower and upper bounds differ in shape")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise EmptyBounds("box bounds must be finite")
        if np.any(lo > hi):
            raise EmptyBounds("lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def t(self) -> int:
        return self.lower.shape[0]

    @property
    def m(self) -> int:
        return self.lower.shape[1]

    def contains(self, trajectory, tol: float = MEMBERSHIP_TOL) -> bool:
        traj = np.asarray(trajectory)
        return bool(np.all(traj >= self.lower - tol) and np.all(traj <= self.upper + tol))

    def as_union(self) -> PolytopeUnion:
        eye = np.eye(self.m)
        periods = tuple(
            (SubsetPolytope(np.vstack([eye, -eye]), np.concatenate([hi, -lo]), 0.5 * (lo + hi)),)
            for lo, hi in zip(self.lower, self.upper)
        )
        big_m = BIG_M_MARGIN * np.maximum(np.abs(self.lower), np.abs(self.upper)) + 1e-6
        return PolytopeUnion(periods, big_m, self.lower.copy(), self.upper.copy(), kind="box")

    def to_dict(self) -> dict:
        return {"kind": "box", "lower": self.lower.tolist(), "upper": self.upper.tolist()}


def build_box(samples=None, lower=None, upper=None) -> BoxSet:
    """Box from per-period sample extremes or from explicit bounds.

    ``samples`` is a sequence over periods of (N, m) arrays.
    """
    if samples is not None:
        lo = [np.min(np.atleast_2d(s), axis=0) for s in samples]
        hi = [np.max(np.atleast_2d(s), axis=0) for s in samples]
        return BoxSet(np.array(lo), np.array(hi))
    if lower is None or upper is None:
        raise EmptyBounds("need samples or both bounds")
    return BoxSet(lower, upper)


def singleton_set(trajectory) -> PolytopeUnion:
    traj = np.atleast_2d(np.asarray(trajectory, dtype=float))
    box = BoxSet(traj, traj)
    return box.as_union()


def latent_polytope(m: int, phi: float) -> tuple[np.ndarray, np.ndarray]:
    """H-representation of ``{||eta||_inf <= 1, ||eta||_1 <= phi}``."""
    eye = np.eye(m)
    signs = np.array(list(itertools.product((1.0, -1.0), repeat=m)))
    h = np.vstack([eye, -eye, signs])
    rhs = np.concatenate([np.ones(2 * m), np.full(len(signs), float(phi))])
    return h, rhs


def _sqrtm_spd(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    return (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T


@dataclass(frozen=True)
class UosBaselineSet:
    centers: tuple[tuple[np.ndarray, ...], ...]  # per period, per component
    factors: tuple[tuple[np.ndarray, ...], ...]  # Lambda * Sigma^{1/2}
    budgets: tuple[float, ...]  # per component
    scale: float

    def as_union(self) -> PolytopeUnion:
        return self._union

    @cached_property
    def _union(self) -> PolytopeUnion:
        m = self.centers[0][0].size
        periods = []
        for centers, factors in zip(self.centers, self.factors):
            polys = []
            for mu, a, phi in zip(centers, factors, self.budgets):
                h, rhs = latent_polytope(m, phi)
                a_inv = np.linalg.inv(a)
                d_matrix = h @ a_inv
                polys.append(SubsetPolytope(d_matrix, rhs + d_matrix @ mu, np.array(mu)))
            periods.append(tuple(polys))
        return PolytopeUnion(tuple(periods), kind="uos").with_bounds()

    def to_dict(self) -> dict:
        return {
            "kind": "uos",
            "scale": self.scale,
            "budgets": list(self.budgets),
            "centers": [[c.tolist() for c in cs] for cs in self.centers],
            "factors": [[f.ravel().tolist() for f in fs] for fs in self.factors],
        }


def default_uos_scale(m: int, level: float = 0.95) -> float:
    return math.sqrt(chi2.ppf(level, m))


def build_uos_baseline(model: ConditionalGmm, lam: float | None = None, phi=None,
                       periods: int = 1) -> UosBaselineSet:
    """Latent-budget union-of-subsets set from a covariate-free mixture."""
    m = model.m
    lam = default_uos_scale(m) if lam is None else float(lam)
    if lam <= 0:
        raise ValueError("scale must be positive")
    phis = [float(m)] * model.k if phi is None else list(np.broadcast_to(phi, (model.k,)))
    if any(not (0 < p <= m) for p in phis):
        raise ValueError("budgets must lie in (0, m]")
    centers = tuple(np.array(c.mean) for c in model.components)
    factors = tuple(lam * _sqrtm_spd(c.covariance) for c in model.components)
    return UosBaselineSet(
        tuple(centers for _ in range(periods)),
        tuple(factors for _ in range(periods)),
        tuple(float(p) for p in phis),
        lam,
    )


# -- serialization --------------------------------------------------------------------

def set_to_json(uset) -> str:
    return json.dumps(uset.to_dict())


def set_from_dict(data: dict):
    kind = data.get("kind", "union")
    if kind == "box":
        return BoxSet(np.asarray(data["lower"]), np.asarray(data["upper"]))
    if kind == "uos":
        centers = tuple(tuple(np.asarray(c) for c in cs) for cs in data["centers"])
        m = centers[0][0].size
        factors = tuple(tuple(np.asarray(f).reshape(m, m) for f in fs) for fs in data["factors"])
        return UosBaselineSet(centers, factors, tuple(data["budgets"]), float(data["scale"]))
    m = int(data["m"])
    periods = tuple(
        tuple(SubsetPolytope.from_dict(s, m) for s in p["subsets"]) for p in data["periods"]
    )
    extra = {k: np.asarray(data[k]) for k in ("big_m", "lower", "upper") if k in data}
    if kind == "caus":
        gammas = tuple(float(p["gamma"]) for p in data["periods"])
        return CausSet(periods, gamma_per_period=gammas, **extra)
    return PolytopeUnion(periods, kind=kind, **extra)


def set_from_json(text: str):
    return set_from_dict(json.loads(text))
