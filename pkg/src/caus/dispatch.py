"""Two-stage robust unit commitment over union-of-polytopes uncertainty sets.

The instance is assembled into the abstract matrix form

    min  c'X + max_{xi in W} min_Y b'Y
    s.t. A X (<=, ==) h
         E X + G Y (<=, ==) l - U xi

with ``X`` the binary commitment/startup/shutdown schedule and ``Y`` the
dispatch (generation, load shedding, spillage, line flows). Shedding and
spillage are penalized slacks, so every ``(X, xi)`` has a feasible recourse.

The min-max-min problem is solved by column-and-constraint generation. The
worst-case subproblem replaces the inner LP by its KKT system (Big-M
complementarity) and either embeds the binary-indicator encoding of the
union set (one MILP, size linear in K and T) or enumerates every subset
combination (K**T MILPs, kept as the correctness oracle).
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import (
    DimensionMismatch,
    EnumerationTooLarge,
    InconsistentInstance,
    IterationLimit,
    SolverFailure,
)
from .files import read_json
from .gmm import ConditionalGmm, sample_conditional
from .sets import PolytopeUnion, encode_milp, membership, repair_trajectory
from .solver import LinearProgram, SolveOptions, solve

log = logging.getLogger(__name__)

SLACK_TOL = 1e-6


# -- instance -----------------------------------------------------------------

@dataclass(frozen=True)
class Unit:
    name: str
    bus: str
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    min_up: int = 1
    min_down: int = 1
    cost_commit: float = 0.0
    cost_startup: float = 0.0
    cost_energy: float = 0.0
    initial_on: bool = False

    @property
    def startup_ramp(self) -> float:
        return max(self.p_min, self.ramp_up)

    @property
    def shutdown_ramp(self) -> float:
        return max(self.p_min, self.ramp_down)


@dataclass(frozen=True)
class Line:
    name: str
    from_bus: str
    to_bus: str
    capacity: float


@dataclass(frozen=True)
class WindFarm:
    name: str
    bus: str


@dataclass(frozen=True)
class UcInstance:
    loads: tuple[float, ...]
    units: tuple[Unit, ...]
    wind_farms: tuple[WindFarm, ...] = ()
    buses: tuple[str, ...] = ("bus1",)
    load_share: dict | None = None
    lines: tuple[Line, ...] = ()
    shed_penalty: float = 1000.0
    spill_penalty: float = 500.0
    name: str = "instance"

    def __post_init__(self):
        object.__setattr__(self, "loads", tuple(float(v) for v in self.loads))
        object.__setattr__(self, "units", tuple(self.units))
        object.__setattr__(self, "wind_farms", tuple(self.wind_farms))
        object.__setattr__(self, "buses", tuple(self.buses))
        object.__setattr__(self, "lines", tuple(self.lines))
        share = self.load_share or {self.buses[0]: 1.0}
        object.__setattr__(self, "load_share", dict(share))
        self.validate()

    @property
    def periods(self) -> int:
        return len(self.loads)

    @property
    def m(self) -> int:
        return len(self.wind_farms)

    def validate(self):
        buses = set(self.buses)
        if not self.loads:
            raise InconsistentInstance("instance has no periods")
        if any(v < 0 for v in self.loads):
            raise InconsistentInstance("loads must be nonnegative")
        for u in self.units:
            if u.bus not in buses:
                raise InconsistentInstance(f"unit {u.name} sits on unknown bus {u.bus}")
            if not 0 <= u.p_min <= u.p_max:
                raise InconsistentInstance(f"unit {u.name} needs 0 <= p_min <= p_max")
            if min(u.cost_commit, u.cost_startup, u.cost_energy, u.ramp_up, u.ramp_down) < 0:
                raise InconsistentInstance(f"unit {u.name} has a negative cost or ramp")
            if u.min_up < 1 or u.min_down < 1:
                raise InconsistentInstance(f"unit {u.name} needs min_up, min_down >= 1")
        for w in self.wind_farms:
            if w.bus not in buses:
                raise InconsistentInstance(f"wind farm {w.name} sits on unknown bus {w.bus}")
        for ln in self.lines:
            if ln.from_bus not in buses or ln.to_bus not in buses:
                raise InconsistentInstance(f"line {ln.name} references an unknown bus")
            if not (ln.capacity >= 0 and math.isfinite(ln.capacity)):
                raise InconsistentInstance(f"line {ln.name} needs a finite nonnegative capacity")
        if set(self.load_share) - buses:
            raise InconsistentInstance("load share references an unknown bus")
        if abs(sum(self.load_share.values()) - 1.0) > 1e-9:
            raise InconsistentInstance("load shares must sum to 1")
        top = max((u.cost_energy for u in self.units), default=0.0)
        if not self.shed_penalty > top:
            raise InconsistentInstance("shed penalty must exceed every energy cost")
        if self.spill_penalty < 0:
            raise InconsistentInstance("spill penalty must be nonnegative")
        if len(self.buses) > 1 and not self.lines:
            raise InconsistentInstance("a multi-bus instance needs lines")

    def truncated(self, periods: int) -> "UcInstance":
        return UcInstance(self.loads[:periods], self.units, self.wind_farms, self.buses,
                          self.load_share, self.lines, self.shed_penalty, self.spill_penalty,
                          f"{self.name}[:{periods}]")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "loads": list(self.loads),
            "buses": list(self.buses),
            "load_share": dict(self.load_share),
            "units": [u.__dict__.copy() for u in self.units],
            "wind_farms": [w.__dict__.copy() for w in self.wind_farms],
            "lines": [{"name": ln.name, "from": ln.from_bus, "to": ln.to_bus,
                       "capacity": ln.capacity} for ln in self.lines],
            "shed_penalty": self.shed_penalty,
            "spill_penalty": self.spill_penalty,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "UcInstance":
        try:
            units = tuple(Unit(**u) for u in data["units"])
            farms = tuple(WindFarm(**w) for w in data.get("wind_farms", []))
            lines = tuple(Line(ln.get("name", f"l{i}"), ln["from"], ln["to"], float(ln["capacity"]))
                          for i, ln in enumerate(data.get("lines", [])))
            return cls(
                loads=tuple(data["loads"]),
                units=units,
                wind_farms=farms,
                buses=tuple(data.get("buses", ["bus1"])),
                load_share=data.get("load_share"),
                lines=lines,
                shed_penalty=float(data.get("shed_penalty", 1000.0)),
                spill_penalty=float(data.get("spill_penalty", 500.0)),
                name=data.get("name", "instance"),
            )
        except (KeyError, TypeError) as exc:
            raise InconsistentInstance(f"malformed instance: {exc}") from exc

    @classmethod
    def load(cls, path) -> "UcInstance":
        return cls.from_dict(read_json(path))


# -- matrix form --------------------------------------------------------------

@dataclass
class MatrixForm:
    instance: UcInstance
    c: np.ndarray
    A: sparse.csr_matrix
    a_senses: np.ndarray
    h: np.ndarray
    b: np.ndarray
    E: sparse.csr_matrix
    G: sparse.csr_matrix
    U: sparse.csr_matrix
    l: np.ndarray
    g_senses: np.ndarray
    x_index: dict
    y_index: dict
    row_labels: list
    shed_cols: np.ndarray
    spill_cols: np.ndarray

    @property
    def t(self) -> int:
        return self.instance.periods

    @property
    def m(self) -> int:
        return self.instance.m

    @property
    def nx(self) -> int:
        return self.c.size

    @property
    def ny(self) -> int:
        return self.b.size

    @property
    def n_xi(self) -> int:
        return self.t * self.m

    def xi_col(self, t: int, farm: int) -> int:
        return t * self.m + farm

    def price_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Range of the recourse cost's subgradient in each xi coordinate.

        Every wind bus carries unbounded shedding and spillage, so one more
        MW of wind costs at most one more MW spilled and one less costs at
        most one more MW shed.
        """
        inst = self.instance
        n = self.n_xi
        return np.full(n, -inst.shed_penalty), np.full(n, inst.spill_penalty)

    def recourse_rhs(self, x, xi) -> np.ndarray:
        return self.l - self.E @ np.asarray(x, dtype=float) - self.U @ np.asarray(xi, dtype=float).ravel()

    def dimension_report(self) -> dict:
        return {
            "first_stage_vars": int(self.nx),
            "first_stage_rows": int(self.A.shape[0]),
            "recourse_vars": int(self.ny),
            "recourse_rows": int(self.G.shape[0]),
            "recourse_equalities": int(np.sum(self.g_senses == "==")),
            "uncertainty_columns": int(self.U.shape[1]),
            "u_nonzeros": int(self.U.nnz),
        }


class _Rows:
    """Accumulates rows as {col: coef} maps for a fixed column count."""

    def __init__(self):
        self.data, self.senses, self.rhs, self.labels = [], [], [], []

    def add(self, coefs: dict, sense: str, rhs: float, label):
        self.data.append(coefs)
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.labels.append(label)
        return len(self.data) - 1

    def matrix(self, ncols) -> sparse.csr_matrix:
        rows, cols, vals = [], [], []
        for i, coefs in enumerate(self.data):
            for j, v in coefs.items():
                rows.append(i)
                cols.append(j)
                vals.append(v)
        return sparse.csr_matrix((vals, (rows, cols)), shape=(len(self.data), ncols))


def assemble(instance: UcInstance) -> MatrixForm:
    inst = instance
    T, units, farms = inst.periods, inst.units, inst.wind_farms
    m = len(farms)

    # first stage: u, v (startup), w (shutdown)
    x_index = {}
    for kind in ("u", "v", "w"):
        for g, _ in enumerate(units):
            for t in range(T):
                x_index[(kind, g, t)] = len(x_index)
    nx = len(x_index)
    c = np.zeros(nx)
    for g, un in enumerate(units):
        for t in range(T):
            c[x_index[("u", g, t)]] = un.cost_commit
            c[x_index[("v", g, t)]] = un.cost_startup

    a_rows = _Rows()
    for g, un in enumerate(units):
        init = 1.0 if un.initial_on else 0.0
        for t in range(T):
            u, v, w = (x_index[(k, g, t)] for k in ("u", "v", "w"))
            coefs = {u: 1.0, v: -1.0, w: 1.0}
            if t > 0:
                coefs[x_index[("u", g, t - 1)]] = -1.0
                a_rows.add(coefs, "==", 0.0, ("logic", un.name, t))
            else:
                a_rows.add(coefs, "==", init, ("logic", un.name, t))
            a_rows.add({v: 1.0, w: 1.0}, "<=", 1.0, ("onoff", un.name, t))
            up = {x_index[("v", g, s)]: 1.0 for s in range(max(0, t - un.min_up + 1), t + 1)}
            up[u] = up.get(u, 0.0) - 1.0
            a_rows.add(up, "<=", 0.0, ("min_up", un.name, t))
            down = {x_index[("w", g, s)]: 1.0 for s in range(max(0, t - un.min_down + 1), t + 1)}
            down[u] = down.get(u, 0.0) + 1.0
            a_rows.add(down, "<=", 1.0, ("min_down", un.name, t))

    # recourse columns
    # shedding wherever net load can be positive, spillage wherever it can be
    # negative; together they keep every bus balanceable for any xi
    wind_buses = {w.bus for w in farms}
    load_buses = [bus for bus in inst.buses
                  if inst.load_share.get(bus, 0.0) > 0 or bus in wind_buses]
    spill_buses = [bus for bus in inst.buses
                   if any(u.bus == bus for u in units) or bus in wind_buses]
    y_index = {}
    for t in range(T):
        for g in range(len(units)):
            y_index[("p", g, t)] = len(y_index)
        for bus in load_buses:
            y_index[("shed", bus, t)] = len(y_index)
        for bus in spill_buses:
            y_index[("spill", bus, t)] = len(y_index)
        for li in range(len(inst.lines)):
            y_index[("flow", li, t)] = len(y_index)
    ny = len(y_index)
    b = np.zeros(ny)
    for key, col in y_index.items():
        kind, who, _ = key
        if kind == "p":
            b[col] = units[who].cost_energy
        elif kind == "shed":
            b[col] = inst.shed_penalty
        elif kind == "spill":
            b[col] = inst.spill_penalty

    e_rows, g_rows, u_rows = [], _Rows(), []

    def add(ecoefs, gcoefs, ucoefs, sense, rhs, label):
        g_rows.add(gcoefs, sense, rhs, label)
        e_rows.append(ecoefs)
        u_rows.append(ucoefs)

    for t in range(T):
        for bus in inst.buses:
            gco = {}
            for g, un in enumerate(units):
                if un.bus == bus:
                    gco[y_index[("p", g, t)]] = 1.0
            if bus in load_buses:
                gco[y_index[("shed", bus, t)]] = 1.0
            if bus in spill_buses:
                gco[y_index[("spill", bus, t)]] = -1.0
            for li, ln in enumerate(inst.lines):
                if ln.from_bus == bus:
                    gco[y_index[("flow", li, t)]] = gco.get(y_index[("flow", li, t)], 0.0) - 1.0
                if ln.to_bus == bus:
                    gco[y_index[("flow", li, t)]] = gco.get(y_index[("flow", li, t)], 0.0) + 1.0
            uco = {t * m + f: 1.0 for f, w in enumerate(farms) if w.bus == bus}
            load = inst.loads[t] * inst.load_share.get(bus, 0.0)
            add({}, gco, uco, "==", load, ("balance", bus, t))
        for g, un in enumerate(units):
            p = y_index[("p", g, t)]
            u = x_index[("u", g, t)]
            add({u: -un.p_max}, {p: 1.0}, {}, "<=", 0.0, ("pmax", un.name, t))
            add({u: un.p_min}, {p: -1.0}, {}, "<=", 0.0, ("pmin", un.name, t))
            if t > 0:
                p_prev = y_index[("p", g, t - 1)]
                u_prev = x_index[("u", g, t - 1)]
                v = x_index[("v", g, t)]
                w = x_index[("w", g, t)]
                add({u_prev: -un.ramp_up, v: -un.startup_ramp}, {p: 1.0, p_prev: -1.0}, {},
                    "<=", 0.0, ("ramp_up", un.name, t))
                add({u: -un.ramp_down, w: -un.shutdown_ramp}, {p_prev: 1.0, p: -1.0}, {},
                    "<=", 0.0, ("ramp_down", un.name, t))
        for bus in load_buses:
            add({}, {y_index[("shed", bus, t)]: -1.0}, {}, "<=", 0.0, ("shed_lo", bus, t))
        for bus in spill_buses:
            add({}, {y_index[("spill", bus, t)]: -1.0}, {}, "<=", 0.0, ("spill_lo", bus, t))
        for li, ln in enumerate(inst.lines):
            col = y_index[("flow", li, t)]
            add({}, {col: 1.0}, {}, "<=", ln.capacity, ("flow_hi", ln.name, t))
            add({}, {col: -1.0}, {}, "<=", ln.capacity, ("flow_lo", ln.name, t))

    E = _Rows()
    E.data = e_rows
    Um = _Rows()
    Um.data = u_rows
    return MatrixForm(
        instance=inst,
        c=c,
        A=a_rows.matrix(nx),
        a_senses=np.array(a_rows.senses),
        h=np.array(a_rows.rhs),
        b=b,
        E=E.matrix(nx),
        G=g_rows.matrix(ny),
        U=Um.matrix(T * m),
        l=np.array(g_rows.rhs),
        g_senses=np.array(g_rows.senses),
        x_index=x_index,
        y_index=y_index,
        row_labels=g_rows.labels,
        shed_cols=np.array([col for key, col in y_index.items() if key[0] == "shed"], dtype=int),
        spill_cols=np.array([col for key, col in y_index.items() if key[0] == "spill"], dtype=int),
    )


# -- shared model pieces ---------------------------------------------------------

def _add_first_stage(lp: LinearProgram, form: MatrixForm) -> np.ndarray:
    x = lp.add_vars(form.nx, binary=True, obj=form.c, name="X")
    if form.A.shape[0]:
        lp.add_rows(form.A, x, form.a_senses, form.h)
    return x


def _add_recourse_blocks(lp: LinearProgram, form: MatrixForm, x_cols, scenarios, weights,
                         fixed_x=None) -> list[np.ndarray]:
    """Append one recourse copy per scenario; ``weights`` scale each copy's cost.

    With ``fixed_x`` the first stage enters as a constant right-hand side and
    ``x_cols`` is ignored.
    """
    scen = [np.asarray(s, dtype=float).ravel() for s in scenarios]
    S = len(scen)
    ny = form.ny
    y_all = lp.add_vars(S * ny, lb=-math.inf, ub=math.inf,
                        obj=np.concatenate([w * form.b for w in weights]), name="Y")
    G = sparse.block_diag([form.G] * S, format="csr")
    rhs = np.concatenate([form.l - form.U @ s for s in scen])
    senses = np.tile(form.g_senses, S)
    if fixed_x is None:
        mat = sparse.hstack([sparse.vstack([form.E] * S), G], format="csr")
        cols = np.concatenate([x_cols, y_all])
    else:
        rhs = rhs - np.tile(form.E @ np.asarray(fixed_x, dtype=float), S)
        mat = G
        cols = y_all
    lp.add_rows(mat, cols, senses, rhs)
    return [y_all[s * ny:(s + 1) * ny] for s in range(S)]


@dataclass
class DispatchResult:
    cost: float
    commitment: np.ndarray
    dispatch: list
    first_stage_cost: float
    recourse_cost: float
    stats: dict = field(default_factory=dict)


def solve_deterministic(form: MatrixForm, xi, options: SolveOptions | None = None) -> DispatchResult:
    """Single MILP with the uncertainty fixed at ``xi``."""
    xi = np.asarray(xi, dtype=float).ravel()
    if xi.size != form.n_xi:
        raise DimensionMismatch(f"xi has {xi.size} entries, expected {form.n_xi}")
    return solve_saa(form, [xi], options=options)


def solve_saa(form: MatrixForm, scenarios, weights=None, options: SolveOptions | None = None) -> DispatchResult:
    """Sample-average approximation: one recourse copy per scenario."""
    S = len(scenarios)
    weights = np.full(S, 1.0 / S) if weights is None else np.asarray(weights, dtype=float)
    lp = LinearProgram("min", name="saa")
    x = _add_first_stage(lp, form)
    ys = _add_recourse_blocks(lp, form, x, scenarios, weights)
    res = solve(lp, options)
    if not res.optimal:
        raise SolverFailure(f"deterministic/SAA model is {res.status}")
    X = np.round(res.x[x])
    first = float(form.c @ X)
    return DispatchResult(res.objective, X, [res.x[y] for y in ys], first, res.objective - first,
                          dict(res.stats))


def solve_recourse(form: MatrixForm, x, xi, options: SolveOptions | None = None):
    """Recourse LP value and dispatch for fixed commitment and realization."""
    lp = LinearProgram("min", name="recourse")
    (y,) = _add_recourse_blocks(lp, form, None, [xi], [1.0], fixed_x=x)
    res = solve(lp, options)
    if not res.optimal:
        raise SolverFailure(f"recourse LP is {res.status}")
    return res.objective, res.x[y], res


# -- worst-case subproblem ----------------------------------------------------------

@dataclass
class SubproblemResult:
    value: float
    trajectory: np.ndarray  # (T, m)
    choice: tuple
    milp_objective: float
    stats: dict = field(default_factory=dict)


def _duality_model(form: MatrixForm, x, union: PolytopeUnion, combo=None):
    """max over xi and recourse duals of the dual objective.

    The recourse value is convex in xi, so its maximum over each polytope is
    attained at a vertex. Each period picks one vertex of one subset through
    binaries ``beta``; the bilinear price-times-xi term is written with one
    copy of the price vector per vertex, switched off unless that vertex is
    picked (the convex hull of the disjunction, valid under the price
    bounds of :meth:`MatrixForm.price_bounds`). The union-set encoding is
    attached to the same xi columns with its indicators and auxiliaries tied
    to the vertex choice. ``combo`` restricts period t to subset combo[t].
    """
    T, m = form.t, form.m
    senses = form.g_senses
    ineq = np.flatnonzero(senses == "<=")
    eq = np.flatnonzero(senses == "==")
    base = form.l - form.E @ np.asarray(x, dtype=float)

    lp = LinearProgram("max", name="dual_subproblem")
    lam = lp.add_vars(ineq.size, lb=0.0, ub=math.inf, obj=-base[ineq], name="lam")
    nu = lp.add_vars(eq.size, lb=-math.inf, ub=math.inf, obj=-base[eq], name="nu")
    duals = np.concatenate([lam, nu])
    order = np.concatenate([ineq, eq])
    lp.add_rows(form.G[order].T.tocsr(), duals, "==", -form.b)
    lo = np.asarray(union.lower, dtype=float).reshape(T, m)
    hi = np.asarray(union.upper, dtype=float).reshape(T, m)
    # pi . xi = pi . ref + pi . (xi - ref); only the second term needs the
    # disjunction, and centering keeps its relaxation tight
    ref = 0.5 * (lo + hi)
    # pi = U' [lam; nu], the price of each uncertainty coordinate
    p_lo, p_hi = form.price_bounds()
    pi = lp.add_vars(T * m, lb=p_lo, ub=p_hi, obj=ref.ravel(), name="pi")
    lp.add_rows(sparse.hstack([form.U[order].T, -sparse.identity(T * m)], format="csr"),
                np.concatenate([duals, pi]), "==", 0.0)
    pi = pi.reshape(T, m)
    p_lo, p_hi = p_lo.reshape(T, m), p_hi.reshape(T, m)

    xi = np.stack([lp.add_vars(m, lb=lo[t], ub=hi[t], name=f"xi_{t}") for t in range(T)])
    enc = encode_milp(union, lp, xi_cols=xi)
    # pi . xi = pi . ref + pi . (xi - ref); only the second term needs the
    # disjunction, and centering keeps its relaxation tight
    for t in range(T):
        betas, verts_all, piv_parts = [], [], []
        for k, poly in enumerate(union.periods[t]):
            verts = poly.vertices()
            allowed = combo is None or combo[t] == k
            beta = lp.add_vars(len(verts), binary=True, ub=1.0 if allowed else 0.0, name=f"beta_{t}_{k}")
            betas.append(beta)
            verts_all.append(verts)
            # alpha_kt = sum_v beta_v and w_kt = sum_v beta_v vertex_v
            lp.add_constraint(np.concatenate([[enc.alpha[k, t]], beta]),
                              np.concatenate([[1.0], -np.ones(len(verts))]), "==", 0.0)
            for i in range(m):
                lp.add_constraint(np.concatenate([[enc.w[k, t, i]], beta]),
                                  np.concatenate([[1.0], -verts[:, i]]), "==", 0.0)
            # disaggregated prices: pi_t = sum_v pi_v with pi_v zero unless its
            # vertex is picked, so the price-times-xi term is linear in pi_v
            for v, vert in enumerate(verts):
                piv = lp.add_vars(m, lb=np.minimum(p_lo[t], 0.0), ub=np.maximum(p_hi[t], 0.0),
                                  obj=vert - ref[t], name=f"pi_{t}_{k}_{v}")
                piv_parts.append(piv)
                for i in range(m):
                    lp.add_constraint([piv[i], beta[v]], [1.0, -p_hi[t, i]], "<=", 0.0)
                    lp.add_constraint([piv[i], beta[v]], [-1.0, p_lo[t, i]], "<=", 0.0)
        beta_all = np.concatenate(betas)
        lp.add_constraint(beta_all, np.ones(beta_all.size), "==", 1.0)
        parts = np.stack(piv_parts)
        for i in range(m):
            lp.add_constraint(np.concatenate([[pi[t, i]], parts[:, i]]),
                              np.concatenate([[1.0], -np.ones(len(parts))]), "==", 0.0)
        verts_cat = np.concatenate(verts_all)
        for i in range(m):
            lp.add_constraint(np.concatenate([[xi[t, i]], beta_all]),
                              np.concatenate([[1.0], -verts_cat[:, i]]), "==", 0.0)
    return lp, xi, enc


def _finish_subproblem(form, x, union, lp, xi_grid, enc, combo, options):
    res = solve(lp, options)
    if not res.optimal:
        raise SolverFailure(f"worst-case subproblem is {res.status}")
    traj = res.x[xi_grid]
    choice = tuple(combo) if combo is not None else enc.decode(res.x)[1]
    traj = repair_trajectory(union, traj, choice)
    value, _, _ = solve_recourse(form, x, traj, options)
    # the model value is a dual bound at the returned point, so it cannot exceed
    # the recourse value there
    if res.objective > value + 1e-6 * max(1.0, abs(value)):
        raise SolverFailure(f"subproblem value {res.objective} exceeds the recourse value {value}")
    return SubproblemResult(value, traj, choice, res.objective, dict(res.stats))


def solve_subproblem_milp(form: MatrixForm, x, uset, options: SolveOptions | None = None) -> SubproblemResult:
    """Worst-case recourse cost via one MILP embedding the union-set encoding."""
    union = _bounded(uset)
    lp, xi_grid, enc = _duality_model(form, x, union)
    return _finish_subproblem(form, x, union, lp, xi_grid, enc, None, options)


def solve_subproblem_enum(form: MatrixForm, x, uset, options: SolveOptions | None = None,
                          cap: int = 10**6) -> SubproblemResult:
    """Worst-case recourse cost by one restricted model per subset combination.

    Ties keep the lexicographically smallest combination.
    """
    union = _bounded(uset)
    sizes = [len(p) for p in union.periods]
    if math.prod(sizes) > cap:
        raise EnumerationTooLarge(f"{math.prod(sizes)} subset combinations exceed the cap {cap}")
    best = None
    for combo in itertools.product(*(range(s) for s in sizes)):
        lp, xi_grid, _ = _duality_model(form, x, union, combo)
        out = _finish_subproblem(form, x, union, lp, xi_grid, None, combo, options)
        if best is None or out.value > best.value + 1e-9 * max(1.0, abs(best.value)):
            best = out
    return best


def worst_case_vertices(form: MatrixForm, x, uset, options: SolveOptions | None = None,
                        cap: int = 5000) -> SubproblemResult:
    """Brute force: recourse LP at every vertex trajectory. Small cases only."""
    union = _bounded(uset)
    per_period = []
    for subs in union.periods:
        per_period.append([(k, v) for k, poly in enumerate(subs) for v in poly.vertices()])
    if math.prod(len(p) for p in per_period) > cap:
        raise EnumerationTooLarge("too many vertex trajectories")
    best = None
    for pick in itertools.product(*per_period):
        traj = np.array([v for _, v in pick])
        value, _, _ = solve_recourse(form, x, traj, options)
        if best is None or value > best.value + 1e-9 * max(1.0, abs(best.value)):
            best = SubproblemResult(value, traj, tuple(k for k, _ in pick), value)
    return best


def _bounded(uset) -> PolytopeUnion:
    union = uset.as_union()
    if union.lower is None or union.upper is None:
        union = union.with_bounds()
    return union


# -- column-and-constraint generation -------------------------------------------------

@dataclass
class CcgConfig:
    tolerance: float = 1e-4
    max_iterations: int = 30
    subproblem: str = "milp"  # milp | enum
    local_search: bool = True
    options: SolveOptions | None = None
    raise_on_limit: bool = False


@dataclass
class RobustSolution:
    commitment: np.ndarray
    worst_scenarios: list
    total_cost: float
    first_stage_cost: float
    worst_recourse_cost: float
    iterations: int
    gap: float
    lower_bounds: list = field(default_factory=list)
    upper_bounds: list = field(default_factory=list)
    wall_time: float = 0.0

    def commitment_matrix(self, form: MatrixForm) -> list:
        units = form.instance.units
        return [[int(self.commitment[form.x_index[("u", g, t)]]) for t in range(form.t)]
                for g in range(len(units))]

    def to_dict(self, form: MatrixForm | None = None) -> dict:
        out = {
            "total_cost": self.total_cost,
            "first_stage_cost": self.first_stage_cost,
            "worst_recourse_cost": self.worst_recourse_cost,
            "iterations": self.iterations,
            "gap": self.gap,
            "lower_bounds": list(self.lower_bounds),
            "upper_bounds": list(self.upper_bounds),
            "commitment_vector": [int(v) for v in self.commitment],
            "scenarios": [np.asarray(s).tolist() for s in self.worst_scenarios],
        }
        if form is not None:
            out["commitment"] = self.commitment_matrix(form)
        return out


def _initial_scenario(union: PolytopeUnion) -> np.ndarray:
    return np.array([subs[0].center for subs in union.periods])


def recourse_values(form: MatrixForm, x, trajectories, options: SolveOptions | None = None) -> np.ndarray:
    """Recourse cost of each trajectory, all solved as one block-diagonal LP."""
    lp = LinearProgram("min", name="recourse_batch")
    ys = _add_recourse_blocks(lp, form, None, list(trajectories), [1.0] * len(trajectories), fixed_x=x)
    res = solve(lp, options)
    if not res.optimal:
        raise SolverFailure(f"batched recourse LP is {res.status}")
    return np.array([float(form.b @ res.x[y]) for y in ys])


def local_worst_case(form: MatrixForm, x, uset, starts=(), max_rounds: int = 50,
                     options: SolveOptions | None = None) -> SubproblemResult:
    """Vertex-swap ascent; a fast lower bound on the worst-case recourse cost.

    Each round tries every single-period move to a vertex of any subset and
    keeps the best, until no move raises the cost. Starts from the given
    trajectories plus the all-low and all-high vertex trajectories.
    """
    union = _bounded(uset)
    T = form.t
    verts = [[(k, v) for k, p in enumerate(subs) for v in p.vertices()] for subs in union.periods]
    low = [min(vs, key=lambda kv: (kv[1].sum(), kv[0]))[1] for vs in verts]
    high = [max(vs, key=lambda kv: (kv[1].sum(), -kv[0]))[1] for vs in verts]
    seeds = [np.asarray(s, dtype=float).reshape(T, form.m) for s in starts] + [np.array(low), np.array(high)]
    best = None
    for traj in seeds:
        traj = traj.copy()
        value = recourse_values(form, x, [traj], options)[0]
        for _ in range(max_rounds):
            moves = [(t, v) for t in range(T) for _, v in verts[t]]
            cands = []
            for t, v in moves:
                cand = traj.copy()
                cand[t] = v
                cands.append(cand)
            vals = recourse_values(form, x, cands, options)
            i = int(np.argmax(vals))
            if vals[i] <= value + 1e-9 * max(1.0, abs(value)):
                break
            value, traj = float(vals[i]), cands[i]
        if best is None or value > best[0] + 1e-9 * max(1.0, abs(best[0])):
            best = (value, traj)
    value, traj = best
    choice = tuple(next(k for k, p in enumerate(union.periods[t]) if p.contains(traj[t], 1e-7))
                   for t in range(T))
    return SubproblemResult(value, traj, choice, value)


def solve_ccg(form: MatrixForm, uset, config: CcgConfig | None = None) -> RobustSolution:
    """Column-and-constraint generation for the two-stage robust problem.

    Each round first tries the local ascent; a scenario it finds above the
    master's recourse estimate is added directly. Only when the ascent finds
    nothing does the exact subproblem run, and only exact values update the
    upper bound, so the reported gap is a certificate.
    """
    config = config or CcgConfig()
    t0 = time.perf_counter()
    union = _bounded(uset)
    if (union.t, union.m) != (form.t, form.m):
        raise DimensionMismatch("uncertainty set and instance disagree on T or m")
    exact = solve_subproblem_milp if config.subproblem == "milp" else solve_subproblem_enum
    scenarios = [_initial_scenario(union)]
    lbs, ubs = [], []
    best = None  # (ub, X, recourse)
    lb = -math.inf
    gap = math.inf
    for it in range(1, config.max_iterations + 1):
        lp = LinearProgram("min", name="ccg_master")
        x = _add_first_stage(lp, form)
        theta = lp.add_var(lb=0.0, obj=1.0, name="theta")
        ys = _add_recourse_blocks(lp, form, x, scenarios, [0.0] * len(scenarios))
        for y in ys:
            lp.add_constraint(np.concatenate([y, [theta]]), np.concatenate([form.b, [-1.0]]), "<=", 0.0)
        res = solve(lp, config.options)
        if not res.optimal:
            raise SolverFailure(f"master problem is {res.status}")
        lb = max(lb, res.stats.get("dual_bound", res.objective))
        X = np.round(res.x[x])
        theta_val = float(res.x[theta])
        tol = config.tolerance * max(1.0, abs(res.objective))
        sp = None
        if config.local_search:
            sp = local_worst_case(form, X, union, scenarios, options=config.options)
            if sp.value <= theta_val + tol:
                sp = None
        if sp is None:
            sp = exact(form, X, union, config.options)
            ub = float(form.c @ X) + sp.value
            if best is None or ub < best[0]:
                best = (ub, X, sp.value)
        lbs.append(lb)
        ubs.append(math.inf if best is None else best[0])
        gap = math.inf if best is None else (best[0] - lb) / max(1.0, abs(best[0]))
        log.info("ccg iteration %d: lb=%.6f ub=%.6f gap=%.2e", it, lb, ubs[-1], gap)
        if gap <= config.tolerance:
            break
        if any(np.allclose(sp.trajectory, s, atol=1e-9, rtol=0) for s in scenarios):
            # a known scenario came back; the master already prices it
            break
        scenarios.append(sp.trajectory)
    else:
        if config.raise_on_limit or best is None:
            raise IterationLimit(f"no convergence in {config.max_iterations} iterations (gap {gap:.3e})")
    ub, X, rec = best
    sol = RobustSolution(X, scenarios, ub, float(form.c @ X), rec, it,
                         (ub - lb) / max(1.0, abs(ub)), lbs, ubs, time.perf_counter() - t0)
    for s in sol.worst_scenarios:
        if not membership(union, s):
            raise SolverFailure("a certificate scenario left the uncertainty set")
    return sol


# -- out-of-sample reliability ----------------------------------------------------------

@dataclass
class ReliabilityReport:
    reliability: float
    n: int
    per_period_violations: list
    cost_mean: float
    cost_std: float
    cost_quantiles: dict
    costs: np.ndarray = field(repr=False, default=None)

    def to_dict(self) -> dict:
        return {
            "reliability": self.reliability,
            "n": self.n,
            "per_period_violations": list(self.per_period_violations),
            "cost_mean": self.cost_mean,
            "cost_std": self.cost_std,
            "cost_quantiles": self.cost_quantiles,
        }

    def histogram_csv(self, bins: int = 40) -> str:
        counts, edges = np.histogram(self.costs, bins=bins)
        lines = ["cost,count"]
        lines += [f"{float(0.5 * (a + b))!r},{int(c)}" for a, b, c in zip(edges[:-1], edges[1:], counts)]
        return "\n".join(lines) + "\n"


def sample_trajectories(models: Sequence[ConditionalGmm], n: int, seed: int) -> np.ndarray:
    """(n, T, m) draws, independent across periods, one seed stream per period."""
    seeds = np.random.SeedSequence(seed).spawn(len(models))
    per = [sample_conditional(mdl, n, int(s.generate_state(1)[0])) for mdl, s in zip(models, seeds)]
    return np.stack(per, axis=1)


def evaluate_reliability(form: MatrixForm, x, models: Sequence[ConditionalGmm] | None = None,
                         n: int = 10000, seed: int = 0, batch: int = 250,
                         trajectories=None, options: SolveOptions | None = None) -> ReliabilityReport:
    """Fraction of sampled realizations whose recourse needs no shedding or spillage."""
    if trajectories is None:
        if models is None:
            raise ValueError("need conditional models or explicit trajectories")
        trajectories = sample_trajectories(models, n, seed)
    traj = np.asarray(trajectories, dtype=float).reshape(-1, form.t, form.m)
    n = traj.shape[0]
    x = np.asarray(x, dtype=float)
    first = float(form.c @ x)
    costs = np.empty(n)
    bad = np.zeros(n, dtype=bool)
    per_period = np.zeros(form.t, dtype=int)
    slack_cols = np.concatenate([form.shed_cols, form.spill_cols])
    slack_period = np.array([key[2] for key, col in sorted(form.y_index.items(), key=lambda kv: kv[1])])
    for start in range(0, n, batch):
        chunk = traj[start:start + batch]
        lp = LinearProgram("min", name="reliability")
        ys = _add_recourse_blocks(lp, form, None, list(chunk), [1.0] * len(chunk), fixed_x=x)
        res = solve(lp, options)
        if not res.optimal:
            raise SolverFailure(f"batched recourse LP is {res.status}")
        for i, y in enumerate(ys):
            yv = res.x[y]
            costs[start + i] = first + float(form.b @ yv)
            active = slack_cols[yv[slack_cols] > SLACK_TOL]
            if active.size:
                bad[start + i] = True
                for t in np.unique(slack_period[active]):
                    per_period[t] += 1
    qs = {str(q): float(np.quantile(costs, q)) for q in (0.05, 0.5, 0.95)}
    return ReliabilityReport(float(np.mean(~bad)), n, per_period.tolist(), float(costs.mean()),
                             float(costs.std()), qs, costs)
