"""Exact rational two-phase simplex for small LPs (oracle duty only).

All arithmetic is done in :class:`fractions.Fraction`; pivoting uses Bland's
rule so the method terminates on degenerate problems. Floating-point inputs
are converted exactly, so the returned optimum is the exact optimum of the
binary-represented data.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .solver import LinearProgram, SolveResult


def _standard_form(problem: LinearProgram):
    """Map to ``min c'z, A z = b, z >= 0, b >= 0``.

    Returns the standard-form data plus a recovery map from ``z`` back to
    the original variables.
    """
    lb, ub = problem.lb, problem.ub
    sign = Fraction(1) if problem.sense == "min" else Fraction(-1)
    obj = [Fraction(v) for v in problem.objective]

    # each original var: x = offset + sum(coef * z_col)
    recover: list[tuple[Fraction, list[tuple[int, Fraction]]]] = []
    n_z = 0
    extra_rows: list[tuple[dict[int, Fraction], str, Fraction]] = []
    for j in range(problem.n_vars):
        lo, hi = lb[j], ub[j]
        if math.isfinite(lo):
            recover.append((Fraction(lo), [(n_z, Fraction(1))]))
            if math.isfinite(hi):
                extra_rows.append(({n_z: Fraction(1)}, "<=", Fraction(hi) - Fraction(lo)))
            n_z += 1
        elif math.isfinite(hi):
            recover.append((Fraction(hi), [(n_z, Fraction(-1))]))
            n_z += 1
        else:
            recover.append((Fraction(0), [(n_z, Fraction(1)), (n_z + 1, Fraction(-1))]))
            n_z += 2

    a = problem.matrix().tocsr()
    rows: list[tuple[dict[int, Fraction], str, Fraction]] = []
    for i in range(problem.n_rows):
        coeffs: dict[int, Fraction] = {}
        rhs = Fraction(problem.rhs[i])
        for j, v in zip(a.indices[a.indptr[i]:a.indptr[i + 1]], a.data[a.indptr[i]:a.indptr[i + 1]]):
            v = Fraction(v)
            offset, terms = recover[j]
            rhs -= v * offset
            for col, c in terms:
                coeffs[col] = coeffs.get(col, Fraction(0)) + v * c
        rows.append((coeffs, problem.senses[i], rhs))
    rows.extend(extra_rows)

    cost = [Fraction(0)] * n_z
    const = Fraction(problem.objective_constant)
    for j, cj in enumerate(obj):
        offset, terms = recover[j]
        const += cj * offset
        for col, c in terms:
            cost[col] += sign * cj * c

    n_slack = sum(1 for _, s, _ in rows if s != "==")
    width = n_z + n_slack
    A: list[list[Fraction]] = []
    b: list[Fraction] = []
    slack = n_z
    for coeffs, sense, rhs in rows:
        line = [Fraction(0)] * width
        for col, v in coeffs.items():
            line[col] = v
        if sense == "<=":
            line[slack] = Fraction(1)
            slack += 1
        elif sense == ">=":
            line[slack] = Fraction(-1)
            slack += 1
        if rhs < 0:
            line = [-v for v in line]
            rhs = -rhs
        A.append(line)
        b.append(rhs)
    cost.extend([Fraction(0)] * n_slack)
    return A, b, cost, recover, const, sign


def _pivot(tab, basis, row, col):
    piv = tab[row][col]
    tab[row] = [v / piv for v in tab[row]]
    for r in range(len(tab)):
        if r != row and tab[r][col] != 0:
            f = tab[r][col]
            tab[r] = [vr - f * vp for vr, vp in zip(tab[r], tab[row])]
    basis[row] = col


def _simplex(tab, basis, cost, allowed):
    """Minimize ``cost`` over the tableau; last column is the rhs."""
    m = len(tab)
    width = len(tab[0]) - 1
    while True:
        # reduced costs
        entering = None
        for j in range(width):
            if not allowed[j] or j in basis:
                continue
            rc = cost[j] - sum(cost[basis[i]] * tab[i][j] for i in range(m))
            if rc < 0:
                entering = j
                break
        if entering is None:
            return "optimal"
        best = None
        for i in range(m):
            if tab[i][entering] > 0:
                ratio = tab[i][-1] / tab[i][entering]
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return "unbounded"
        _pivot(tab, basis, best[1], entering)


def solve_exact(problem: LinearProgram) -> SolveResult:
    A, b, cost, recover, const, sign = _standard_form(problem)
    m = len(A)
    n = len(cost)
    # phase 1 with one artificial per row
    tab = [A[i] + [Fraction(int(i == r)) for r in range(m)] + [b[i]] for i in range(m)]
    basis = [n + i for i in range(m)]
    phase1 = [Fraction(0)] * n + [Fraction(1)] * m
    allowed = [True] * (n + m)
    _simplex(tab, basis, phase1, allowed)
    infeas = sum(tab[i][-1] for i in range(m) if basis[i] >= n)
    if infeas > 0:
        return SolveResult("infeasible", stats={"backend": "exact"})
    # drive remaining artificials out of the basis
    for i in range(m):
        if basis[i] >= n:
            for j in range(n):
                if tab[i][j] != 0:
                    _pivot(tab, basis, i, j)
                    break
    allowed = [True] * n + [False] * m
    status = _simplex(tab, basis, cost + [Fraction(0)] * m, allowed)
    if status == "unbounded":
        return SolveResult("unbounded", stats={"backend": "exact"})
    z = [Fraction(0)] * n
    for i in range(m):
        if basis[i] < n:
            z[basis[i]] = tab[i][-1]
    x = []
    for offset, terms in recover:
        x.append(offset + sum(c * z[col] for col, c in terms))
    value = sign * sum(cj * zj for cj, zj in zip(cost, z)) + const
    return SolveResult(
        "optimal",
        float(value),
        np.array([float(v) for v in x]),
        stats={"backend": "exact", "exact_objective": value, "exact_x": x},
    )
