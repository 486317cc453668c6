import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from caus.calibration import union_score
from caus.errors import DimensionMismatch, EmptyBounds, EnumerationTooLarge, MissingBigM, TooFewDirections
from caus.gmm import ConditionalComponent, ConditionalGmm
from caus.sets import (
    CausSet,
    PolytopeUnion,
    build_box,
    build_caus,
    build_subset_polytope,
    build_uos_baseline,
    encode_milp,
    make_directions,
    membership,
    membership_many,
    set_from_dict,
    set_from_json,
    set_to_json,
    singleton_set,
    worst_case_enumerate,
    worst_case_milp,
)
from caus.solver import LinearProgram, solve

from .conftest import gaussian, random_conditional, random_spd


def boundary_points(comp, gamma, count, rng):
    u = rng.normal(size=(count, comp.mean.size))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return comp.mean + math.sqrt(gamma) * u @ np.linalg.cholesky(comp.covariance).T


def test_directions_two_dimensions():
    d = make_directions(2, 8).directions
    axes = [[1, 0], [-1, 0], [0, 1], [0, -1]]
    assert np.allclose(d[:4], axes)
    diag = {tuple(np.round(v * math.sqrt(2), 12)) for v in d[4:]}
    assert diag == {(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)}


def test_directions_one_dimension():
    assert np.array_equal(make_directions(1, 2).directions, [[1.0], [-1.0]])


def test_directions_three_dimensions():
    d = make_directions(3, 8, seed=4)
    assert d.j == 8
    assert np.allclose(np.linalg.norm(d.directions, axis=1), 1.0, atol=1e-12, rtol=0)
    assert np.array_equal(d.directions, make_directions(3, 8, seed=4).directions)
    with pytest.raises(TooFewDirections):
        make_directions(3, 5)


def test_polytope_identity_support_values():
    poly = build_subset_polytope(ConditionalComponent(1.0, [0.0, 0.0], np.eye(2)), 1.0, make_directions(2, 4))
    for v in make_directions(2, 4).directions:
        lp = LinearProgram("max")
        xi = lp.add_vars(2, lb=-math.inf)
        lp.add_rows(poly.d_matrix, xi, "<=", poly.d_vector)
        lp.set_objective(xi, v)
        assert solve(lp).objective == pytest.approx(1.0, abs=1e-9)
    theta = np.linspace(0, 2 * np.pi, 50)
    assert poly.contains_many(np.column_stack([np.cos(theta), np.sin(theta)])).all()


def test_polytope_zero_radius():
    comp = ConditionalComponent(1.0, [1.0, 2.0], [[2.0, 0.3], [0.3, 1.0]])
    poly = build_subset_polytope(comp, 0.0, make_directions(2, 8))
    assert np.allclose(poly.d_matrix @ comp.mean, poly.d_vector, atol=1e-12)
    assert poly.contains(comp.mean)
    assert not poly.contains(comp.mean + [1e-3, 0.0])


def test_polytope_contains_ellipsoid_boundary():
    rng = np.random.default_rng(6)
    comp = ConditionalComponent(1.0, rng.normal(size=2), random_spd(rng, 2))
    poly = build_subset_polytope(comp, 2.0, make_directions(2, 8))
    pts = boundary_points(comp, 2.0, 10_000, rng)
    assert np.all(pts @ poly.d_matrix.T <= poly.d_vector + 1e-9)


@given(st.integers(0, 10_000), st.integers(1, 3), st.floats(0.0, 20.0))
def test_ellipsoid_points_are_members(seed, m, gamma):
    rng = np.random.default_rng(seed)
    model = random_conditional(rng, 2, m)
    uset = build_caus([model], [gamma], make_directions(m))
    pts = rng.normal(scale=3.0, size=(50, m))
    inside = union_score(model, pts) <= gamma
    assert np.all(membership_many(uset, pts)[inside])


@given(st.integers(0, 10_000), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_polytopes_grow_with_gamma(seed, g1, g2):
    rng = np.random.default_rng(seed)
    comp = ConditionalComponent(1.0, rng.normal(size=2), random_spd(rng, 2))
    dirs = make_directions(2)
    lo, hi = sorted((g1, g2))
    small, big = build_subset_polytope(comp, lo, dirs), build_subset_polytope(comp, hi, dirs)
    assert np.all(big.d_vector >= small.d_vector)
    pts = rng.normal(scale=3.0, size=(100, 2)) + comp.mean
    assert np.all(big.contains_many(pts)[small.contains_many(pts)])


def test_single_polytope_set_membership():
    model = gaussian([1.0, 1.0], np.eye(2))
    uset = build_caus([model], [4.0], make_directions(2))
    poly = uset.periods[0][0]
    rng = np.random.default_rng(0)
    for p in rng.normal(scale=3.0, size=(100, 2)):
        assert membership(uset, p[None, :]) == poly.contains(p)


def test_center_combinations_are_members():
    model = random_conditional(np.random.default_rng(4), 2, 2)
    uset = build_caus([model, model], [1.0, 1.0], make_directions(2))
    for a, b in itertools.product(model.components, repeat=2):
        assert membership(uset, np.array([a.mean, b.mean]))


def test_midpoint_between_separated_components_rejected():
    model = ConditionalGmm((ConditionalComponent(0.5, [-5.0, -5.0], np.eye(2)),
                            ConditionalComponent(0.5, [5.0, 5.0], np.eye(2))))
    uset = build_caus([model], [4.0], make_directions(2))
    mid = np.zeros(2)
    by_hand = any(np.all(p.d_matrix @ mid <= p.d_vector + 1e-9) for p in uset.periods[0])
    assert not by_hand
    assert not membership(uset, mid[None, :])


def test_far_point_rejected():
    model = random_conditional(np.random.default_rng(7), 2, 2, spread=1.0)
    gamma = 3.0
    uset = build_caus([model, model], [gamma, gamma], make_directions(2))
    far = np.array([c.mean for c in model.components]).max(axis=0)
    far = far + np.array([10 * math.sqrt(gamma) * 10, 0.0])
    traj = np.array([model.components[0].mean, far])
    assert not membership(uset, traj)
    with pytest.raises(DimensionMismatch):
        membership(uset, np.zeros((3, 2)))


def test_big_m_strictly_bounds_every_polytope():
    rng = np.random.default_rng(11)
    models = [random_conditional(rng, 3, 2) for _ in range(2)]
    uset = build_caus(models, [5.0, 2.0], make_directions(2))
    for t, polys in enumerate(uset.periods):
        for poly in polys:
            for i in range(2):
                for s in (1.0, -1.0):
                    lp = LinearProgram("max")
                    xi = lp.add_vars(2, lb=-math.inf)
                    lp.add_rows(poly.d_matrix, xi, "<=", poly.d_vector)
                    obj = np.zeros(2)
                    obj[i] = s
                    lp.set_objective(xi, obj)
                    assert solve(lp).objective < uset.big_m[t, i]


def test_encoding_counts_small():
    model = random_conditional(np.random.default_rng(0), 2, 2)
    enc = encode_milp(build_caus([model, model], [1.0, 1.0], make_directions(2)))
    assert enc.n_binaries == 4
    assert enc.n_auxiliaries == 8
    sos = [r for r in enc.rows if enc.problem.row_names.get(r, "").startswith("sos1")]
    assert len(sos) == 2


def test_encoding_requires_big_m():
    model = gaussian([0.0, 0.0], np.eye(2))
    poly = build_caus([model], [1.0], make_directions(2)).periods[0][0]
    with pytest.raises(MissingBigM):
        encode_milp(PolytopeUnion(((poly,),)))


def test_single_subset_encoding_matches_polytope_lp():
    rng = np.random.default_rng(13)
    model = random_conditional(rng, 1, 2)
    uset = build_caus([model], [3.0], make_directions(2))
    poly = uset.periods[0][0]
    for _ in range(5):
        obj = rng.normal(size=2)
        lp = LinearProgram("max")
        xi = lp.add_vars(2, lb=-math.inf)
        lp.add_rows(poly.d_matrix, xi, "<=", poly.d_vector)
        lp.set_objective(xi, obj)
        direct = solve(lp).objective
        value, _, choice, raw = worst_case_milp(uset, obj)
        assert choice == (0,)
        assert raw == pytest.approx(direct, abs=1e-6)
        assert value == pytest.approx(direct, abs=1e-6)


def test_milp_matches_enumeration_three_by_three():
    rng = np.random.default_rng(19)
    models = [random_conditional(rng, 3, 2) for _ in range(3)]
    uset = build_caus(models, [2.0, 4.0, 6.0], make_directions(2))
    obj = rng.normal(size=(3, 2))
    ev, etraj, echoice = worst_case_enumerate(uset, obj)
    mv, mtraj, mchoice, raw = worst_case_milp(uset, obj)
    assert abs(ev - mv) <= 1e-6
    assert abs(raw - ev) <= 1e-6
    assert membership(uset, mtraj)
    assert float(np.sum(obj * mtraj)) == pytest.approx(ev, abs=1e-6)


def test_enumeration_trivial_cases():
    model = gaussian([1.0, 2.0], np.eye(2))
    uset = build_caus([model], [1.0], make_directions(2))
    value, traj, choice = worst_case_enumerate(uset, np.zeros(2))
    assert value == 0.0 and membership(uset, traj) and choice == (0,)
    with pytest.raises(EnumerationTooLarge):
        worst_case_enumerate(uset, np.zeros(2), cap=0)


def test_enumeration_picks_positive_component():
    model = ConditionalGmm((ConditionalComponent(0.5, [-4.0, 0.0], np.eye(2)),
                            ConditionalComponent(0.5, [4.0, 0.0], np.eye(2))))
    uset = build_caus([model, model], [1.0, 1.0], make_directions(2))
    obj = np.array([[1.0, 0.0], [1.0, 0.0]])
    value, traj, choice = worst_case_enumerate(uset, obj)
    assert choice == (1, 1)
    assert value == pytest.approx(10.0, abs=1e-9)


def test_box_from_samples():
    v = np.array([3.0, -1.0])
    box = build_box([np.tile(v, (5, 1))])
    assert np.array_equal(box.lower, box.upper)
    assert box.contains(v[None, :])
    assert not box.contains((v + 1e-6)[None, :])
    with pytest.raises(EmptyBounds):
        build_box(lower=[[1.0]], upper=[[0.0]])
    with pytest.raises(EmptyBounds):
        build_box(lower=[[-math.inf]], upper=[[0.0]])


def test_box_as_union_membership():
    rng = np.random.default_rng(1)
    samples = [rng.normal(size=(200, 2)), rng.normal(size=(200, 2)) + 5]
    box = build_box(samples)
    union = box.as_union()
    for _ in range(50):
        traj = rng.normal(scale=3.0, size=(2, 2)) + [[0, 0], [5, 5]]
        assert membership(union, traj) == box.contains(traj)


def test_uos_full_budget_is_hypercube_image():
    model = gaussian([1.0, -1.0], np.diag([4.0, 1.0]))
    uos = build_uos_baseline(model, lam=1.0, phi=2.0)
    poly = uos.as_union().periods[0][0]
    for corner in itertools.product((-1.0, 1.0), repeat=2):
        pt = np.array([1.0, -1.0]) + np.array([2.0, 1.0]) * corner
        assert poly.contains(pt, 1e-9)
        assert not poly.contains(pt * 1.01 + 0.01, 1e-9)


def test_uos_unit_budget_is_diamond():
    uos = build_uos_baseline(gaussian([2.0, 3.0], np.eye(2)), lam=1.0, phi=1.0)
    poly = uos.as_union().periods[0][0]
    verts = poly.vertices()
    expected = {(3.0, 3.0), (1.0, 3.0), (2.0, 4.0), (2.0, 2.0)}
    assert {tuple(np.round(v, 9)) for v in verts} == expected


def test_uos_validates_parameters():
    with pytest.raises(ValueError):
        build_uos_baseline(gaussian([0.0], [[1.0]]), lam=0.0)
    with pytest.raises(ValueError):
        build_uos_baseline(gaussian([0.0, 0.0], np.eye(2)), phi=3.0)


def test_singleton_set_is_one_point():
    traj = np.array([[1.0, 2.0], [3.0, 4.0]])
    s = singleton_set(traj)
    assert membership(s, traj)
    assert not membership(s, traj + 1e-6)


@pytest.mark.parametrize("kind", ["caus", "box", "uos"])
def test_set_json_round_trip(kind):
    rng = np.random.default_rng(5)
    model = random_conditional(rng, 2, 2)
    if kind == "caus":
        uset = build_caus([model, model], [1.0, 2.0], make_directions(2))
    elif kind == "box":
        uset = build_box([rng.normal(size=(10, 2)), rng.normal(size=(10, 2))])
    else:
        uset = build_uos_baseline(model, periods=2)
    again = set_from_json(set_to_json(uset))
    for traj in rng.normal(scale=2.0, size=(30, 2, 2)):
        assert membership(again, traj) == membership(uset, traj)
    if kind == "caus":
        assert isinstance(set_from_dict(uset.to_dict()), CausSet)
