import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from shapegrad import geometry as G, integrands as I
from shapegrad.fem import (P0VectorField, P1Function, active_nodes, dual_energy, gradient,
                           primal_energy, stiffness_matrix, weak_divergence)

TORSION = (I.Quadratic(2), I.Linear(1.0))


def torsion_interpolant(mesh):
    return P1Function.interpolate(mesh, lambda x: (1 - np.sum(x * x, axis=1)) / 4, case="D")


def test_masked_dofs_must_be_zero():
    m = G.square(3)
    dof = np.ones(m.nv)
    with pytest.raises(ValueError):
        P1Function(m, dof, m.boundary_vertex_mask)


def test_gradient_of_affine_and_constant():
    m = G.disk(1.0, 32)
    g = gradient(P1Function.interpolate(m, lambda x: x[:, 0])).values
    np.testing.assert_allclose(g, np.tile([1.0, 0.0], (m.ns, 1)), atol=1e-12)
    g0 = gradient(P1Function(m, np.full(m.nv, 3.3))).values
    np.testing.assert_allclose(g0, 0.0, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_gradient_reproduces_affines(c):
    m = G.square(4)
    u = P1Function.interpolate(m, lambda x: c[0] + c[1] * x[:, 0] + c[2] * x[:, 1])
    np.testing.assert_allclose(gradient(u).values, np.tile(c[1:], (m.ns, 1)), atol=1e-11)


def test_gradient_of_torsion_interpolant_converges():
    errs, hs = [], []
    for n in (32, 64, 128):
        m = G.disk(1.0, n)
        g = gradient(torsion_interpolant(m)).values
        errs.append(np.max(np.linalg.norm(g + m.centroids / 2, axis=1)))
        hs.append(m.h)
    assert all(e <= 1.0 * h for e, h in zip(errs, hs))
    assert errs[-1] < errs[0]


def test_primal_energy_examples():
    m = G.square(3)
    assert primal_energy(m, I.Quadratic(2), I.Power(2.0), P1Function.zeros(m)) == 0.0
    m1 = G.interval(0, 1, 10)
    assert primal_energy(m1, I.AbsNorm(1), I.HingeOneMinus(), P1Function.zeros(m1)) == pytest.approx(1.0, abs=1e-14)


def test_primal_energy_torsion_interpolant_converges():
    vals = [primal_energy(G.disk(1.0, n), *TORSION, torsion_interpolant(G.disk(1.0, n))) for n in (32, 64, 128)]
    errs = [abs(v + np.pi / 16) for v in vals]
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 5e-3


def test_primal_energy_dim_mismatch():
    m = G.square(2)
    with pytest.raises(ValueError):
        primal_energy(m, I.Quadratic(1), I.Linear(), P1Function.zeros(m))


def test_weak_divergence_constant_field():
    m = G.disk(1.0, 48)
    div = weak_divergence(P0VectorField(m, np.tile([0.3, -1.7], (m.ns, 1))), "D")
    np.testing.assert_allclose(div.values[div.active], 0.0, atol=1e-12)


def test_weak_divergence_of_position():
    errs = []
    for n in (8, 16):
        m = G.square(n)
        div = weak_divergence(P0VectorField(m, m.centroids), "D")
        errs.append(np.max(np.abs(div.values[div.active] - 2.0)))
    assert errs[1] <= 1.0 / 16 * 4


def test_weak_divergence_of_discrete_torsion_solution():
    from shapegrad.solvers import solve_primal
    m = G.disk(1.0, 128)
    u = solve_primal(m, *TORSION, "D").u
    div = weak_divergence(gradient(u), "D")
    assert np.max(np.abs(div.values[div.active] + 1.0)) <= 1e-9


def test_weak_divergence_of_torsion_interpolant_decays():
    # on the ring mesh nodal errors stay O(1) at stitching vertices; the mass-weighted error is O(h)
    errs, hs = [], []
    for n in (64, 128, 256):
        m = G.disk(1.0, n)
        div = weak_divergence(gradient(torsion_interpolant(m)), "D")
        e = np.abs(div.values + 1.0)[div.active]
        errs.append(np.dot(m.lumped_mass[div.active], e))
        hs.append(m.h)
    assert errs[2] < errs[1] < errs[0]
    assert all(e <= 1.0 * h for e, h in zip(errs, hs))


def test_active_nodes():
    m = G.square(3)
    assert active_nodes(m, "N").all()
    np.testing.assert_array_equal(active_nodes(m, "D"), ~m.boundary_vertex_mask)
    with pytest.raises(ValueError):
        active_nodes(m, "X")


def test_dual_energy_examples():
    m = G.square(4)
    assert dual_energy(m, I.Quadratic(2), I.Power(2.0), P0VectorField(m, np.zeros((m.ns, 2))), "D") == 0.0
    # torsion with exactly -1 divergence: the g* term vanishes
    s = gradient(torsion_interpolant(m)).values
    sigma = P0VectorField(m, s)
    d = weak_divergence(sigma, "D")
    assert not np.allclose(d.values[d.active], -1.0)
    assert dual_energy(m, *TORSION, sigma, "D").infinite


def test_dual_energy_one_dimensional_example():
    m = G.interval(0, 2, 200)
    f, g = I.AbsNorm(1), I.HingeOneMinus()
    feasible = P0VectorField(m, 1.0 - m.centroids[:, 0])
    assert dual_energy(m, f, g, feasible, "D").value == pytest.approx(-2.0, abs=1e-12)
    printed = P0VectorField(m, -1.0 - m.centroids[:, 0])
    assert dual_energy(m, f, g, printed, "D").infinite  # leaves the unit ball
    d = weak_divergence(printed, "D")
    np.testing.assert_allclose(d.values[d.active], -1.0, atol=1e-12)
    assert np.dot(m.lumped_mass[d.active], g.conj_values(d.values[d.active])) == pytest.approx(-2.0, abs=2 * m.h)


def test_stiffness_matrix_properties():
    m = G.disk(1.0, 24)
    K = stiffness_matrix(m)
    np.testing.assert_allclose(K @ np.ones(m.nv), 0.0, atol=1e-12)
    assert abs(K - K.T).max() < 1e-14


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_duality_floor_random_pairs(seed):
    rng = np.random.default_rng(seed)
    m = G.square(5)
    u = P1Function(m, np.where(m.boundary_vertex_mask, 0.0, rng.normal(size=m.nv)), m.boundary_vertex_mask)
    f, g = I.Quadratic(2), I.Power(2.0)
    sigma = P0VectorField(m, rng.normal(size=(m.ns, 2)))
    h = dual_energy(m, f, g, sigma, "D")
    assert primal_energy(m, f, g, u) + h.value >= -1e-12
