"""Acceptance criteria, one test and one printed PASS/FAIL line per criterion."""
import time

import numpy as np
import pytest

from oracles import elastoplastic_disk_closed_form, radial_disk_J
from shapegrad import exact1d, geometry as G, integrands as I
from shapegrad.fem import P0VectorField, P1Function, dual_energy, primal_energy
from shapegrad.geometry import deform
from shapegrad.shapederiv import MomentumTensorField, boundary_form, minmax_form, tensor_A, volume_form
from shapegrad.solvers import duality_gap, reconstruct_dual, solve_primal
from shapegrad.validation import (conservation_residual, derive_report, fd_quotient, fd_sweep,
                                  piola_transform, transported_dual_energy, transported_energy)

QUARTER_PI = np.pi / 4
TORSION = (I.Quadratic(2), I.Linear(1.0))


def _close(a, b, rel, floor=0.0):
    return abs(a - b) <= rel * max(abs(a), abs(b)) + floor


@pytest.fixture(scope="module")
def torsion128():
    mesh = G.disk(1.0, 128)
    sol = solve_primal(mesh, *TORSION, "D")
    return mesh, sol, reconstruct_dual(mesh, *TORSION, sol, "D")


def test_criterion_1_one_dimensional_example(record):
    t0 = time.perf_counter()
    analytic = all(exact1d.m_exact(a) == -min(2.0, a) for a in (0.5, 1.0, 2.0, 3.0))
    analytic &= [exact1d.m_exact(a) for a in (0.5, 1.0, 2.0, 3.0)] == [-0.5, -1.0, -2.0, -2.0]
    disc_err = 0.0
    for a in (0.5, 1.0, 2.0, 3.0):
        m = G.interval(0.0, a, int(round(200 * a)))
        disc_err = max(disc_err, abs(exact1d.relaxed_J(m) - exact1d.m_exact(a)) / (2 * m.h))

    f, g = exact1d.integrands()
    mesh = G.interval(0.0, 2.0, 800)  # h = 1/400
    x = mesh.vertices[:, 0]
    family = exact1d.relaxed_solution_family(np.linspace(0, 1, 5), mesh)
    duals = [exact1d.dual_field(mesh)]
    J0 = exact1d.relaxed_J(mesh)
    rng = np.random.default_rng(2024)
    mm_err = fd_err = 0.0
    for V0, V2 in rng.uniform(-1, 1, size=(10, 2)):
        V = G.VelocityField(V0 + (V2 - V0) * x / 2)
        ref = exact1d.jprime_exact(V0, V2)
        mm_err = max(mm_err, abs(minmax_form(family, duals, f, g, V).value - ref))
        q = fd_quotient(mesh, f, g, "N", V, 1e-3, solver=exact1d.relaxed_J, J0=J0)
        fd_err = max(fd_err, abs(q - ref))
    dt = time.perf_counter() - t0
    ok = analytic and disc_err <= 1.0 and mm_err <= 1e-12 and fd_err <= 5e-2 and dt < 10
    record(1, ok, f"analytic exact={analytic}, discrete err/(2h)={disc_err:.3f}, "
                  f"minmax err={mm_err:.1e}, fd err={fd_err:.1e}, {dt:.1f}s")
    assert ok


def test_criterion_2_torsion_disk(record):
    t0 = time.perf_counter()
    mesh = G.disk(1.0, 128)
    rep, sol, dual = derive_report(mesh, *TORSION, "D", G.dilation(mesh), fd_schedule=[2e-2, 1e-2, 5e-3])
    dt = time.perf_counter() - t0
    vals = rep.derivative_values()
    J_ok = _close(rep.J_primal, np.pi / 16, 1e-2)
    vs_ref = max(abs(v - QUARTER_PI) / QUARTER_PI for v in vals.values())
    spread = (max(vals.values()) - min(vals.values())) / QUARTER_PI
    ok = J_ok and len(vals) == 4 and vs_ref <= 2e-2 and spread <= 2e-2 and dt < 30
    record(2, ok, f"{mesh.ns} triangles, J={rep.J_primal:.6f} (pi/16={np.pi / 16:.6f}), "
                  + ", ".join(f"{k}={v:.5f}" for k, v in vals.items())
                  + f", max rel dev {vs_ref:.2%}, {dt:.1f}s")
    assert ok


def test_criterion_3_conservation(record):
    hs, res = [], []
    for n in (64, 128, 256):
        mesh = G.disk(1.0, n)
        sol = solve_primal(mesh, *TORSION, "D")
        dual = reconstruct_dual(mesh, *TORSION, sol, "D")
        hs.append(mesh.h)
        res.append(conservation_residual(tensor_A(sol, dual, *TORSION)).max)
    slope = float(np.polyfit(np.log(hs), np.log(res), 1)[0])
    mesh = G.disk(1.0, 64)
    const = conservation_residual(MomentumTensorField.constant(mesh, [[2.0, -1.0], [0.5, 3.0]])).max
    ok = slope >= 0.8 and all(b < a for a, b in zip(res, res[1:])) and const <= 1e-12
    record(3, ok, "max residuals " + ", ".join(f"h={h:.4f}:{r:.2e}" for h, r in zip(hs, res))
                  + f", slope={slope:.2f}, constant tensor {const:.1e}")
    assert ok


def _certificate_problems():
    disk = G.disk(1.0, 128)
    square = G.square(16)
    line = G.interval(0.0, 1.0, 200)
    shifted = I.CustomScalar(lambda u: 0.5 * u ** 2 - u, lambda u: u - 1.0, hess=lambda u: np.ones_like(u))
    return [
        ("torsion disk", disk, *TORSION, "D", 1e-4),
        ("p=3 torsion square", square, I.PowerNorm(2, 3.0), I.Linear(1.0), "D", 1e-4),
        ("quadratic + power, N", square, I.Quadratic(2), shifted, "N", 1e-4),
        ("elastoplastic lam=1", disk, I.NonsmoothTorsion(2), I.Linear(1.0), "D", 1e-2),
        ("elastoplastic lam=4", disk, I.NonsmoothTorsion(2), I.Linear(4.0), "D", 1e-2),
        ("1D abs + hinge", line, I.AbsNorm(1), I.HingeOneMinus(), "D", 1e-2),
    ]


def test_criterion_4_duality_certificates(record):
    worst, lines = True, []
    for name, mesh, f, g, case, tol in _certificate_problems():
        sol = solve_primal(mesh, f, g, case)
        dual = reconstruct_dual(mesh, f, g, sol, case)
        gap = float(duality_gap(mesh, f, g, sol.u, dual.sigma, case))
        ok = -mesh.h <= gap <= tol * (1 + abs(sol.J))
        worst &= ok
        lines.append(f"{name}: gap={gap:.1e}")
    record(4, worst, "; ".join(lines) + " (bound [-h, gap_tol (1+|J|)])")
    assert worst


def test_criterion_5_elastoplastic(record):
    t0 = time.perf_counter()
    f = I.NonsmoothTorsion(2)
    mesh = G.disk(1.0, 128)
    V = G.dilation(mesh)
    _, dJ_fn, _, _ = elastoplastic_disk_closed_form()
    parts, ok = [], True
    for lam in (1.0, 4.0):
        g = I.Linear(lam)
        J_ref = radial_disk_J(lam)
        rep, sol, dual = derive_report(mesh, f, g, "D", V, minmax=False, fd_schedule=[2e-2, 1e-2, 5e-3])
        vol, bnd, fd = rep.volume_form_value, rep.boundary_form_value, rep.fd_extrapolated
        # lam = 1 sits below the yield threshold: J and every derivative vanish, so use an absolute floor
        floor = 1e-8
        J_ok = _close(rep.J_primal, J_ref, 1e-2, floor)
        agree = _close(vol, fd, 5e-2, floor) and _close(bnd, fd, 5e-2, floor)
        exact = float(dJ_fn(lam)) if lam > 2 else 0.0
        ok &= J_ok and agree and _close(vol, exact, 5e-2, floor)
        parts.append(f"lam={lam:g}: J={rep.J_primal:.6f} (radial oracle {J_ref:.6f}), "
                     f"volume={vol:.4f}, boundary={bnd:.4f}, fd={fd:.4f}, closed form {exact:.4f}")
    # boundary density equals 1/2 (|sigma.n|^2 - 1)_+
    s = np.linspace(-3, 3, 61)
    dens_ok = np.allclose(f.conj_values(s[:, None] * [[0.6, 0.8]]), 0.5 * np.maximum(s ** 2 - 1, 0), atol=1e-14)
    dt = time.perf_counter() - t0
    ok &= dens_ok and dt < 60
    record(5, ok, "; ".join(parts) + f"; density check {dens_ok}; {dt:.1f}s")
    assert ok


def test_criterion_6_interior_variations(record, torsion128):
    mesh, sol, dual = torsion128
    A = tensor_A(sol, dual, *TORSION)
    bound = conservation_residual(A).max
    rng = np.random.default_rng(6)
    verts = rng.choice(np.flatnonzero(mesh.deep_interior_mask), size=20, replace=False)
    J = sol.J
    worst_vol = worst_fd = 0.0
    ok = True
    for v in verts:
        d = rng.normal(size=2)
        V = G.hat_bump(mesh, v, d / np.linalg.norm(d))
        dv = V.jacobians(mesh)
        dnorm = np.sqrt(np.dot(mesh.volumes, np.einsum("tij,tij->t", dv, dv)))
        vol = volume_form(A, V)
        fd = fd_sweep(mesh, *TORSION, "D", V, [4e-3, 2e-3, 1e-3]).extrapolated
        worst_vol = max(worst_vol, abs(vol) / (bound * dnorm))
        worst_fd = max(worst_fd, abs(fd) / abs(J))
        ok &= abs(vol) <= 10 * bound * dnorm and abs(fd) <= 5e-3 * abs(J)
    record(6, ok, f"20 bumps: max |volume|/(residual bound)={worst_vol:.2f} (limit 10), "
                  f"max |fd|/|J|={worst_fd:.1e} (limit 5e-3)")
    assert ok


def test_criterion_7_change_of_variables(record):
    problems = [
        ("torsion", G.disk(1.0, 64), *TORSION),
        ("p=3 torsion", G.square(10), I.PowerNorm(2, 3.0), I.Linear(1.0)),
        ("power g", G.square(10), I.Quadratic(2), I.Power(3.0)),
        ("elastoplastic", G.disk(1.0, 64), I.NonsmoothTorsion(2), I.Linear(4.0)),
        ("abs + hinge 1D", G.interval(0.0, 1.0, 60), I.AbsNorm(1), I.HingeOneMinus()),
    ]
    rng = np.random.default_rng(7)
    worst_p = worst_d = 0.0
    ok = True
    for name, mesh, f, g in problems:
        sol = solve_primal(mesh, f, g, "D")
        dual = reconstruct_dual(mesh, f, g, sol, "D")
        u = P1Function(mesh, sol.u.dof + 0.1 * rng.normal(size=mesh.nv))
        sig = P0VectorField(mesh, dual.sigma.values * 0.9)
        for _ in range(2):
            M = 0.5 * rng.normal(size=(mesh.dim, mesh.dim))
            V = G.VelocityField(mesh.vertices @ M.T + rng.normal(size=mesh.dim))
            for eps in (0.1, 0.01):
                rec = deform(mesh, V, eps)
                for uu, ss in ((sol.u, dual.sigma), (u, sig)):
                    p = abs(transported_energy(mesh, f, g, uu, V, eps)
                            - primal_energy(rec.deformed_mesh, f, g, uu.on(rec.deformed_mesh)))
                    lhs = transported_dual_energy(mesh, f, g, ss, V, eps, "D")
                    rhs = dual_energy(rec.deformed_mesh, f, g, piola_transform(ss, rec), "D")
                    if lhs.infinite or rhs.infinite:
                        d = 0.0 if lhs.infinite == rhs.infinite else np.inf
                    else:
                        d = abs(lhs.value - rhs.value)
                    worst_p, worst_d = max(worst_p, p), max(worst_d, d)
                    ok &= p <= 1e-10 and d <= 1e-10
    record(7, ok, f"{len(problems)} problems, affine V, eps in {{0.1, 0.01}}: "
                  f"max primal diff {worst_p:.1e}, max dual diff {worst_d:.1e}")
    assert ok


def _catalog():
    return [I.Quadratic(2), I.PowerNorm(2, 3.0), I.PowerNorm(2, 1.5), I.NonsmoothTorsion(2), I.AbsNorm(2)], \
        [I.Linear(1.5), I.HingeOneMinus(), I.Power(2.0), I.Power(3.0)]


def test_criterion_8_property_suites(record, torsion128):
    rng = np.random.default_rng(8)
    vec, sca = _catalog()
    fy_min, sub_max = np.inf, 0.0
    for F in vec:
        z = rng.normal(scale=2.0, size=(10_000, 2))
        zs = rng.normal(scale=2.0, size=(10_000, 2))
        gap = F.values(z) + F.conj_values(zs) - np.sum(z * zs, axis=1)
        fy_min = min(fy_min, float(np.min(gap)))
        s = F.grad_values(z)
        sub_max = max(sub_max, float(np.max(np.abs(F.values(z) + F.conj_values(s) - np.sum(z * s, axis=1)))))
        for zk in ([0.0, 0.0], [1.0, 0.0]):
            el = I.subgradient(F, zk)
            sub_max = max(sub_max, abs(float(I.fenchel_gap(F, zk, el.representative))))
    for F in sca:
        u = rng.normal(scale=2.0, size=10_000)
        us = rng.normal(scale=2.0, size=10_000)
        gap = F.values(u) + F.conj_values(us) - u * us
        fy_min = min(fy_min, float(np.min(gap)))
        s = F.grad_values(u)
        sub_max = max(sub_max, float(np.max(np.abs(F.values(u) + F.conj_values(s) - u * s))))
        for uk in (0.0, 1.0):
            sub_max = max(sub_max, abs(float(I.fenchel_gap(F, uk, I.subgradient(F, uk).representative))))

    mesh, sol, dual = torsion128
    A = tensor_A(sol, dual, *TORSION)
    lin_err = 0.0
    for _ in range(20):
        V1 = G.VelocityField(rng.normal(size=(mesh.nv, 2)))
        V2 = G.VelocityField(rng.normal(size=(mesh.nv, 2)))
        a, b = rng.normal(size=2)
        lin_err = max(lin_err, abs(volume_form(A, a * V1 + b * V2)
                                   - a * volume_form(A, V1) - b * volume_form(A, V2)))
    trans = max(abs(volume_form(A, G.translation(mesh, d))) for d in rng.normal(size=(10, 2)))

    sandwich = True
    small = G.square(3)
    fq, gq = I.Quadratic(2), I.Power(2.0)
    for _ in range(50):
        S = [P1Function(small, rng.normal(size=small.nv)) for _ in range(3)]
        Ss = [P0VectorField(small, rng.normal(size=(small.ns, 2))) for _ in range(3)]
        r = minmax_form(S, Ss, fq, gq, G.VelocityField(rng.normal(size=(small.nv, 2))))
        sandwich &= r.value <= r.minmax_value + 1e-12
    line = G.interval(0.0, 2.0, 100)
    f1, g1 = exact1d.integrands()
    genuine = minmax_form(exact1d.relaxed_solution_family(np.linspace(0, 1, 5), line),
                          [exact1d.dual_field(line), exact1d.dual_field(line, "feasible")],
                          f1, g1, G.VelocityField(1.0 - line.vertices[:, 0] / 2))
    saddle = abs(genuine.saddle_gap) <= 1e-12

    ok = fy_min >= -1e-12 and sub_max <= 1e-10 and lin_err <= 1e-12 and trans <= 1e-12 and sandwich and saddle
    record(8, ok, f"Fenchel-Young min={fy_min:.1e}, subgradient gap max={sub_max:.1e}, "
                  f"linearity err={lin_err:.1e}, translation={trans:.1e}, sandwich={sandwich}, "
                  f"genuine saddle gap={genuine.saddle_gap:.1e}")
    assert ok
