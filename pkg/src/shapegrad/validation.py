"""Independent checks on computed shape derivatives.

Finite-difference quotients re-solve the problem on ``(id + eps V)(mesh)``;
the transported energies evaluate the deformed problem on the reference
mesh; conservation residuals test the tensor against interior hat fields.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .fem import P0VectorField, active_nodes, dual_energy, gradient, primal_energy, weak_divergence
from .geometry import deform
from .integrands import ExtendedReal
from .shapederiv import DerivativeReport, boundary_form, minmax_form, tensor_A, volume_form
from .solvers import SolverOptions, duality_gap, reconstruct_dual, solve_primal

__all__ = [
    "QuotientTable", "ConservationReport", "CrossCheckResult",
    "fd_quotient", "fd_sweep", "conservation_residual", "transported_energy",
    "transported_dual_energy", "piola_transform", "cross_check", "derive_report",
]


def _default_solver(f, g, case, opts):
    def solve(mesh):
        return -solve_primal(mesh, f, g, case, opts).energy
    return solve


def _thread_count():
    try:
        return max(1, int(os.environ.get("SHAPEGRAD_THREADS", "1")))
    except ValueError:
        return 1


def fd_quotient(mesh, f, g, case, V, eps, opts=None, solver=None, J0=None):
    """One-sided quotient ``(J(mesh_eps) - J(mesh)) / eps``.

    ``solver`` maps a mesh to ``J``; by default it is ``-solve_primal(...).energy``
    with the same options on both meshes.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    solve = solver or _default_solver(f, g, case, opts)
    if J0 is None:
        J0 = solve(mesh)
    Je = solve(deform(mesh, V, eps).deformed_mesh)
    return (Je - J0) / eps


@dataclass(frozen=True)
class QuotientTable:
    epsilons: tuple
    q_values: tuple
    extrapolated: float
    observed_order: float
    noisy: bool = False
    J0: float = float("nan")

    def to_json(self):
        d = asdict(self)
        d["epsilons"], d["q_values"] = list(self.epsilons), list(self.q_values)
        return d

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epsilon", "q", "abs_error_vs_extrapolated"])
        for e, q in zip(self.epsilons, self.q_values):
            w.writerow([repr(e), repr(q), repr(abs(q - self.extrapolated))])
        return buf.getvalue()


def richardson(eps1, q1, eps2, q2):
    """First-order Richardson extrapolation to eps = 0."""
    return (eps1 * q2 - eps2 * q1) / (eps1 - eps2)


def fd_sweep(mesh, f, g, case, V, eps_schedule, opts=None, solver=None, noise_tol=None):
    eps = [float(e) for e in eps_schedule]
    if len(eps) < 3:
        raise ValueError("need at least three epsilons")
    if any(b >= a for a, b in zip(eps, eps[1:])) or eps[-1] <= 0:
        raise ValueError("schedule must be positive and strictly descending")
    solve = solver or _default_solver(f, g, case, opts)
    J0 = solve(mesh)
    meshes = [deform(mesh, V, e).deformed_mesh for e in eps]
    nthreads = min(_thread_count(), len(eps))
    if nthreads > 1:
        with ThreadPoolExecutor(nthreads) as ex:
            Js = list(ex.map(solve, meshes))
    else:
        Js = [solve(m) for m in meshes]
    q = [(Je - J0) / e for Je, e in zip(Js, eps)]
    ext = richardson(eps[-2], q[-2], eps[-1], q[-1])

    err = np.abs(np.array(q) - ext)
    keep = err > 1e-14 * max(1.0, abs(ext))
    order = float("nan")
    if keep.sum() >= 2:
        order = float(np.polyfit(np.log(np.array(eps)[keep]), np.log(err[keep]), 1)[0])
    # under a first-order model q is monotone in eps
    dq = np.diff(q)
    tol = noise_tol if noise_tol is not None else 1e-8 * max(1.0, abs(ext)) / eps[-1]
    noisy = bool(np.any(dq > tol) and np.any(dq < -tol))
    return QuotientTable(tuple(eps), tuple(float(x) for x in q), float(ext), order, noisy, float(J0))


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConservationReport:
    residuals: np.ndarray
    probe_count: int
    normalization: str = "|volume_form(A, probe)| / ||D probe||_L2"
    probe_vertices: np.ndarray | None = field(default=None, repr=False)

    @property
    def max(self):
        return float(np.max(self.residuals))

    @property
    def mean(self):
        return float(np.mean(self.residuals))

    def to_json(self):
        return {"max": self.max, "mean": self.mean, "probe_count": self.probe_count,
                "normalization": self.normalization}


def conservation_residual(A, mesh=None, probes=None):
    """Residuals of the weak conservation law against compactly supported probes.

    Default probes are ``e_k phi_i`` for every vertex ``i`` whose closed
    one-ring avoids the boundary.
    """
    mesh = mesh or A.mesh
    if probes is not None:
        probes = list(probes)
        if not probes:
            raise ValueError("empty probe list")
        res = []
        for V in probes:
            dv = V.jacobians(mesh)
            nrm = np.sqrt(np.dot(mesh.volumes, np.einsum("tij,tij->t", dv, dv)))
            res.append(abs(volume_form(A, V)) / nrm if nrm > 0 else 0.0)
        return ConservationReport(np.array(res), len(res))

    verts = np.flatnonzero(mesh.deep_interior_mask)
    if verts.size == 0:
        raise ValueError("mesh has no interior vertex away from the boundary; refine it")
    bg = mesh.barycentric_gradients
    # (A grad phi_v)_k on each element, weighted by |T|
    contrib = np.einsum("t,tkj,tvj->tvk", mesh.volumes, A.values, bg)
    nodal = np.zeros((mesh.nv, mesh.dim))
    np.add.at(nodal, mesh.simplices.ravel(), contrib.reshape(-1, mesh.dim))
    sq = np.zeros(mesh.nv)
    np.add.at(sq, mesh.simplices.ravel(), (mesh.volumes[:, None] * np.sum(bg ** 2, axis=2)).ravel())
    res = np.abs(nodal[verts]) / np.sqrt(sq[verts])[:, None]
    return ConservationReport(res.ravel(), int(res.size), probe_vertices=verts)


# ---------------------------------------------------------------------------

def transported_energy(mesh, f, g, u, V, eps):
    """Deformed-domain energy of ``u o Psi_eps^{-1}`` evaluated on the reference mesh."""
    rec = deform(mesh, V, eps)
    beta = rec.element_jacobian_dets
    z = gradient(u).values
    zt = np.linalg.solve(np.transpose(rec.element_jacobians, (0, 2, 1)), z[:, :, None])[:, :, 0]
    w = mesh.volumes * beta
    mass = np.zeros(mesh.nv)
    np.add.at(mass, mesh.simplices.ravel(), np.repeat(w / (mesh.dim + 1), mesh.dim + 1))
    return float(np.dot(w, f.values(zt)) + np.dot(mass, g.values(u.dof)))


def piola_transform(sigma, rec):
    """``beta^{-1} DPsi sigma`` per element, as a field on the deformed mesh."""
    s = np.einsum("tij,tj->ti", rec.element_jacobians, sigma.values) / rec.element_jacobian_dets[:, None]
    return P0VectorField(rec.deformed_mesh, s)


def transported_dual_energy(mesh, f, g, sigma, V, eps, case):
    """Deformed-domain dual energy of the Piola transform of ``sigma``.

    The lumped divergence transforms nodally as ``d_i / beta_i`` with
    ``beta_i`` the ratio of deformed to reference lumped masses.
    """
    rec = deform(mesh, V, eps)
    beta = rec.element_jacobian_dets
    w = mesh.volumes * beta
    st = np.einsum("tij,tj->ti", rec.element_jacobians, sigma.values) / beta[:, None]
    mass = np.zeros(mesh.nv)
    np.add.at(mass, mesh.simplices.ravel(), np.repeat(w / (mesh.dim + 1), mesh.dim + 1))
    div = weak_divergence(sigma, case)
    act = div.active
    fs = f.conj_values(st)
    gs = g.conj_values(div.values[act] * mesh.lumped_mass[act] / mass[act])
    if not (np.all(np.isfinite(fs)) and np.all(np.isfinite(gs))):
        return ExtendedReal.inf()
    val = float(np.dot(w, fs) + np.dot(mass[act], gs))
    g0 = float(g.values(np.array(0.0)))
    if g0 != 0.0:
        val -= g0 * float(mass[~act].sum())
    return ExtendedReal(val)


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossCheckResult:
    passed: bool
    diffs: dict
    worst: tuple | None

    def to_json(self):
        return {"passed": self.passed, "worst": list(self.worst) if self.worst else None,
                "diffs": {k: {"diff": d, "tol": t} for k, (d, t) in self.diffs.items()}}


class CrossCheckError(AssertionError):
    pass


def cross_check(report, tolerances=None, raise_on_fail=False):
    """Compare every pair of derivative values present in ``report``.

    ``tolerances`` may hold ``abs`` and ``rel`` (tolerance ``abs + rel *
    max(|a|, |b|)``) and per-pair overrides keyed ``"name_a|name_b"``.
    """
    tol = {"abs": 1e-8, "rel": 2e-2}
    tol.update(tolerances or report.tolerances or {})
    vals = report.derivative_values()
    if len(vals) < 2:
        raise ValueError("cross_check needs at least two derivative values")
    diffs, worst, worst_ratio = {}, None, -1.0
    for (a, x), (b, y) in itertools.combinations(vals.items(), 2):
        key = f"{a}|{b}"
        t = tol.get(key, tol.get(f"{b}|{a}", tol["abs"] + tol["rel"] * max(abs(x), abs(y))))
        d = abs(x - y)
        diffs[key] = (float(d), float(t))
        ratio = d / t if t > 0 else (np.inf if d > 0 else 0.0)
        if ratio > worst_ratio:
            worst, worst_ratio = (a, b, float(d), float(t)), ratio
    passed = all(d <= t for d, t in diffs.values())
    res = CrossCheckResult(passed, diffs, worst)
    if raise_on_fail and not passed:
        raise CrossCheckError(f"{worst[0]} vs {worst[1]} differ by {worst[2]:.3e} > {worst[3]:.3e}")
    return res


def derive_report(mesh, f, g, case, V, opts=None, boundary=True, minmax=True,
                  fd_schedule=None, trace="flux", tolerances=None):
    """Solve once and evaluate every requested form of the derivative.

    Returns ``(report, solution, dual)``.
    """
    opts = opts or SolverOptions()
    sol = solve_primal(mesh, f, g, case, opts)
    dual = reconstruct_dual(mesh, f, g, sol, case)
    h = dual_energy(mesh, f, g, dual.sigma, case)
    A = tensor_A(sol, dual, f, g)
    rep = DerivativeReport(J_primal=sol.J, J_dual=None if h.infinite else h.value,
                           volume_form_value=volume_form(A, V), case=case)
    if boundary:
        rep.boundary_form_value = boundary_form(sol, dual, f, g, V, case, trace=trace)
    if minmax:
        rep.minmax_value = minmax_form([sol], [dual], f, g, V).value
    if fd_schedule:
        tab = fd_sweep(mesh, f, g, case, V, fd_schedule, opts)
        rep.fd_extrapolated = tab.extrapolated
        rep.extra["fd_table"] = tab.to_json()
    rep.tolerances = dict(tolerances or {"abs": 1e-8, "rel": 2e-2})
    rep.extra.update({
        "duality_gap": _finite(duality_gap(mesh, f, g, sol.u, dual.sigma, case)),
        "converged": sol.converged,
        "mesh_h": mesh.h,
        "membership_residual": dual.membership_residual,
        "divergence_residual": dual.divergence_residual,
    })
    return rep, sol, dual


def _finite(x):
    x = float(x)
    return x if np.isfinite(x) else "inf"
