"""Closed-form oracle for a one-dimensional nonsmooth problem.

On ``(0, a)`` with ``f = |.|`` and ``g(u) = (1 - u)_+`` the minimum of the
relaxed energy

    int_0^a |u'| + (1 - u)_+ dx + |u(0)| + |u(a)|

is ``min(2, a)``, so ``J = -min(2, a)``.  At ``a = 2`` every constant
``u = lam`` with ``lam`` in ``[0, 1]`` is optimal and the one-sided shape
derivative is ``(V(0) - V(2))_+``, which is not linear in ``V``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .fem import P0VectorField, P1Function
from .geometry import interval
from .integrands import AbsNorm, HingeOneMinus

__all__ = [
    "Example1DConfig", "m_exact", "jprime_exact", "dual_exact", "dual_feasible",
    "dual_field", "relaxed_energy", "relaxed_solution_family", "solve_relaxed",
    "relaxed_J", "integrands",
]


@dataclass(frozen=True)
class Example1DConfig:
    a: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("interval length must be positive")


def integrands():
    """The pair ``(f, g)`` of the example."""
    return AbsNorm(1), HingeOneMinus()


def m_exact(a):
    a = float(a)
    if not a > 0:
        raise ValueError("interval length must be positive")
    return -min(2.0, a)


def jprime_exact(V0, V2):
    return max(float(V0) - float(V2), 0.0)


def _check_x(x, a=2.0):
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > a)):
        raise ValueError(f"x must lie in [0, {a}]")
    return x


def dual_exact(x):
    """The dual field ``-x - 1`` in the form usually quoted for this example.

    Its derivative is ``-1`` and ``sigma(2) - sigma(0) = -2``, but it leaves
    the unit ball for ``x > 0``; see :func:`dual_feasible`.
    """
    x = _check_x(x)
    return -x - 1.0


def dual_feasible(x):
    """``1 - x``: same derivative and same endpoint difference, with ``|sigma| <= 1``."""
    x = _check_x(x)
    return 1.0 - x


def dual_field(mesh, variant="printed"):
    """Element-wise (centroid) values of the dual field on a 1D mesh of (0, 2)."""
    fn = {"printed": dual_exact, "feasible": dual_feasible}[variant]
    return P0VectorField(mesh, fn(mesh.centroids[:, 0]))


def relaxed_energy(u):
    """Discrete relaxed energy with lumped quadrature for the hinge term."""
    mesh = u.mesh
    if mesh.dim != 1:
        raise ValueError("relaxed_energy needs a 1D mesh")
    x = mesh.vertices[:, 0]
    order = np.argsort(x)
    d = np.abs(np.diff(u.dof[mesh.simplices], axis=1))[:, 0]
    lo, hi = order[0], order[-1]
    return float(d.sum() + np.dot(mesh.lumped_mass, np.maximum(1.0 - u.dof, 0.0))
                 + abs(u.dof[lo]) + abs(u.dof[hi]))


def relaxed_solution_family(grid, mesh=None):
    """Constant functions ``u = lam``; all are relaxed minimisers at a = 2."""
    mesh = mesh or interval(0.0, 2.0, 200)
    out = []
    for lam in grid:
        lam = float(lam)
        if not 0.0 <= lam <= 1.0:
            raise ValueError("lam must lie in [0, 1]")
        out.append(P1Function(mesh, np.full(mesh.nv, lam)))
    return out


def solve_relaxed(mesh):
    """Exact minimiser of the discrete relaxed energy by linear programming.

    Returns ``(u, energy)``.
    """
    if mesh.dim != 1:
        raise ValueError("solve_relaxed needs a 1D mesh")
    nv, ns = mesh.nv, mesh.ns
    x = mesh.vertices[:, 0]
    lo, hi = int(np.argmin(x)), int(np.argmax(x))
    # variables: u (nv), s (ns) >= |jump|, t (nv) >= (1-u)_+, b (2) >= |u_end|
    nvar = nv + ns + nv + 2
    c = np.concatenate([np.zeros(nv), np.ones(ns), mesh.lumped_mass, np.ones(2)])
    e = np.arange(ns)
    i0, i1 = mesh.simplices[:, 0], mesh.simplices[:, 1]
    rows, cols, vals = [], [], []

    def add(r, cidx, v):
        rows.extend(r), cols.extend(cidx), vals.extend(v)

    # u1 - u0 - s <= 0 and u0 - u1 - s <= 0
    add(e, i1, np.ones(ns)); add(e, i0, -np.ones(ns)); add(e, nv + e, -np.ones(ns))
    add(ns + e, i0, np.ones(ns)); add(ns + e, i1, -np.ones(ns)); add(ns + e, nv + e, -np.ones(ns))
    # 1 - u - t <= 0
    k = np.arange(nv)
    add(2 * ns + k, k, -np.ones(nv)); add(2 * ns + k, nv + ns + k, -np.ones(nv))
    r0 = 2 * ns + nv
    for j, idx in enumerate((lo, hi)):
        add([r0 + 2 * j, r0 + 2 * j], [idx, nvar - 2 + j], [1.0, -1.0])
        add([r0 + 2 * j + 1, r0 + 2 * j + 1], [idx, nvar - 2 + j], [-1.0, -1.0])
    nrow = r0 + 4
    A = sp.csr_matrix((vals, (rows, cols)), shape=(nrow, nvar))
    b = np.zeros(nrow)
    b[2 * ns:2 * ns + nv] = -1.0
    bounds = [(None, None)] * nv + [(0, None)] * (ns + nv + 2)
    res = linprog(c, A_ub=A, b_ub=b, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"linear program failed: {res.message}")
    u = P1Function(mesh, res.x[:nv])
    return u, relaxed_energy(u)


def relaxed_J(mesh):
    """``J = -min`` of the discrete relaxed energy; usable as an fd solver."""
    return -solve_relaxed(mesh)[1]
