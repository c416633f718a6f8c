"""P1 functions, P0 vector fields and the discrete primal/dual energies.

``g`` is integrated with vertex (lumped) quadrature so that its
subdifferential acts node by node; the discrete divergence is defined by
the lumped weak identity

    m_i d_i = - sum_T |T| sigma_T . grad phi_i,

which makes ``primal_energy(u) + dual_energy(sigma) >= 0`` hold exactly for
every discrete pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .integrands import ExtendedReal

__all__ = [
    "P1Function", "P0VectorField", "DiscreteDivergence",
    "gradient", "gradient_operator", "stiffness_matrix", "primal_energy",
    "weak_divergence", "dual_energy", "element_g_average", "active_nodes",
]


def _check_case(case):
    if case not in ("D", "N"):
        raise ValueError(f"case must be 'D' or 'N', got {case!r}")


def active_nodes(mesh, case):
    """Nodes carrying a divergence constraint: interior in case D, all in N."""
    _check_case(case)
    return ~mesh.boundary_vertex_mask if case == "D" else np.ones(mesh.nv, dtype=bool)


@dataclass(frozen=True)
class P1Function:
    mesh: object
    dof: np.ndarray
    dirichlet_mask: np.ndarray | None = None

    def __post_init__(self):
        dof = np.array(self.dof, dtype=float).reshape(self.mesh.nv)
        mask = self.dirichlet_mask
        if mask is not None:
            mask = np.asarray(mask, dtype=bool).reshape(self.mesh.nv)
            if np.any(dof[mask] != 0.0):
                raise ValueError("masked Dirichlet dofs must be exactly zero")
        object.__setattr__(self, "dof", dof)
        object.__setattr__(self, "dirichlet_mask", mask)

    @classmethod
    def interpolate(cls, mesh, func, case=None):
        dof = np.asarray(func(np.array(mesh.vertices)), dtype=float).reshape(mesh.nv)
        mask = None
        if case == "D":
            mask = mesh.boundary_vertex_mask
            dof = np.where(mask, 0.0, dof)
        return cls(mesh, dof, mask)

    @classmethod
    def zeros(cls, mesh, case=None):
        mask = mesh.boundary_vertex_mask if case == "D" else None
        return cls(mesh, np.zeros(mesh.nv), mask)

    def on(self, mesh):
        """The same nodal values on a mesh with identical connectivity."""
        return P1Function(mesh, self.dof, self.dirichlet_mask)

    def at_facet_midpoints(self):
        return self.dof[self.mesh.boundary_facets].mean(axis=1)


@dataclass(frozen=True)
class P0VectorField:
    mesh: object
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.mesh.ns, self.mesh.dim)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DiscreteDivergence:
    """Nodal divergence values; ``active`` marks nodes where it is meaningful."""

    values: np.ndarray
    active: np.ndarray


def gradient(u):
    m = u.mesh
    return P0VectorField(m, np.einsum("tv,tvk->tk", u.dof[m.simplices], m.barycentric_gradients))


def gradient_operator(mesh):
    """Sparse G with ``(G u).reshape(ns, dim)`` the element gradients."""
    ns, d = mesh.ns, mesh.dim
    rows = (np.arange(ns)[:, None, None] * d + np.arange(d)[None, None, :])
    rows = np.broadcast_to(rows, (ns, d + 1, d))
    cols = np.broadcast_to(mesh.simplices[:, :, None], (ns, d + 1, d))
    return sp.csr_matrix((mesh.barycentric_gradients.ravel(), (rows.ravel(), cols.ravel())),
                         shape=(ns * d, mesh.nv))


def stiffness_matrix(mesh, weights=None):
    """sum_T w_T |T| grad phi_i . grad phi_j (w defaults to 1)."""
    w = mesh.volumes if weights is None else mesh.volumes * weights
    g = mesh.barycentric_gradients
    local = np.einsum("t,tik,tjk->tij", w, g, g)
    s = mesh.simplices
    rows = np.repeat(s, mesh.dim + 1, axis=1)
    cols = np.tile(s, (1, mesh.dim + 1))
    return sp.csr_matrix((local.ravel(), (rows.ravel(), cols.ravel())), shape=(mesh.nv, mesh.nv))


def element_g_average(mesh, g, dof):
    """Lumped element average of g(u): mean of g over the element's vertices."""
    return g.values(dof)[mesh.simplices].mean(axis=1)


def primal_energy(mesh, f, g, u):
    """sum_T |T| f(grad u_T) + sum_i m_i g(u_i)."""
    if f.dim != mesh.dim:
        raise ValueError(f"integrand dim {f.dim} does not match mesh dim {mesh.dim}")
    grads = gradient(u).values
    return float(np.dot(mesh.volumes, f.values(grads)) + np.dot(mesh.lumped_mass, g.values(u.dof)))


def weak_divergence(sigma, case):
    """Lumped weak divergence of a P0 field.

    In case D only interior nodes are active; in case N the same formula at
    boundary nodes encodes sigma . n = 0 weakly.
    """
    m = sigma.mesh
    contrib = np.einsum("t,tk,tvk->tv", m.volumes, sigma.values, m.barycentric_gradients)
    b = np.zeros(m.nv)
    np.add.at(b, m.simplices.ravel(), contrib.ravel())
    return DiscreteDivergence(-b / m.lumped_mass, active_nodes(m, case))


def dual_energy(mesh, f, g, sigma, case, div=None):
    """sum_T |T| f*(sigma_T) + sum_{active i} m_i g*(d_i) - sum_{inactive i} m_i g(0).

    In case D the divergence at a boundary vertex is unconstrained; its best
    contribution is ``inf_t g*(t) = -g(0)``, which vanishes when g(0) = 0.
    The value is +inf when any conjugate term is.
    """
    if div is None:
        div = weak_divergence(sigma, case)
    fs = f.conj_values(sigma.values)
    gs = g.conj_values(div.values[div.active])
    if not (np.all(np.isfinite(fs)) and np.all(np.isfinite(gs))):
        return ExtendedReal.inf()
    val = float(np.dot(mesh.volumes, fs) + np.dot(mesh.lumped_mass[div.active], gs))
    g0 = float(g.values(np.array(0.0)))
    if g0 != 0.0:
        val -= g0 * float(mesh.lumped_mass[~div.active].sum())
    return ExtendedReal(val)
