"""Energy-momentum tensor and the three evaluations of the shape derivative.

For a pair ``(u, sigma)`` the tensor is assembled per element as

    A_T = grad u_T (x) sigma_T - [f(grad u_T) + gbar_T] I,

with ``(a (x) b)[i, j] = a_i b_j`` and ``gbar_T`` the mean of ``g`` over the
element's vertices.  Against a P1 velocity the volume form
``sum_T |T| A_T : DV_T`` (with ``DV[i, j] = d_j V_i``) is exact.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .fem import P0VectorField, P1Function, element_g_average, gradient

__all__ = [
    "MomentumTensorField", "DerivativeReport", "MinMaxResult",
    "tensor_A", "volume_form", "minmax_form", "boundary_form", "boundary_flux",
]


@dataclass(frozen=True)
class MomentumTensorField:
    mesh: object
    values: np.ndarray  # (ns, dim, dim)

    def __post_init__(self):
        v = np.array(self.values, dtype=float).reshape(self.mesh.ns, self.mesh.dim, self.mesh.dim)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, mesh, matrix):
        m = np.asarray(matrix, dtype=float).reshape(mesh.dim, mesh.dim)
        return cls(mesh, np.broadcast_to(m, (mesh.ns, mesh.dim, mesh.dim)))

    def trace(self):
        return np.trace(self.values, axis1=1, axis2=2)


def _as_u(u):
    return u.u if hasattr(u, "u") and not isinstance(u, P1Function) else u


def _as_sigma(s):
    if isinstance(s, P0VectorField):
        return s
    return s.sigma


def tensor_A(u, sigma, f, g):
    """Per-element momentum tensor of the pair ``(u, sigma)``."""
    u, sigma = _as_u(u), _as_sigma(sigma)
    mesh = u.mesh
    if sigma.mesh.ns != mesh.ns or sigma.mesh.dim != mesh.dim:
        raise ValueError("u and sigma live on different meshes")
    z = gradient(u).values
    s = sigma.values
    energy = f.values(z) + element_g_average(mesh, g, u.dof)
    A = z[:, :, None] * s[:, None, :]
    A -= energy[:, None, None] * np.eye(mesh.dim)[None]
    return MomentumTensorField(mesh, A)


def volume_form(A, V):
    """sum_T |T| A_T : DV_T."""
    mesh = A.mesh
    dv = V.jacobians(mesh)
    return float(np.dot(mesh.volumes, np.einsum("tij,tij->t", A.values, dv)))


@dataclass(frozen=True)
class MinMaxResult:
    value: float          # max over u of min over sigma
    minmax_value: float   # min over sigma of max over u
    argpair: tuple        # (u index, sigma index) attaining ``value``
    matrix: np.ndarray = field(repr=False)

    @property
    def saddle_gap(self):
        return self.minmax_value - self.value

    def is_saddle(self, tol):
        return self.saddle_gap <= tol

    def __iter__(self):  # allows ``value, argpair = minmax_form(...)``
        return iter((self.value, self.argpair))


def minmax_form(S_candidates, Sstar_candidates, f, g, V):
    """Max-min of the volume form over finite candidate lists.

    Both orders are computed; ``value <= minmax_value`` always holds and the
    two agree when the lists contain a saddle point.
    """
    S, Ss = list(S_candidates), list(Sstar_candidates)
    if not S or not Ss:
        raise ValueError("candidate lists must be nonempty")
    M = np.array([[volume_form(tensor_A(u, s, f, g), V) for s in Ss] for u in S])
    row_min = M.min(axis=1)
    i = int(np.argmax(row_min))
    j = int(np.argmin(M[i]))
    return MinMaxResult(float(row_min[i]), float(M.max(axis=0).min()), (i, j), M)


def _boundary_lumped_mass(mesh):
    b = np.zeros(mesh.nv)
    w = np.repeat(mesh.facet_measures / mesh.dim, mesh.dim)
    np.add.at(b, mesh.boundary_facets.ravel(), w)
    return b


def boundary_flux(u, sigma, g):
    """Nodal normal flux ``sigma . n`` recovered from the discrete Green identity.

    ``b_i (sigma.n)_i = sum_T |T| sigma_T . grad phi_i + m_i t_i`` at boundary
    vertices, with ``t_i`` the (midpoint of the) subdifferential of g at u_i
    standing in for the divergence.
    """
    mesh = u.mesh
    contrib = np.einsum("t,tk,tvk->tv", mesh.volumes, sigma.values, mesh.barycentric_gradients)
    r = np.zeros(mesh.nv)
    np.add.at(r, mesh.simplices.ravel(), contrib.ravel())
    lo, hi = g.subdiff_interval(u.dof)
    t = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi),
                 np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0)))
    b = _boundary_lumped_mass(mesh)
    out = np.full(mesh.nv, np.nan)
    on = mesh.boundary_vertex_mask
    out[on] = (r[on] + mesh.lumped_mass[on] * t[on]) / b[on]
    return out


def boundary_form(u, sigma, f, g, V, case, trace="flux"):
    """Boundary-integral form of the shape derivative.

    Case ``"D"`` integrates ``f*(sigma) (V.n)``; case ``"N"`` integrates
    ``-[f(grad u) + g(u)] (V.n)``, the sign that matches ``J = -min E`` and
    the volume form.  Facets use the midpoint rule.  In case D
    the trace of sigma is taken either from the adjacent element
    (``trace="adjacent"``) or from the recovered nodal normal flux
    (``trace="flux"``, the default), which is markedly more accurate on
    curved polygonal boundaries.
    """
    u = _as_u(u)
    mesh = u.mesh
    facets = mesh.boundary_facets
    normals = mesh.facet_normals
    Vn = np.einsum("fk,fk->f", V.nodal_values[facets].mean(axis=1), normals)
    if case == "N":
        z = gradient(u).values[mesh.facet_elements]
        dens = -(f.values(z) + g.values(u.at_facet_midpoints()))
    elif case == "D":
        if sigma is None:
            raise ValueError("case D needs a dual field")
        sigma = _as_sigma(sigma)
        if trace == "adjacent":
            s = sigma.values[mesh.facet_elements]
        elif trace == "flux":
            flux = boundary_flux(u, sigma, g)
            s = flux[facets].mean(axis=1)[:, None] * normals
        else:
            raise ValueError(f"unknown trace {trace!r}")
        dens = f.conj_values(s)
    else:
        raise ValueError(f"case must be 'D' or 'N', got {case!r}")
    vals = dens * Vn
    # facets with V.n == 0 contribute nothing even where the density is infinite
    vals = np.where(Vn == 0.0, 0.0, vals)
    return float(np.dot(mesh.facet_measures, vals))


@dataclass
class DerivativeReport:
    J_primal: float
    J_dual: float | None = None
    volume_form_value: float | None = None
    boundary_form_value: float | None = None
    minmax_value: float | None = None
    fd_extrapolated: float | None = None
    tolerances: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    case: str | None = None

    _TAGS = {
        "J_primal": "minus_min_primal_energy",
        "J_dual": "dual_energy",
        "volume_form_value": "volume_form",
        "boundary_form_value": "boundary_form",
        "minmax_value": "minmax_form",
        "fd_extrapolated": "fd_extrapolated",
    }

    def derivative_values(self):
        keys = ("volume_form_value", "boundary_form_value", "minmax_value", "fd_extrapolated")
        return {k: getattr(self, k) for k in keys if getattr(self, k) is not None}

    def to_json(self):
        out = {}
        for k, tag in self._TAGS.items():
            v = getattr(self, k)
            if v is not None:
                if k == "boundary_form_value" and self.case:
                    tag = f"{tag}_{self.case}"
                out[k] = {"value": _num(v), "formula": tag}
        if self.case:
            out["case"] = self.case
        out["tolerances"] = dict(self.tolerances)
        if self.extra:
            out["extra"] = self.extra
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        kw = {k: (obj[k]["value"] if k in obj else None) for k in cls._TAGS}
        return cls(**kw, tolerances=dict(obj.get("tolerances", {})), extra=dict(obj.get("extra", {})),
                   case=obj.get("case"))


def _num(v):
    v = float(v)
    if np.isfinite(v):
        return v
    return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
