"""Simplicial meshes in one and two dimensions, P1 velocity fields and the
deformation x -> x + eps V(x)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "SimplicialMesh", "VelocityField", "DeformationRecord",
    "interval", "square", "disk", "deform", "boundary_quadrature",
    "compactly_supported", "read_mesh", "write_mesh",
    "dilation", "translation", "hat_bump",
]


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _boundary_facets_of(simplices, dim):
    """Facets (as sorted vertex tuples) that belong to exactly one simplex."""
    count = {}
    for s in simplices:
        for k in range(dim + 1):
            facet = tuple(sorted(int(v) for j, v in enumerate(s) if j != k))
            count[facet] = count.get(facet, 0) + 1
    return np.array(sorted(f for f, c in count.items() if c == 1), dtype=np.int64).reshape(-1, dim)


class SimplicialMesh:
    """Immutable conforming simplicial mesh of an open bounded set.

    Simplices are stored positively oriented.  Boundary facets are computed
    from the connectivity when not given; each carries the adjacent simplex,
    its measure and its outward unit normal.
    """

    def __init__(self, vertices, simplices, boundary_facets=None):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        dim = vertices.shape[1]
        if dim not in (1, 2):
            raise ValueError("only 1D and 2D meshes are supported")
        simplices = np.array(simplices, dtype=np.int64).reshape(-1, dim + 1)
        if simplices.size and (simplices.min() < 0 or simplices.max() >= len(vertices)):
            raise ValueError("simplex refers to a missing vertex")

        # orient positively
        edges = vertices[simplices[:, 1:]] - vertices[simplices[:, :1]]
        dets = np.linalg.det(edges) if dim > 1 else edges[:, 0, 0]
        flip = dets < 0
        if np.any(flip):
            simplices = simplices.copy()
            simplices[flip, 0], simplices[flip, 1] = simplices[flip, 1], simplices[flip, 0].copy()
            dets = np.abs(dets)
        bad = np.flatnonzero(dets <= 0)
        if bad.size:
            raise ValueError(f"degenerate simplex {int(bad[0])} (nonpositive measure)")

        self.dim = dim
        self.vertices = _frozen(vertices, float)
        self.simplices = _frozen(simplices, np.int64)
        if boundary_facets is None:
            boundary_facets = _boundary_facets_of(simplices, dim)
        self.boundary_facets = _frozen(np.asarray(boundary_facets, dtype=np.int64).reshape(-1, dim), np.int64)

    # -- sizes -------------------------------------------------------------
    @property
    def nv(self):
        return len(self.vertices)

    @property
    def ns(self):
        return len(self.simplices)

    @property
    def nb(self):
        return len(self.boundary_facets)

    def __repr__(self):
        return f"SimplicialMesh(dim={self.dim}, nv={self.nv}, ns={self.ns}, nb={self.nb})"

    # -- element geometry ----------------------------------------------------
    @cached_property
    def _edge_matrices(self):
        x = self.vertices[self.simplices]
        return np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns are edges

    @cached_property
    def volumes(self):
        from math import factorial
        e = self._edge_matrices
        det = np.linalg.det(e) if self.dim > 1 else e[:, 0, 0]
        return _frozen(det / factorial(self.dim), float)

    @cached_property
    def barycentric_gradients(self):
        """Gradients of the P1 hat functions, shape ``(ns, dim+1, dim)``."""
        inv = np.linalg.inv(self._edge_matrices)  # rows: grads of lambda_1..lambda_d
        g = np.empty((self.ns, self.dim + 1, self.dim))
        g[:, 1:, :] = inv
        g[:, 0, :] = -inv.sum(axis=1)
        return _frozen(g, float)

    @cached_property
    def centroids(self):
        return _frozen(self.vertices[self.simplices].mean(axis=1), float)

    @cached_property
    def lumped_mass(self):
        m = np.zeros(self.nv)
        np.add.at(m, self.simplices.ravel(), np.repeat(self.volumes / (self.dim + 1), self.dim + 1))
        return _frozen(m, float)

    @cached_property
    def h(self):
        """Largest edge length."""
        x = self.vertices[self.simplices]
        d = self.dim + 1
        lengths = [np.linalg.norm(x[:, i] - x[:, j], axis=1) for i in range(d) for j in range(i + 1, d)]
        return float(np.max(lengths))

    @property
    def volume(self):
        return float(np.sum(self.volumes))

    # -- boundary -------------------------------------------------------------
    @cached_property
    def _facet_data(self):
        dim = self.dim
        owner = {}
        for t, s in enumerate(self.simplices):
            for k in range(dim + 1):
                facet = tuple(sorted(int(v) for j, v in enumerate(s) if j != k))
                owner.setdefault(facet, t)
        elems = np.empty(self.nb, dtype=np.int64)
        for b, facet in enumerate(self.boundary_facets):
            key = tuple(sorted(int(v) for v in facet))
            if key not in owner:
                raise ValueError(f"boundary facet {b} is not a facet of any simplex")
            elems[b] = owner[key]
        x = self.vertices[self.boundary_facets]  # (nb, dim, dim)
        mid = x.mean(axis=1)
        if dim == 1:
            normals = np.ones((self.nb, 1))
            measures = np.ones(self.nb)
        else:
            t = x[:, 1] - x[:, 0]
            measures = np.linalg.norm(t, axis=1)
            normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / measures[:, None]
        outward = np.sum(normals * (mid - self.centroids[elems]), axis=1)
        normals = normals * np.where(outward < 0, -1.0, 1.0)[:, None]
        return _frozen(elems, np.int64), _frozen(normals, float), _frozen(measures, float), _frozen(mid, float)

    @property
    def facet_elements(self):
        return self._facet_data[0]

    @property
    def facet_normals(self):
        return self._facet_data[1]

    @property
    def facet_measures(self):
        return self._facet_data[2]

    @property
    def facet_midpoints(self):
        return self._facet_data[3]

    @cached_property
    def boundary_vertex_mask(self):
        mask = np.zeros(self.nv, dtype=bool)
        mask[self.boundary_facets.ravel()] = True
        mask.setflags(write=False)
        return mask

    @cached_property
    def vertex_neighbors(self):
        """Sparse boolean adjacency (vertices sharing a simplex)."""
        import scipy.sparse as sp
        s = self.simplices
        rows = np.repeat(s, self.dim + 1, axis=1).ravel()
        cols = np.tile(s, (1, self.dim + 1)).ravel()
        a = sp.coo_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(self.nv, self.nv))
        return a.tocsr()

    @cached_property
    def deep_interior_mask(self):
        """Vertices that are neither on the boundary nor adjacent to it."""
        near = self.vertex_neighbors @ self.boundary_vertex_mask.astype(float) > 0
        mask = ~(near | self.boundary_vertex_mask)
        mask.setflags(write=False)
        return mask

    def with_vertices(self, vertices):
        return SimplicialMesh(vertices, self.simplices, self.boundary_facets)


@dataclass(frozen=True)
class VelocityField:
    """Piecewise-linear vector field given by its nodal values."""

    nodal_values: np.ndarray

    def __post_init__(self):
        v = np.array(self.nodal_values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        v.setflags(write=False)
        object.__setattr__(self, "nodal_values", v)

    @classmethod
    def from_function(cls, mesh, func):
        vals = np.asarray(func(np.array(mesh.vertices)), dtype=float).reshape(mesh.nv, mesh.dim)
        return cls(vals)

    @classmethod
    def zeros(cls, mesh):
        return cls(np.zeros((mesh.nv, mesh.dim)))

    def _check(self, mesh):
        if self.nodal_values.shape != (mesh.nv, mesh.dim):
            raise ValueError(f"velocity has shape {self.nodal_values.shape}, mesh needs {(mesh.nv, mesh.dim)}")

    def jacobians(self, mesh):
        """Element-constant DV, shape ``(ns, dim, dim)`` with ``DV[i, j] = d_j V_i``."""
        self._check(mesh)
        vloc = self.nodal_values[mesh.simplices]  # (ns, d+1, dim)
        # differences against vertex 0 make DV of a constant field exactly zero
        diff = vloc[:, 1:] - vloc[:, :1]
        return np.einsum("tvi,tvj->tij", diff, mesh.barycentric_gradients[:, 1:])

    def divergence(self, mesh):
        return np.trace(self.jacobians(mesh), axis1=1, axis2=2)

    def lipschitz(self, mesh):
        dv = self.jacobians(mesh)
        return float(np.max(np.linalg.norm(dv, ord=2, axis=(1, 2)))) if len(dv) else 0.0

    def at(self, mesh, points_bary):
        """Values at barycentric points ``(ns, k, dim+1)`` -> ``(ns, k, dim)``."""
        return np.einsum("tkv,tvi->tki", points_bary, self.nodal_values[mesh.simplices])

    def __add__(self, other):
        return VelocityField(self.nodal_values + other.nodal_values)

    def __mul__(self, c):
        return VelocityField(float(c) * self.nodal_values)

    __rmul__ = __mul__

    def to_json(self):
        return self.nodal_values.tolist()

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(np.asarray(obj, dtype=float))


@dataclass(frozen=True)
class DeformationRecord:
    epsilon: float
    deformed_mesh: SimplicialMesh
    element_jacobians: np.ndarray
    element_jacobian_dets: np.ndarray
    lipschitz: float

    @property
    def invertibility_threshold(self):
        """Largest eps for which eps * Lip(V) < 1."""
        return np.inf if self.lipschitz == 0 else 1.0 / self.lipschitz


def deform(mesh, V, eps):
    """Move every vertex to x + eps V(x); connectivity is unchanged."""
    eps = float(eps)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    dv = V.jacobians(mesh)
    lip = float(np.max(np.linalg.norm(dv, ord=2, axis=(1, 2)))) if len(dv) else 0.0
    if eps * lip >= 1.0:
        raise ValueError(f"eps * Lip(V) = {eps * lip:.3g} >= 1: deformation may not be invertible")
    jac = np.eye(mesh.dim)[None] + eps * dv
    dets = np.linalg.det(jac)
    bad = np.flatnonzero(dets <= 0)
    if bad.size:
        raise ValueError(f"deformation degenerates element {int(bad[0])} (det = {dets[bad[0]]:.3g})")
    if eps == 0.0:
        new = mesh
    else:
        new = mesh.with_vertices(mesh.vertices + eps * V.nodal_values)
    return DeformationRecord(eps, new, jac, dets, lip)


def boundary_quadrature(mesh):
    """Midpoint rule on each boundary facet: ``(points, weights, normals)``."""
    return (np.array(mesh.facet_midpoints), np.array(mesh.facet_measures), np.array(mesh.facet_normals))


def compactly_supported(V, mesh):
    """True when V vanishes on every boundary vertex and its one-ring."""
    V._check(mesh)
    outer = ~mesh.deep_interior_mask
    return bool(not np.any(V.nodal_values[outer]))


# -- named velocity families ------------------------------------------------

def dilation(mesh, center=None):
    c = np.zeros(mesh.dim) if center is None else np.asarray(center, dtype=float)
    return VelocityField(mesh.vertices - c)


def translation(mesh, direction=None):
    d = np.eye(mesh.dim)[0] if direction is None else np.asarray(direction, dtype=float)
    return VelocityField(np.tile(d, (mesh.nv, 1)))


def hat_bump(mesh, vertex, direction=None):
    d = np.eye(mesh.dim)[0] if direction is None else np.asarray(direction, dtype=float)
    v = np.zeros((mesh.nv, mesh.dim))
    v[int(vertex)] = d
    return VelocityField(v)


# -- generators ------------------------------------------------------------

def interval(a, b, n):
    """Uniform mesh of (a, b) with n elements."""
    if not b > a or n < 1:
        raise ValueError("need a < b and n >= 1")
    x = np.linspace(a, b, int(n) + 1)
    simplices = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    return SimplicialMesh(x[:, None], simplices, [[0], [n]])


def square(n, a=0.0, b=1.0):
    """Criss-cross-free structured triangulation of (a, b)^2 with n x n cells."""
    t = np.linspace(a, b, n + 1)
    X, Y = np.meshgrid(t, t, indexing="xy")
    verts = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    tris = []
    for j in range(n):
        for i in range(n):
            v00, v10, v01, v11 = idx[j, i], idx[j, i + 1], idx[j + 1, i], idx[j + 1, i + 1]
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return SimplicialMesh(verts, tris)


def disk(r, n):
    """Disk of radius r approximated by an inscribed n-gon.

    Vertices lie on concentric rings spaced ~ r / round(n / 2 pi); ring k
    carries about n k / K points.  Consecutive rings are stitched by
    walking both rings in angle, which is deterministic and keeps
    elements close to equilateral.
    """
    n = int(n)
    if n < 3:
        raise ValueError("disk needs at least 3 boundary vertices")
    K = max(1, int(round(n / (2 * np.pi))))
    verts = [np.zeros(2)]
    rings = [np.array([0])]
    angles = [np.zeros(1)]
    for k in range(1, K + 1):
        m = n if k == K else max(3, int(round(n * k / K)))
        offset = 0.0 if k % 2 else np.pi / m
        th = offset + 2 * np.pi * np.arange(m) / m
        start = len(verts)
        verts.extend(r * k / K * np.stack([np.cos(th), np.sin(th)], axis=1))
        rings.append(np.arange(start, start + m))
        angles.append(th)
    verts = np.array(verts)

    tris = []
    for k in range(1, K + 1):
        inner, outer = rings[k - 1], rings[k]
        ain, aout = angles[k - 1], angles[k]
        if len(inner) == 1:
            m = len(outer)
            tris.extend((inner[0], outer[j], outer[(j + 1) % m]) for j in range(m))
            continue
        mi, mo = len(inner), len(outer)
        # start both walks at the smallest angle of each ring
        i = j = 0
        ci = cj = 0
        while ci < mi or cj < mo:
            a_next_in = ain[(i + 1) % mi] + 2 * np.pi * ((i + 1) // mi)
            a_next_out = aout[(j + 1) % mo] + 2 * np.pi * ((j + 1) // mo)
            if cj >= mo or (ci < mi and a_next_in < a_next_out):
                tris.append((inner[i % mi], inner[(i + 1) % mi], outer[j % mo]))
                i += 1
                ci += 1
            else:
                tris.append((inner[i % mi], outer[(j + 1) % mo], outer[j % mo]))
                j += 1
                cj += 1
    boundary = np.stack([rings[K], np.roll(rings[K], -1)], axis=1)
    return SimplicialMesh(verts, tris, boundary)


# -- text format -----------------------------------------------------------

def write_mesh(mesh, path):
    """Write ``dim nv ns nb`` followed by vertex, simplex and facet lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.dim} {mesh.nv} {mesh.ns} {mesh.nb}\n")
        for x in mesh.vertices:
            fh.write(" ".join(repr(float(c)) for c in x) + "\n")
        for s in mesh.simplices:
            fh.write(" ".join(str(int(i)) for i in s) + "\n")
        for f in mesh.boundary_facets:
            fh.write(" ".join(str(int(i)) for i in f) + "\n")


def read_mesh(path):
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    dim, nv, ns, nb = (int(x) for x in lines[0])
    body = lines[1:]
    if len(body) != nv + ns + nb:
        raise ValueError(f"{path}: expected {nv + ns + nb} data lines, found {len(body)}")
    verts = np.array([[float(c) for c in ln] for ln in body[:nv]]).reshape(nv, dim)
    simp = np.array([[int(c) for c in ln] for ln in body[nv:nv + ns]]).reshape(ns, dim + 1)
    facets = np.array([[int(c) for c in ln] for ln in body[nv + ns:]], dtype=np.int64).reshape(nb, dim)
    return SimplicialMesh(verts, simp, facets)
