"""Convex integrands with conjugates, subdifferentials and Moreau envelopes.

Gradient integrands ``f`` act on vectors of a fixed dimension, scalar
integrands ``g`` act on reals.  Every catalog kind has a closed-form Fenchel
conjugate; custom kinds fall back to a grid search whose error is reported.

Methods whose names end in ``_values`` (``values``, ``conj_values``, ...)
are vectorised over leading axes and return plain ndarrays with ``np.inf``
where a conjugate is infinite.  The scalar entry points (:func:`eval`,
:func:`conjugate`, :func:`subgradient`, :func:`fenchel_gap`) validate
dimensions and return :class:`ExtendedReal` for possibly infinite values.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import total_ordering

import numpy as np

__all__ = [
    "ExtendedReal", "SubdifferentialElement",
    "ConvexIntegrand", "Quadratic", "PowerNorm", "NonsmoothTorsion",
    "AbsNorm", "CustomIntegrand",
    "ScalarIntegrand", "Linear", "HingeOneMinus", "Power", "CustomScalar",
    "eval", "conjugate", "subgradient", "fenchel_gap",
    "integrand_from_json", "INDICATOR_TOL",
]

# Membership tolerance for indicator-type conjugates (relative to 1 + |point|).
INDICATOR_TOL = 1e-9


@total_ordering
@dataclass(frozen=True)
class ExtendedReal:
    """A real number or +inf, with +inf absorbing addition."""

    value: float = 0.0
    infinite: bool = False

    @classmethod
    def inf(cls):
        return cls(math.inf, True)

    @classmethod
    def of(cls, x):
        if isinstance(x, ExtendedReal):
            return x
        x = float(x)
        if x == math.inf:
            return cls.inf()
        if math.isnan(x) or x == -math.inf:
            raise ValueError(f"not an extended real in (-inf, +inf]: {x}")
        return cls(x, False)

    def __float__(self):
        return math.inf if self.infinite else self.value

    def __add__(self, other):
        other = ExtendedReal.of(other)
        if self.infinite or other.infinite:
            return ExtendedReal.inf()
        return ExtendedReal(self.value + other.value)

    __radd__ = __add__

    def __sub__(self, other):
        # only finite subtrahends make sense on (-inf, +inf]
        other = ExtendedReal.of(other)
        if other.infinite:
            raise ValueError("cannot subtract +inf")
        return self + (-other.value)

    def __eq__(self, other):
        try:
            other = ExtendedReal.of(other)
        except (TypeError, ValueError):
            return NotImplemented
        if self.infinite or other.infinite:
            return self.infinite and other.infinite
        return self.value == other.value

    def __lt__(self, other):
        other = ExtendedReal.of(other)
        if self.infinite:
            return False
        if other.infinite:
            return True
        return self.value < other.value

    def __hash__(self):
        return hash((self.infinite, None if self.infinite else self.value))

    def __repr__(self):
        return "ExtendedReal(+inf)" if self.infinite else f"ExtendedReal({self.value!r})"

    def to_json(self):
        return "inf" if self.infinite else self.value


@dataclass(frozen=True)
class SubdifferentialElement:
    """One element of a subdifferential together with a symbolic description
    of the whole set.

    ``set_kind`` is one of ``"Singleton"``, ``"Ball"``, ``"Segment"`` and
    ``"HalfLineInterval"``; ``set_params`` holds ``(point,)``,
    ``(center, radius)``, ``(a, b)`` and ``(lo, hi)`` respectively.
    """

    representative: np.ndarray
    is_multivalued: bool
    set_kind: str
    set_params: tuple = field(default=())

    def contains(self, v, tol=1e-12):
        return self.distance(v) <= tol

    def distance(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        return float(np.linalg.norm(v - self.project(v)))

    def project(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        kind = self.set_kind
        if kind == "Singleton":
            return np.atleast_1d(np.asarray(self.set_params[0], dtype=float)).copy()
        if kind == "Ball":
            center = np.atleast_1d(np.asarray(self.set_params[0], dtype=float))
            radius = float(self.set_params[1])
            w = v - center
            nw = np.linalg.norm(w)
            return v.copy() if nw <= radius else center + w * (radius / nw)
        if kind in ("Segment", "HalfLineInterval"):
            lo, hi = self.set_params
            return np.clip(v, lo, hi)
        raise ValueError(f"unknown set kind {kind!r}")


def _norm(z):
    return np.linalg.norm(z, axis=-1)


def _as_vectors(z, dim):
    z = np.asarray(z, dtype=float)
    if dim == 1 and (z.ndim == 0 or z.shape[-1] != 1):
        z = z[..., None]
    if z.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: integrand has dim {dim}, got {z.shape[-1]}")
    return z


class ConvexIntegrand:
    """Base class for convex gradient integrands f: R^n -> R.

    Subclasses provide ``values``, ``conj_values``, ``grad_values`` and,
    when the integrand is nonsmooth, ``moreau`` (value, gradient and
    Hessian of the Moreau envelope).
    """

    kind = "abstract"
    smooth = True
    outside_standing_assumptions = False
    growth_exponent = 2.0
    growth_constants = (1.0, 1.0)

    def __init__(self, dim):
        if int(dim) < 1:
            raise ValueError("dimension must be a positive integer")
        self.dim = int(dim)

    @property
    def params(self):
        return []

    def to_json(self):
        return {"kind": self.kind, "params": list(self.params), "dim": self.dim}

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim}, params={self.params})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(json.dumps(self.to_json(), sort_keys=True))

    # vectorised interface -------------------------------------------------
    def values(self, z):
        raise NotImplementedError

    def conj_values(self, zs):
        raise NotImplementedError

    def grad_values(self, z):
        """A subgradient (the gradient where it exists)."""
        raise NotImplementedError

    def hess_values(self, z):
        raise NotImplementedError(f"{self.kind} has no Hessian")

    def moreau(self, z, mu):
        if self.smooth:
            raise NotImplementedError
        raise NotImplementedError(f"{self.kind} has no Moreau envelope")

    def subgradient(self, z):
        raise NotImplementedError

    def subdiff_sets(self, z, zero_tol=0.0):
        """Symbolic subdifferential per row of ``z``.

        Returns ``(kind, a, b)`` where ``kind`` is an int array (0 for a
        singleton at ``a``, 1 for the ball of center ``a`` and radius
        ``b``).  Gradients with norm ``<= zero_tol`` are treated as zero.
        """
        z = _as_vectors(z, self.dim)
        kind = np.zeros(z.shape[:-1], dtype=int)
        return kind, self.grad_values(z), np.zeros(z.shape[:-1])


class Quadratic(ConvexIntegrand):
    """f(z) = scale/2 |z|^2."""

    kind = "Quadratic"

    def __init__(self, dim, scale=1.0):
        super().__init__(dim)
        if scale <= 0:
            raise ValueError("scale must be positive")
        self.scale = float(scale)
        self.growth_constants = (self.scale / 2, self.scale / 2)

    @property
    def params(self):
        return [self.scale]

    def values(self, z):
        z = _as_vectors(z, self.dim)
        return 0.5 * self.scale * np.sum(z * z, axis=-1)

    def conj_values(self, zs):
        zs = _as_vectors(zs, self.dim)
        return 0.5 / self.scale * np.sum(zs * zs, axis=-1)

    def grad_values(self, z):
        return self.scale * _as_vectors(z, self.dim)

    def hess_values(self, z):
        z = _as_vectors(z, self.dim)
        return np.broadcast_to(self.scale * np.eye(self.dim), z.shape + (self.dim,)).copy()

    def subgradient(self, z):
        g = self.grad_values(z)
        return SubdifferentialElement(g, False, "Singleton", (g,))


class PowerNorm(ConvexIntegrand):
    """f(z) = |z|^p / p with 1 < p < inf."""

    kind = "PowerNorm"

    def __init__(self, dim, p=2.0):
        super().__init__(dim)
        if not 1.0 < p < math.inf:
            raise ValueError("PowerNorm needs 1 < p < inf")
        self.p = float(p)
        self.q = self.p / (self.p - 1.0)
        self.growth_exponent = self.p
        self.growth_constants = (1.0 / self.p, 1.0 / self.p)

    @property
    def params(self):
        return [self.p]

    def values(self, z):
        return _norm(_as_vectors(z, self.dim)) ** self.p / self.p

    def conj_values(self, zs):
        return _norm(_as_vectors(zs, self.dim)) ** self.q / self.q

    def grad_values(self, z):
        z = _as_vectors(z, self.dim)
        r = _norm(z)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, r ** (self.p - 2.0), 0.0)
        return scale * z

    def hess_values(self, z):
        z = _as_vectors(z, self.dim)
        p = self.p
        r = np.maximum(_norm(z), 1e-12)[..., None, None]
        eye = np.eye(self.dim)
        zz = z[..., :, None] * z[..., None, :]
        return r ** (p - 2.0) * eye + (p - 2.0) * r ** (p - 4.0) * zz

    def subgradient(self, z):
        g = self.grad_values(z)
        return SubdifferentialElement(g, False, "Singleton", (g,))


class _BallAtOrigin(ConvexIntegrand):
    """Shared logic for integrands behaving like |z| near the origin."""

    smooth = False

    def subgradient(self, z):
        z = _as_vectors(z, self.dim)
        if not np.any(z):
            zero = np.zeros(self.dim)
            return SubdifferentialElement(zero, True, "Ball", (zero, 1.0))
        g = self.grad_values(z)
        return SubdifferentialElement(g, False, "Singleton", (g,))

    def subdiff_sets(self, z, zero_tol=0.0):
        z = _as_vectors(z, self.dim)
        r = _norm(z)
        ball = r <= zero_tol
        a = np.where(ball[..., None], 0.0, self.grad_values(z))
        b = np.where(ball, 1.0, 0.0)
        return ball.astype(int), a, b


class NonsmoothTorsion(_BallAtOrigin):
    """f(z) = |z| for |z| < 1 and (|z|^2 + 1)/2 for |z| >= 1.

    Equivalently ``f(z) = |z| + ((|z| - 1)_+)^2 / 2``; the conjugate is
    ``((|s|^2 - 1)_+)/2``.
    """

    kind = "NonsmoothTorsion"
    growth_constants = (0.5, 0.5)

    def values(self, z):
        r = _norm(_as_vectors(z, self.dim))
        return np.where(r >= 1.0, 0.5 * (r * r + 1.0), r)

    def conj_values(self, zs):
        r = _norm(_as_vectors(zs, self.dim))
        return 0.5 * np.maximum(r * r - 1.0, 0.0)

    def grad_values(self, z):
        z = _as_vectors(z, self.dim)
        r = _norm(z)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = np.where(r > 0, z / r, 0.0)
        return np.where(r >= 1.0, z, inner)

    def moreau(self, z, mu):
        z = _as_vectors(z, self.dim)
        r = _norm(z)
        eye = np.eye(self.dim)
        rs = np.maximum(r, 1e-300)[..., None]
        zhat = z / rs
        inner = r <= mu
        outer = r >= 1.0 + mu
        mid = ~(inner | outer)
        val = np.where(inner, r * r / (2 * mu),
                       np.where(outer, r * r / (2 * (1 + mu)) + 0.5, r - mu / 2))
        grad = np.where(inner[..., None], z / mu,
                        np.where(outer[..., None], z / (1 + mu), zhat))
        proj = eye - zhat[..., :, None] * zhat[..., None, :]
        hess = np.where(inner[..., None, None], eye / mu,
                        np.where(outer[..., None, None], eye / (1 + mu),
                                 proj / rs[..., None]))
        return val, grad, hess


class AbsNorm(_BallAtOrigin):
    """f(z) = |z|.  Linear growth: outside the standing assumptions."""

    kind = "AbsNorm"
    outside_standing_assumptions = True
    growth_exponent = 1.0
    growth_constants = (1.0, 1.0)

    def values(self, z):
        return _norm(_as_vectors(z, self.dim))

    def conj_values(self, zs):
        r = _norm(_as_vectors(zs, self.dim))
        return np.where(r <= 1.0 + INDICATOR_TOL, 0.0, np.inf)

    def grad_values(self, z):
        z = _as_vectors(z, self.dim)
        r = _norm(z)[..., None]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, z / r, 0.0)

    def moreau(self, z, mu):
        # Huber function
        z = _as_vectors(z, self.dim)
        r = _norm(z)
        eye = np.eye(self.dim)
        rs = np.maximum(r, 1e-300)[..., None]
        zhat = z / rs
        inner = r <= mu
        val = np.where(inner, r * r / (2 * mu), r - mu / 2)
        grad = np.where(inner[..., None], z / mu, zhat)
        proj = eye - zhat[..., :, None] * zhat[..., None, :]
        hess = np.where(inner[..., None, None], eye / mu, proj / rs[..., None])
        return val, grad, hess


class CustomIntegrand(ConvexIntegrand):
    """User-supplied convex f.

    ``func`` maps an ``(..., dim)`` array to ``(...)``; ``grad`` and
    ``hess`` are optional.  The conjugate is approximated by maximising
    over a bounded grid with local refinement; the half-width of the last
    grid cell is stored in ``conjugate_tolerance``.
    """

    kind = "Custom"

    def __init__(self, dim, func, grad=None, hess=None, p=2.0,
                 growth_constants=(0.0, math.inf), grid_radius=10.0, grid_points=201):
        super().__init__(dim)
        if dim > 2:
            raise ValueError("grid conjugates are implemented for dim <= 2")
        self.func = func
        self.grad = grad
        self.hess = hess
        self.growth_exponent = float(p)
        self.growth_constants = growth_constants
        self.grid_radius = float(grid_radius)
        self.grid_points = int(grid_points)
        self.smooth = grad is not None
        self.conjugate_tolerance = None

    def to_json(self):
        raise TypeError("custom integrands hold Python callables and are not serialisable")

    def values(self, z):
        return np.asarray(self.func(_as_vectors(z, self.dim)), dtype=float)

    def grad_values(self, z):
        if self.grad is None:
            raise NotImplementedError("custom integrand has no gradient rule")
        return np.asarray(self.grad(_as_vectors(z, self.dim)), dtype=float)

    def hess_values(self, z):
        if self.hess is None:
            raise NotImplementedError("custom integrand has no Hessian rule")
        return np.asarray(self.hess(_as_vectors(z, self.dim)), dtype=float)

    def conj_values(self, zs):
        zs = _as_vectors(zs, self.dim)
        flat = zs.reshape(-1, self.dim)
        out = np.array([self._conj_one(s) for s in flat])
        return out.reshape(zs.shape[:-1])

    def _conj_one(self, s):
        lo = -self.grid_radius * np.ones(self.dim)
        hi = self.grid_radius * np.ones(self.dim)
        n = self.grid_points
        best, refined, widenings = None, 0, 0
        while refined < 6:
            axes = [np.linspace(lo[k], hi[k], n) for k in range(self.dim)]
            pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, self.dim)
            vals = pts @ s - self.values(pts)
            i = int(np.argmax(vals))
            best = vals[i]
            cell = (hi - lo) / (n - 1)
            idx = np.array(np.unravel_index(i, (n,) * self.dim))
            if np.any((idx == 0) | (idx == n - 1)) and widenings < 20:
                # maximiser may lie outside the window: move it and grow it
                widenings += 1
                half = (hi - lo) if refined == 0 else 0.5 * (hi - lo)
                lo, hi = pts[i] - half, pts[i] + half
                continue
            lo, hi = pts[i] - 2 * cell, pts[i] + 2 * cell
            refined += 1
        self.conjugate_tolerance = float(np.max(cell)) * (1 + float(np.linalg.norm(s)))
        return float(best)

    def subgradient(self, z):
        if self.grad is None:
            raise NotImplementedError("custom integrand has no subgradient rule")
        g = self.grad_values(z)
        return SubdifferentialElement(g, False, "Singleton", (g,))


# ---------------------------------------------------------------------------
# scalar integrands

class ScalarIntegrand:
    """Base class for convex g: R -> R.

    Catalog kinds satisfy g(0) = 0 except :class:`HingeOneMinus`.
    """

    kind = "abstract"
    smooth = True
    restricted_conjugate_domain = False
    growth_exponent = 2.0

    @property
    def params(self):
        return []

    def to_json(self):
        return {"kind": self.kind, "params": list(self.params)}

    def __repr__(self):
        return f"{type(self).__name__}(params={self.params})"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_json() == other.to_json()

    def __hash__(self):
        return hash(json.dumps(self.to_json(), sort_keys=True))

    def values(self, u):
        raise NotImplementedError

    def conj_values(self, xi):
        raise NotImplementedError

    def grad_values(self, u):
        raise NotImplementedError

    def hess_values(self, u):
        raise NotImplementedError(f"{self.kind} has no second derivative")

    def prox(self, v, tau):
        """argmin_w g(w) + (w - v)^2 / (2 tau), elementwise."""
        raise NotImplementedError

    def moreau(self, u, mu):
        """Moreau envelope of g with parameter mu: value, derivative, second derivative.

        The second derivative is the generalized one ``(1 - p'(u)) / mu`` with
        ``p`` the prox map; ``p' = 0`` where the prox lands on a kink of g.
        """
        u = np.asarray(u, dtype=float)
        p = self.prox(u, mu)
        val = self.values(p) + (u - p) ** 2 / (2.0 * mu)
        grad = (u - p) / mu
        lo, hi = self.subdiff_interval(p)
        try:
            dp = 1.0 / (1.0 + mu * self.hess_values(p))
        except NotImplementedError:
            dp = np.ones_like(u)
        dp = np.where(hi - lo > 0, 0.0, dp)
        return val, grad, (1.0 - dp) / mu

    def subdiff_interval(self, u):
        """Return ``(lo, hi)`` arrays with dg(u) = [lo, hi]."""
        g = self.grad_values(u)
        return g, g.copy()

    def subgradient(self, u):
        lo, hi = (float(x) for x in self.subdiff_interval(np.asarray(float(u))))
        if lo == hi:
            return SubdifferentialElement(np.array([lo]), False, "Singleton", (np.array([lo]),))
        kind = "Segment" if math.isfinite(lo) and math.isfinite(hi) else "HalfLineInterval"
        rep = float(np.clip(0.0, lo, hi))
        return SubdifferentialElement(np.array([rep]), True, kind, (lo, hi))

    def conj_domain(self):
        """Interval containing dom g*."""
        return (-math.inf, math.inf)


class Linear(ScalarIntegrand):
    """g(u) = -lam * u; the conjugate is the indicator of {-lam}."""

    kind = "Linear"
    restricted_conjugate_domain = True
    growth_exponent = 1.0

    def __init__(self, lam=1.0):
        self.lam = float(lam)

    @property
    def params(self):
        return [self.lam]

    def values(self, u):
        return -self.lam * np.asarray(u, dtype=float)

    def conj_values(self, xi):
        xi = np.asarray(xi, dtype=float)
        ok = np.abs(xi + self.lam) <= INDICATOR_TOL * (1.0 + abs(self.lam))
        return np.where(ok, 0.0, np.inf)

    def grad_values(self, u):
        return np.full(np.shape(u), -self.lam)

    def hess_values(self, u):
        return np.zeros(np.shape(u))

    def prox(self, v, tau):
        return np.asarray(v, dtype=float) + tau * self.lam

    def conj_domain(self):
        return (-self.lam, -self.lam)


class HingeOneMinus(ScalarIntegrand):
    """g(u) = (1 - u)_+; the conjugate is xi on [-1, 0] and +inf elsewhere."""

    kind = "HingeOneMinus"
    smooth = False
    restricted_conjugate_domain = True
    growth_exponent = 1.0

    def values(self, u):
        return np.maximum(1.0 - np.asarray(u, dtype=float), 0.0)

    def conj_values(self, xi):
        xi = np.asarray(xi, dtype=float)
        ok = (xi >= -1.0 - INDICATOR_TOL) & (xi <= INDICATOR_TOL)
        return np.where(ok, np.clip(xi, -1.0, 0.0), np.inf)

    def grad_values(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u < 1.0, -1.0, 0.0)

    def subdiff_interval(self, u):
        u = np.asarray(u, dtype=float)
        lo = np.where(u <= 1.0, -1.0, 0.0)
        hi = np.where(u < 1.0, -1.0, 0.0)
        return lo, hi

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        return np.where(v + tau < 1.0, v + tau, np.where(v > 1.0, v, 1.0))

    def conj_domain(self):
        return (-1.0, 0.0)


class Power(ScalarIntegrand):
    """g(u) = |u|^q / q with 1 < q < inf."""

    kind = "Power"

    def __init__(self, q=2.0):
        if not 1.0 < q < math.inf:
            raise ValueError("Power needs 1 < q < inf")
        self.q = float(q)
        self.qc = self.q / (self.q - 1.0)
        self.growth_exponent = self.q

    @property
    def params(self):
        return [self.q]

    def values(self, u):
        return np.abs(np.asarray(u, dtype=float)) ** self.q / self.q

    def conj_values(self, xi):
        return np.abs(np.asarray(xi, dtype=float)) ** self.qc / self.qc

    def grad_values(self, u):
        u = np.asarray(u, dtype=float)
        return np.sign(u) * np.abs(u) ** (self.q - 1.0)

    def hess_values(self, u):
        u = np.asarray(u, dtype=float)
        return (self.q - 1.0) * np.maximum(np.abs(u), 1e-12) ** (self.q - 2.0)

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        tau = np.broadcast_to(np.asarray(tau, dtype=float), v.shape)
        if self.q == 2.0:
            return v / (1.0 + tau)
        # w + tau sign(w)|w|^(q-1) = v has the sign of v; bisect on |w|
        a = np.abs(v)
        lo, hi = np.zeros_like(a), a.copy()
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            big = mid + tau * mid ** (self.q - 1.0) > a
            hi = np.where(big, mid, hi)
            lo = np.where(big, lo, mid)
        return np.sign(v) * 0.5 * (lo + hi)


class CustomScalar(ScalarIntegrand):
    """User-supplied convex g with g(0) = 0 and a derivative rule."""

    kind = "Custom"

    def __init__(self, func, grad, hess=None, q=2.0, grid_radius=50.0):
        if abs(float(np.asarray(func(np.array(0.0))))) > 0.0:
            raise ValueError("custom scalar integrand must satisfy g(0) = 0")
        self.func = func
        self.grad = grad
        self.hess = hess
        self.growth_exponent = float(q)
        self.grid_radius = float(grid_radius)
        self.smooth = hess is not None

    def to_json(self):
        raise TypeError("custom integrands hold Python callables and are not serialisable")

    def values(self, u):
        return np.asarray(self.func(np.asarray(u, dtype=float)), dtype=float)

    def grad_values(self, u):
        return np.asarray(self.grad(np.asarray(u, dtype=float)), dtype=float)

    def hess_values(self, u):
        if self.hess is None:
            raise NotImplementedError("custom scalar integrand has no second derivative")
        return np.asarray(self.hess(np.asarray(u, dtype=float)), dtype=float)

    def conj_values(self, xi):
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        grid = np.linspace(-self.grid_radius, self.grid_radius, 20001)
        gv = self.values(grid)
        out = np.max(xi[:, None] * grid[None, :] - gv[None, :], axis=1)
        return out.reshape(np.shape(xi))

    def prox(self, v, tau):
        v = np.asarray(v, dtype=float)
        tau = np.broadcast_to(np.asarray(tau, dtype=float), v.shape)
        # monotone equation w - v + tau g'(w) = 0
        lo = v - tau * np.abs(self.grad_values(v)) - 1.0
        hi = v + tau * np.abs(self.grad_values(v)) + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            big = mid - v + tau * self.grad_values(mid) > 0
            hi = np.where(big, mid, hi)
            lo = np.where(big, lo, mid)
        return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# scalar entry points

def _check(F, z):
    if isinstance(F, ConvexIntegrand):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        if z.shape != (F.dim,):
            raise ValueError(f"dimension mismatch: integrand has dim {F.dim}, got shape {z.shape}")
        return z
    if isinstance(F, ScalarIntegrand):
        z = np.asarray(z, dtype=float)
        if z.size != 1:
            raise ValueError("scalar integrand expects a real number")
        return z.reshape(())
    raise TypeError(f"not an integrand: {F!r}")


def eval(F, z):
    """Value of ``F`` at a single point."""
    return float(F.values(_check(F, z)))


def conjugate(F, zstar):
    """Fenchel conjugate of ``F`` at a single point, as an ExtendedReal."""
    return ExtendedReal.of(float(F.conj_values(_check(F, zstar))))


def subgradient(F, z):
    return F.subgradient(_check(F, z))


def fenchel_gap(F, z, zstar):
    """F(z) + F*(z*) - <z, z*>; zero exactly when z* is a subgradient at z."""
    z = _check(F, z)
    zstar = _check(F, zstar)
    pairing = float(np.sum(z * zstar))
    return conjugate(F, zstar) + (eval(F, z) - pairing)


# ---------------------------------------------------------------------------
# serialisation

_VECTOR_KINDS = {
    "Quadratic": lambda dim, p: Quadratic(dim, *p),
    "PowerNorm": lambda dim, p: PowerNorm(dim, *p),
    "NonsmoothTorsion": lambda dim, p: NonsmoothTorsion(dim),
    "AbsNorm": lambda dim, p: AbsNorm(dim),
}
_SCALAR_KINDS = {
    "Linear": lambda p: Linear(*p),
    "HingeOneMinus": lambda p: HingeOneMinus(),
    "Power": lambda p: Power(*p),
}


def integrand_from_json(obj):
    """Build an integrand from ``{"kind", "params"[, "dim"]}``.

    Objects carrying ``dim`` are gradient integrands, the others scalar.
    """
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj["kind"]
    params = [float(x) for x in obj.get("params", [])]
    if "dim" in obj and obj["dim"] is not None:
        if kind not in _VECTOR_KINDS:
            raise ValueError(f"unknown gradient integrand kind {kind!r}")
        return _VECTOR_KINDS[kind](int(obj["dim"]), params)
    if kind not in _SCALAR_KINDS:
        raise ValueError(f"unknown scalar integrand kind {kind!r}")
    return _SCALAR_KINDS[kind](params)
