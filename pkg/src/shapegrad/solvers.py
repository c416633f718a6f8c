"""Discrete primal solver and dual reconstruction.

The primal energy ``E(u) = sum_T |T| f(grad u_T) + sum_i m_i g(u_i)`` is
minimised from ``u = 0``.  Nonsmooth ``f`` is replaced by its Moreau
envelope ``f_mu`` along a decreasing schedule of ``mu``; each stage is
warm-started from the previous one.  Stages are solved by damped Newton
when ``g`` has a second derivative and by accelerated proximal gradient
(FISTA with backtracking and adaptive restart, ``g`` handled through its
nodal prox) otherwise.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fem import (P0VectorField, P1Function, DiscreteDivergence, active_nodes,
                  dual_energy, gradient, gradient_operator, primal_energy,
                  stiffness_matrix, weak_divergence)
from .integrands import ExtendedReal

__all__ = [
    "SolverOptions", "PrimalSolution", "DualField", "NonCoerciveError",
    "solve_primal", "reconstruct_dual", "duality_gap",
]

log = logging.getLogger(__name__)


class NonCoerciveError(ValueError):
    """The discrete energy is unbounded below along a probe direction."""


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    gap_tol: float = 1e-6
    max_iter: int = 200
    apg_max_iter: int = 20000
    mu_schedule: tuple = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
    method: str = "auto"  # "newton", "apg" or "lbfgs"

    def scaled(self, factor):
        return replace(self, tol=self.tol * factor, gap_tol=self.gap_tol * factor)

    def to_json(self):
        d = asdict(self)
        d["mu_schedule"] = list(self.mu_schedule)
        return d

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        obj = dict(obj or {})
        unknown = set(obj) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown solver options {sorted(unknown)}")
        if "mu_schedule" in obj:
            obj["mu_schedule"] = tuple(float(x) for x in obj["mu_schedule"])
        return cls(**obj)


@dataclass(frozen=True)
class PrimalSolution:
    u: P1Function
    energy: float
    iterations: int
    grad_norm_or_gap: float
    smoothing_mu_final: float
    converged: bool = True
    case: str = "D"
    stage_energies: tuple = ()
    smoothed_sigma: np.ndarray | None = field(default=None, repr=False)

    @property
    def J(self):
        return 0.0 - self.energy  # no negative zero


@dataclass(frozen=True)
class DualField:
    sigma: P0VectorField
    div_h: DiscreteDivergence
    membership_residual: float
    divergence_residual: float
    iterations: int = 0


# ---------------------------------------------------------------------------

def _f_parts(f, z, mu):
    """Value, gradient and Hessian of f (or of its Moreau envelope)."""
    if f.smooth or mu is None:
        return f.values(z), f.grad_values(z), f.hess_values(z)
    return f.moreau(z, mu)


def _g_parts(g, x, mu):
    if g.smooth or mu is None:
        return g.values(x), g.grad_values(x), g.hess_values(x)
    return g.moreau(x, mu)


def _block_diag(blocks):
    n, d, _ = blocks.shape
    base = np.arange(n)[:, None, None] * d
    rows = np.broadcast_to(base + np.arange(d)[None, :, None], blocks.shape)
    cols = np.broadcast_to(base + np.arange(d)[None, None, :], blocks.shape)
    return sp.csr_matrix((blocks.ravel(), (rows.ravel(), cols.ravel())), shape=(n * d, n * d))


class _Problem:
    """Discrete energy restricted to the free nodes."""

    def __init__(self, mesh, f, g, case):
        if f.dim != mesh.dim:
            raise ValueError(f"integrand dim {f.dim} does not match mesh dim {mesh.dim}")
        self.mesh, self.f, self.g, self.case = mesh, f, g, case
        self.free = active_nodes(mesh, case)
        self.G = gradient_operator(mesh)[:, self.free].tocsr()
        self.vol = mesh.volumes
        self.m = mesh.lumped_mass[self.free]
        self.nfree = int(self.free.sum())

    def full(self, x):
        u = np.zeros(self.mesh.nv)
        u[self.free] = x
        return u

    def grads(self, x):
        return (self.G @ x).reshape(self.mesh.ns, self.mesh.dim)

    def energy(self, x, mu=None, with_g=True):
        z = self.grads(x)
        fv = self.f.values(z) if mu is None else _f_parts(self.f, z, mu)[0]
        e = float(np.dot(self.vol, fv))
        if with_g:
            e += float(np.dot(self.m, self.g.values(x)))
        return e

    def smooth_grad(self, x, mu):
        z = self.grads(x)
        val, gr, _ = _f_parts(self.f, z, mu)
        return float(np.dot(self.vol, val)), self.G.T @ (self.vol[:, None] * gr).ravel()


def _check_coercive(prob):
    x = np.ones(prob.nfree)
    e0 = prob.energy(0 * x)
    for sign in (1.0, -1.0):
        with np.errstate(over="ignore", invalid="ignore"):
            e1, e2 = prob.energy(sign * 1e2 * x), prob.energy(sign * 1e4 * x)
        if e2 < e1 < e0 and e2 < e0 - 10 * abs(e1 - e0):
            raise NonCoerciveError("discrete energy decreases without bound along a constant probe")


def _newton_stage(prob, x, mu, tol, ref, max_iter):
    f, g = prob.f, prob.g

    def energy(v):
        return float(np.dot(prob.vol, _f_parts(f, prob.grads(v), mu)[0])
                     + np.dot(prob.m, _g_parts(g, v, mu)[0]))

    it = 0
    gnorm = np.inf
    for it in range(1, max_iter + 1):
        z = prob.grads(x)
        val, gr, H = _f_parts(f, z, mu)
        gv, gg, gh = _g_parts(g, x, mu)
        e = float(np.dot(prob.vol, val) + np.dot(prob.m, gv))
        grad = prob.G.T @ (prob.vol[:, None] * gr).ravel() + prob.m * gg
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol * ref:
            return x, it - 1, gnorm
        hess = prob.G.T @ _block_diag(prob.vol[:, None, None] * H) @ prob.G
        hess = hess + sp.diags(prob.m * gh)
        shift = 1e-14 * float(hess.diagonal().max())
        step = None
        for _ in range(6):
            try:
                step = spla.spsolve((hess + sp.diags(np.full(prob.nfree, shift))).tocsc(), -grad)
            except RuntimeError:
                step = None
            if step is not None and np.all(np.isfinite(step)) and np.dot(step, grad) < 0:
                break
            shift = max(shift * 1e3, 1e-12)
            step = None
        if step is None:
            step = -grad / max(float(hess.diagonal().max()), 1.0)
        slope = float(np.dot(step, grad))
        t = 1.0
        while t > 1e-12:
            xn = x + t * step
            en = energy(xn)
            if en <= e + 1e-4 * t * slope or (en <= e and t < 1e-3):
                break
            t *= 0.5
        if t <= 1e-12:
            log.debug("line search stalled at mu=%s, |grad|=%.3e", mu, gnorm)
            return x, it, gnorm
        x = xn
    return x, it, gnorm


def _apg_stage(prob, x, mu, tol, ref, max_iter):
    """FISTA with backtracking; g enters through its nodal prox."""
    g = prob.g
    L = 1.0
    y, x_old, theta = x.copy(), x.copy(), 1.0
    prev_obj = np.inf
    pg_norm = np.inf
    for it in range(1, max_iter + 1):
        sy, gy = prob.smooth_grad(y, mu)
        while True:
            xn = g.prox(y - gy / L, prob.m / L)
            d = xn - y
            sx = prob.smooth_grad(xn, mu)[0]
            if sx <= sy + np.dot(gy, d) + 0.5 * L * np.dot(d, d) + 1e-14 * abs(sy):
                break
            L *= 2.0
        pg_norm = L * float(np.linalg.norm(d))
        obj = sx + float(np.dot(prob.m, g.values(xn)))
        if pg_norm <= tol * ref:
            return xn, it, pg_norm
        theta_n = 0.5 * (1 + np.sqrt(1 + 4 * theta * theta))
        if obj > prev_obj:  # adaptive restart
            theta_n, y = 1.0, xn.copy()
        else:
            y = xn + ((theta - 1) / theta_n) * (xn - x_old)
        x_old, theta, prev_obj = xn, theta_n, obj
        L *= 0.9
    return x_old, max_iter, pg_norm


def _lbfgs_stage(prob, x, tol, ref, max_iter):
    from scipy.optimize import minimize

    def fun(v):
        s, gr = prob.smooth_grad(v, None)
        return s + float(np.dot(prob.m, prob.g.values(v))), gr + prob.m * prob.g.grad_values(v)

    res = minimize(fun, x, jac=True, method="L-BFGS-B",
                   options={"maxiter": 50 * max_iter, "gtol": tol * ref, "ftol": 1e-15})
    return res.x, int(res.nit), float(np.linalg.norm(fun(res.x)[1]))


def solve_primal(mesh, f, g, case="D", opts=None):
    """Minimise the discrete primal energy; ``J = -energy``."""
    opts = opts or SolverOptions()
    prob = _Problem(mesh, f, g, case)
    _check_coercive(prob)
    x = np.zeros(prob.nfree)

    stages = [None] if (f.smooth and g.smooth) else list(opts.mu_schedule)
    method = opts.method
    if method == "auto":
        # linear-growth f gives a singular smoothed Hessian; use first-order steps there
        if f.growth_exponent <= 1.0:
            method = "apg"
        elif _has_hessian(f) or not f.smooth:
            method = "newton"
        else:
            method = "apg" if not g.smooth else "lbfgs"
    if method not in ("newton", "apg", "lbfgs"):
        raise ValueError(f"unknown method {opts.method!r}")

    # reference scale: smoothed first-order residual at u = 0
    mu0 = stages[0]
    g0 = prob.G.T @ (prob.vol[:, None] * _f_parts(f, prob.grads(x), mu0)[1]).ravel()
    g0 = g0 + prob.m * _g_parts(g, x, mu0)[1]
    ref = max(float(np.linalg.norm(g0)), float(np.sum(prob.m)) ** 0.5 * 1e-3, 1e-300)

    total_it, resid, stage_energies = 0, np.inf, []
    for mu in stages:
        if method == "newton":
            x, it, resid = _newton_stage(prob, x, mu, opts.tol, ref, opts.max_iter)
        elif method == "apg":
            # smoothing already costs O(mu); solving a stage more tightly is wasted work
            stage_tol = opts.tol if mu is None or mu == stages[-1] else max(opts.tol, mu)
            x, it, resid = _apg_stage(prob, x, None if f.smooth else mu, stage_tol, ref,
                                      opts.apg_max_iter)
        else:
            x, it, resid = _lbfgs_stage(prob, x, opts.tol, ref, opts.max_iter)
        total_it += it
        stage_energies.append(prob.energy(x))

    # a smoothed minimiser can be worse than the starting point in the true energy
    if prob.energy(x) > prob.energy(np.zeros_like(x)):
        x = np.zeros_like(x)
    u = P1Function(mesh, prob.full(x), mesh.boundary_vertex_mask if case == "D" else None)
    mu_final = stages[-1]
    z = gradient(u).values
    sig = _f_parts(f, z, mu_final)[1] if (not f.smooth or _has_gradient(f)) else None
    energy = primal_energy(mesh, f, g, u)

    if f.smooth and g.smooth:
        converged = resid <= opts.tol * ref * 10
        measure = resid / ref
    else:
        sol = PrimalSolution(u, energy, total_it, np.nan, mu_final or 0.0, True, case,
                             tuple(stage_energies), sig)
        try:
            dual = reconstruct_dual(mesh, f, g, sol, case, max_iter=500)
            gap = duality_gap(mesh, f, g, u, dual.sigma, case)
        except NotImplementedError:
            gap = np.inf
        measure = gap / mesh.volume
        converged = measure <= opts.gap_tol
    if not converged:
        log.warning("solve_primal did not reach tolerance (measure %.3e)", measure)
    return PrimalSolution(u, energy, total_it, float(measure), mu_final or 0.0, bool(converged),
                          case, tuple(stage_energies), sig)


def _has_hessian(f):
    try:
        f.hess_values(np.ones((1, f.dim)))
        return True
    except NotImplementedError:
        return False


def _has_gradient(f):
    try:
        f.grad_values(np.ones((1, f.dim)))
        return True
    except NotImplementedError:
        return False


# ---------------------------------------------------------------------------
# dual reconstruction

def _div_operator(mesh):
    """Sparse B with ``(B s)_i = sum_T |T| s_T . grad phi_i`` for flattened s."""
    return gradient_operator(mesh).T @ sp.diags(np.repeat(mesh.volumes, mesh.dim))


def _project_sets(s, kind, a, b):
    ball = kind == 1
    out = np.where(ball[:, None], s, a)
    w = s - a
    nw = np.linalg.norm(w, axis=1)
    scale = np.where((nw > b) & ball, b / np.maximum(nw, 1e-300), 1.0)
    return np.where(ball[:, None], a + w * scale[:, None], out)


def reconstruct_dual(mesh, f, g, sol, case="D", max_iter=2000, restore=True):
    """Choose sigma_T in the subdifferential of f at grad u_T.

    Singletons are fixed; on multivalued elements (balls) sigma minimises
    ``sum_i m_i dist(d_i(sigma), dg(u_i))^2`` by accelerated projected
    gradient.  If ``g*`` has a restricted domain and a residual remains, a
    discrete Poisson correction ``sigma += grad w`` puts the divergence
    exactly into ``dg(u)`` (case D), at the price of a small membership gap.
    """
    u = sol.u
    z = gradient(u).values
    zero_tol = 0.0 if f.smooth else max(sol.smoothing_mu_final, 0.0) * (1 + 1e-9)
    kind, a, b = f.subdiff_sets(z, zero_tol)
    if sol.smoothed_sigma is not None:
        sigma = _project_sets(np.asarray(sol.smoothed_sigma, dtype=float), kind, a, b)
    else:
        sigma = np.array(a, dtype=float)

    act = active_nodes(mesh, case)
    m = mesh.lumped_mass
    B = _div_operator(mesh)
    # near-kink values of u see the enlarged subdifferential over [u - tau, u + tau]
    tau = 0.0 if g.smooth else 10.0 * max(sol.smoothing_mu_final, 0.0)
    lo = g.subdiff_interval(u.dof - tau)[0]
    hi = g.subdiff_interval(u.dof + tau)[1]

    def residual(s):
        d = -(B @ s.ravel()) / m
        r = np.where(act, d - np.clip(d, lo, hi), 0.0)
        return d, r

    free = kind == 1
    it = 0
    if np.any(free) and np.any(act):
        freeflat = np.repeat(free, mesh.dim)
        Bf = B[:, freeflat]
        # Lipschitz constant of the gradient via power iteration
        # fixed seed keeps runs reproducible; a constant start can lie in the kernel
        v = np.random.default_rng(0).standard_normal(Bf.shape[1])
        lam = 1.0
        for _ in range(50):
            w = Bf.T @ (np.where(act, Bf @ v, 0.0) / m)
            lam = float(np.linalg.norm(w) / max(np.linalg.norm(v), 1e-300))
            v = w / max(np.linalg.norm(w), 1e-300)
        step = 1.0 / max(1.05 * lam, 1e-300)
        xk = sigma[free].copy()
        yk, tk = xk.copy(), 1.0
        scale = max(1.0, float(np.max(np.abs(hi[np.isfinite(hi)]), initial=1.0)))
        for it in range(1, max_iter + 1):
            s = sigma.copy()
            s[free] = yk
            _, r = residual(s)
            if np.max(np.abs(r)) <= 1e-13 * scale:
                xk = yk
                break
            # d(Phi)/d(sigma_T) = sum_i r_i * d(d_i)/d(sigma_T) * m_i
            grad = (-(Bf.T @ r)).reshape(-1, mesh.dim)
            xn = _project_sets(yk - step * grad, kind[free], a[free], b[free])
            tn = 0.5 * (1 + np.sqrt(1 + 4 * tk * tk))
            yk = xn + ((tk - 1) / tn) * (xn - xk)
            xk, tk = xn, tn
        sigma[free] = xk

    d, r = residual(sigma)
    if (restore and case == "D" and g.restricted_conjugate_domain
            and np.any(act) and np.max(np.abs(r)) > 0):
        K = stiffness_matrix(mesh)[act][:, act].tocsc()
        w = np.zeros(mesh.nv)
        w[act] = spla.spsolve(K, m[act] * r[act])
        sigma = sigma + gradient(P1Function(mesh, w)).values
        d, r = residual(sigma)

    sig = P0VectorField(mesh, sigma)
    div = DiscreteDivergence(d, act)
    gaps = f.values(z) + f.conj_values(sigma) - np.sum(z * sigma, axis=1)
    membership = float(np.max(gaps)) if len(gaps) else 0.0
    div_res = float(np.max(np.abs(r[act]))) if np.any(act) else 0.0
    return DualField(sig, div, membership, div_res, it)


def duality_gap(mesh, f, g, u, sigma, case="D"):
    """primal_energy(u) + dual_energy(sigma); +inf when sigma is infeasible."""
    h = dual_energy(mesh, f, g, sigma, case)
    if h.infinite:
        return np.inf
    return primal_energy(mesh, f, g, u) + h.value
