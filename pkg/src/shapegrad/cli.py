"""Command-line front end.

Subcommands ``solve``, ``derive``, ``validate``, ``example1d`` and ``sweep``
read a JSON problem description and write a JSON (or CSV) report.  Exit
codes: 0 success, 1 usage or configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import re
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import exact1d, geometry
from .fem import dual_energy, primal_energy
from .integrands import AbsNorm, HingeOneMinus, integrand_from_json
from .shapederiv import DerivativeReport, minmax_form, tensor_A
from .solvers import NonCoerciveError, SolverOptions, duality_gap, reconstruct_dual, solve_primal
from . import validation

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
DEFAULT_FD = (4e-2, 2e-2, 1e-2, 5e-3)


class ConfigError(ValueError):
    pass


@dataclass
class ProblemConfig:
    mesh: dict
    f: dict
    g: dict
    case: str = "D"
    velocity: object = "dilation"
    solver_opts: dict = field(default_factory=dict)
    fd_schedule: list | None = None
    relaxed: bool = False

    _KEYS = ("mesh", "f", "g", "case", "velocity", "solver_opts", "fd_schedule", "relaxed")

    @classmethod
    def from_json(cls, obj):
        if isinstance(obj, str):
            obj = json.loads(obj)
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - set(cls._KEYS)
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        for k in ("mesh", "f", "g"):
            if k not in obj:
                raise ConfigError(f"config is missing {k!r}")
        cfg = cls(**obj)
        cfg.validate()
        return cfg

    def to_json(self):
        return {k: getattr(self, k) for k in self._KEYS}

    def validate(self):
        if self.case not in ("D", "N"):
            raise ConfigError(f"case must be 'D' or 'N', got {self.case!r}")
        try:
            self.integrands()
            self.options()
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def integrands(self):
        return integrand_from_json(self.f), integrand_from_json(self.g)

    def options(self, tol_scale=1.0):
        opts = SolverOptions.from_json(self.solver_opts)
        return opts.scaled(tol_scale) if tol_scale != 1.0 else opts

    def build_mesh(self):
        spec = dict(self.mesh)
        try:
            if "file" in spec:
                return geometry.read_mesh(spec["file"])
            gen = spec.pop("generator")
            if gen == "disk":
                return geometry.disk(float(spec.get("r", 1.0)), int(spec["n"]))
            if gen == "square":
                return geometry.square(int(spec["n"]), float(spec.get("a", 0.0)), float(spec.get("b", 1.0)))
            if gen == "interval":
                return geometry.interval(float(spec.get("a", 0.0)), float(spec["b"]), int(spec["n"]))
        except (KeyError, OSError, ValueError) as exc:
            raise ConfigError(f"bad mesh spec: {exc}") from exc
        raise ConfigError(f"unknown mesh generator {gen!r}")

    def build_velocity(self, mesh):
        return parse_velocity(self.velocity, mesh)


def parse_velocity(spec, mesh):
    """Named family (``dilation``, ``translation``, ``bump(i)``) or JSON object."""
    if isinstance(spec, str):
        if spec == "dilation":
            return geometry.dilation(mesh)
        if spec == "translation":
            return geometry.translation(mesh)
        m = re.fullmatch(r"bump\((\d+)\)", spec.replace(" ", ""))
        if m:
            i = int(m.group(1))
            if i >= mesh.nv:
                raise ConfigError(f"bump vertex {i} out of range")
            return geometry.hat_bump(mesh, i)
        raise ConfigError(f"unknown velocity {spec!r}")
    if isinstance(spec, dict):
        if "nodal" in spec:
            try:
                return geometry.VelocityField.from_json(spec["nodal"])
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if "bump" in spec:
            return geometry.hat_bump(mesh, int(spec["bump"]), spec.get("direction"))
        if "affine" in spec:
            A = np.asarray(spec["affine"], dtype=float).reshape(mesh.dim, mesh.dim)
            b = np.asarray(spec.get("offset", np.zeros(mesh.dim)), dtype=float)
            return geometry.VelocityField(mesh.vertices @ A.T + b)
        if "endpoints" in spec and mesh.dim == 1:
            v0, v1 = (float(x) for x in spec["endpoints"])
            x = mesh.vertices[:, 0]
            lo, hi = x.min(), x.max()
            return geometry.VelocityField(v0 + (v1 - v0) * (x - lo) / (hi - lo))
    raise ConfigError(f"unknown velocity spec {spec!r}")


# ---------------------------------------------------------------------------

def _solve_block(mesh, f, g, case, opts):
    sol = solve_primal(mesh, f, g, case, opts)
    dual = reconstruct_dual(mesh, f, g, sol, case)
    gap = duality_gap(mesh, f, g, sol.u, dual.sigma, case)
    h = dual_energy(mesh, f, g, dual.sigma, case)
    return sol, dual, {
        "J": {"value": sol.J, "formula": "minus_min_primal_energy"},
        "primal_energy": sol.energy,
        "dual_energy": h.to_json(),
        "duality_gap": _num(gap),
        "converged": sol.converged,
        "iterations": sol.iterations,
        "convergence_measure": _num(sol.grad_norm_or_gap),
        "smoothing_mu_final": sol.smoothing_mu_final,
        "membership_residual": dual.membership_residual,
        "divergence_residual": dual.divergence_residual,
        "mesh": {"nv": mesh.nv, "ns": mesh.ns, "h": mesh.h, "dim": mesh.dim},
    }


def _num(x):
    x = float(x)
    return x if np.isfinite(x) else ("inf" if x > 0 else "nan")


def cmd_solve(cfg, args):
    mesh = cfg.build_mesh()
    if cfg.relaxed:
        u, e = exact1d.solve_relaxed(mesh)
        return {"m": {"value": -e, "formula": "minus_min_relaxed_energy"},
                "relaxed_energy": e, "converged": True,
                "mesh": {"nv": mesh.nv, "ns": mesh.ns, "h": mesh.h, "dim": mesh.dim}}, EXIT_OK
    f, g = cfg.integrands()
    _, _, rep = _solve_block(mesh, f, g, cfg.case, cfg.options(args.tol_scale))
    return rep, EXIT_OK if rep["converged"] else EXIT_NUMERICAL


def _fd_schedule(cfg, args):
    if args.fd:
        return [float(x) for x in args.fd.split(",")]
    return list(cfg.fd_schedule or DEFAULT_FD)


def cmd_derive(cfg, args):
    mesh = cfg.build_mesh()
    V = cfg.build_velocity(mesh)
    flags = {k: getattr(args, k) for k in ("volume", "boundary", "minmax")}
    want_fd = args.fd is not None or args.with_fd
    # with no form flags every form is evaluated, including fd
    if not any(flags.values()):
        want_fd = True
        flags = dict.fromkeys(flags, True)
    tol = {"rel": 2e-2 * args.tol_scale}

    if cfg.relaxed:
        f, g = exact1d.integrands()
        fam = exact1d.relaxed_solution_family(np.linspace(0, 1, 5), mesh)
        mm = minmax_form(fam, [exact1d.dual_field(mesh)], f, g, V)
        J = exact1d.relaxed_J(mesh)
        tol["abs"] = _abs_tol(J, args)
        rep = DerivativeReport(J_primal=J, minmax_value=mm.value, tolerances=tol)
        if want_fd:
            tab = validation.fd_sweep(mesh, f, g, "N", V, _fd_schedule(cfg, args),
                                      solver=exact1d.relaxed_J)
            rep.fd_extrapolated = tab.extrapolated
            rep.extra["fd_table"] = tab.to_json()
        x = mesh.vertices[:, 0]
        vnod = V.nodal_values[:, 0]
        rep.extra["jprime_exact"] = exact1d.jprime_exact(vnod[np.argmin(x)], vnod[np.argmax(x)])
    else:
        f, g = cfg.integrands()
        opts = cfg.options(args.tol_scale)
        rep, sol, dual = validation.derive_report(
            mesh, f, g, cfg.case, V, opts,
            boundary=flags["boundary"], minmax=flags["minmax"],
            fd_schedule=_fd_schedule(cfg, args) if want_fd else None)
        tol["abs"] = _abs_tol(rep.J_primal, args)
        rep.tolerances = dict(tol)
        if not flags["volume"]:
            rep.volume_form_value = None
    out = rep.to_json()
    if len(rep.derivative_values()) >= 2:
        chk = validation.cross_check(rep, tol)
        out["cross_check"] = chk.to_json()
        code = EXIT_OK if chk.passed else EXIT_NUMERICAL
    else:
        code = EXIT_OK
    return out, code


def _abs_tol(J, args):
    # derivatives that should vanish are judged against the size of J
    return 5e-3 * max(abs(J), 1e-12) * args.tol_scale


def cmd_validate(cfg, args):
    mesh = cfg.build_mesh()
    f, g = cfg.integrands()
    opts = cfg.options(args.tol_scale)
    suites = [s.strip() for s in args.suite.split(",")]
    bad = set(suites) - {"conservation", "transport", "duality", "sweep"}
    if bad:
        raise ConfigError(f"unknown suites {sorted(bad)}")
    sol, dual, base = _solve_block(mesh, f, g, cfg.case, opts)
    out, ok = {"solve": base}, bool(base["converged"])
    if "conservation" in suites:
        A = tensor_A(sol, dual, f, g)
        rep = validation.conservation_residual(A)
        out["conservation"] = {**rep.to_json(), "formula": "conservation_residual",
                               "bound_C_times_h": rep.max / mesh.h}
    if "transport" in suites:
        V = geometry.VelocityField(mesh.vertices @ np.eye(mesh.dim).T * 0.5 + 0.1)
        items = []
        for eps in (0.1, 0.01):
            rec = geometry.deform(mesh, V, eps)
            te = validation.transported_energy(mesh, f, g, sol.u, V, eps)
            de = primal_energy(rec.deformed_mesh, f, g, sol.u.on(rec.deformed_mesh))
            th = validation.transported_dual_energy(mesh, f, g, dual.sigma, V, eps, cfg.case)
            dh = dual_energy(rec.deformed_mesh, f, g, validation.piola_transform(dual.sigma, rec), cfg.case)
            pd = abs(te - de)
            dd = 0.0 if (th.infinite and dh.infinite) else abs(float(th) - float(dh))
            items.append({"eps": eps, "primal_diff": pd, "dual_diff": _num(dd),
                          "match": bool(pd <= 1e-10 and dd <= 1e-10)})
            ok &= items[-1]["match"]
        out["transport"] = items
    if "duality" in suites:
        gap = float(duality_gap(mesh, f, g, sol.u, dual.sigma, cfg.case))
        out["duality"] = {"gap": _num(gap), "relative_gap": _num(gap / (1 + abs(sol.energy))),
                          "formula": "primal_energy + dual_energy"}
    if "sweep" in suites:
        V = cfg.build_velocity(mesh)
        tab = validation.fd_sweep(mesh, f, g, cfg.case, V, _fd_schedule(cfg, args), opts)
        out["sweep"] = tab.to_json()
        ok &= not tab.noisy
    return out, EXIT_OK if ok else EXIT_NUMERICAL


def cmd_example1d(cfg, args):
    a = float(args.a)
    mesh = geometry.interval(0.0, a, int(args.n))
    f, g = AbsNorm(1), HingeOneMinus()
    u, e = exact1d.solve_relaxed(mesh)
    out = {"a": a, "h": mesh.h,
           "m_exact": {"value": exact1d.m_exact(a), "formula": "m_exact"},
           "m_discrete": {"value": -e, "formula": "minus_min_relaxed_energy"}}
    if abs(a - 2.0) < 1e-12:
        V = geometry.VelocityField(args.V0 + (args.V2 - args.V0) * mesh.vertices[:, 0] / 2.0)
        fam = exact1d.relaxed_solution_family(np.linspace(0, 1, 5), mesh)
        mm = minmax_form(fam, [exact1d.dual_field(mesh)], f, g, V)
        q = validation.fd_quotient(mesh, f, g, "N", V, args.eps, solver=exact1d.relaxed_J)
        out.update({
            "jprime_exact": {"value": exact1d.jprime_exact(args.V0, args.V2), "formula": "jprime_exact"},
            "minmax": {"value": mm.value, "formula": "minmax_form"},
            "fd_quotient": {"value": q, "eps": args.eps, "formula": "fd_quotient"},
        })
    return out, EXIT_OK


def cmd_sweep(cfg, args):
    mesh = cfg.build_mesh()
    V = cfg.build_velocity(mesh)
    sched = _fd_schedule(cfg, args)
    if cfg.relaxed:
        f, g = exact1d.integrands()
        tab = validation.fd_sweep(mesh, f, g, "N", V, sched, solver=exact1d.relaxed_J)
    else:
        f, g = cfg.integrands()
        tab = validation.fd_sweep(mesh, f, g, cfg.case, V, sched, cfg.options(args.tol_scale))
    if args.out and args.out.endswith(".csv"):
        return tab.to_csv(), EXIT_OK
    return {"fd_sweep": tab.to_json()}, EXIT_OK


COMMANDS = {"solve": cmd_solve, "derive": cmd_derive, "validate": cmd_validate,
            "example1d": cmd_example1d, "sweep": cmd_sweep}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON problem file")
    common.add_argument("--out", help="report path (default: stdout)")
    common.add_argument("--no-meta", action="store_true", help="omit timestamp and version")
    common.add_argument("--tol-scale", type=float, default=1.0, help="multiply all tolerances")

    p = argparse.ArgumentParser(prog="shapegrad", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="solve the primal problem and reconstruct a dual field")
    d = sub.add_parser("derive", parents=[common], help="evaluate the shape derivative")
    d.add_argument("--volume", action="store_true")
    d.add_argument("--boundary", action="store_true")
    d.add_argument("--minmax", action="store_true")
    d.add_argument("--with-fd", action="store_true", help="add the FD extrapolation")
    d.add_argument("--fd", help="comma-separated descending eps schedule")
    v = sub.add_parser("validate", parents=[common], help="run validation suites")
    v.add_argument("--suite", default="conservation,transport,duality")
    v.add_argument("--fd", help="eps schedule for the sweep suite")
    e = sub.add_parser("example1d", parents=[common], help="1D closed-form comparison")
    e.add_argument("--a", type=float, default=2.0)
    e.add_argument("--n", type=int, default=400)
    e.add_argument("--V0", type=float, default=1.0)
    e.add_argument("--V2", type=float, default=0.0)
    e.add_argument("--eps", type=float, default=1e-3)
    s = sub.add_parser("sweep", parents=[common], help="FD quotient table")
    s.add_argument("--fd", help="comma-separated descending eps schedule")
    return p


def _emit(payload, args):
    if isinstance(payload, str):
        text = payload
    else:
        if not args.no_meta:
            payload = {**payload, "meta": {"version": __version__, "command": args.command,
                                           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}}
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        if args.command == "example1d" and not args.config:
            cfg = None
        else:
            if not args.config:
                raise ConfigError("--config is required")
            try:
                with open(args.config) as fh:
                    raw = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            cfg = ProblemConfig.from_json(raw)
        payload, code = COMMANDS[args.command](cfg, args)
    except (NonCoerciveError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"shapegrad: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"shapegrad: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit(payload, args)
    return code


if __name__ == "__main__":
    sys.exit(main())
