"""Manufactured solutions, computable error norms and convergence studies."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
import sympy as sy

from . import poly
from .mesh import PolygonalMesh, generate_mesh, mesh_size, read_mesh
from .poly import npoly
from .system import (SaddleSystem, SolveResult, assemble, build_projectors, solve_linear,
                     solve_navier_stokes)

log = logging.getLogger(__name__)

CASES = ("stokes_s51", "darcy_s52", "navier_stokes_s53", "polynomial_patch")
PROBLEMS = {"stokes": "stokes_s51", "darcy": "darcy_s52", "navier-stokes": "navier_stokes_s53"}
DEFAULT_FORM = {"stokes": "eps", "darcy": "zero", "navier-stokes": "grad", "patch": "eps"}
CSV_COLUMNS = ("family", "n", "h", "gndof", "err_u_h1", "err_u_l2", "err_p_l2", "rate_h1", "rate_l2", "rate_p")

X, Y = sy.symbols("x y", real=True)


class UnknownCaseError(KeyError):
    pass


class StudyError(RuntimeError):
    pass


def _vectorize(expr) -> Callable[[np.ndarray], np.ndarray]:
    fn = sy.lambdify((X, Y), expr, "numpy")

    def evaluate(pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.broadcast_to(np.asarray(fn(pts[:, 0], pts[:, 1]), dtype=float), (pts.shape[0],)).copy()

    return evaluate


def _stack(*fns):
    def evaluate(pts):
        return np.stack([fn(pts) for fn in fns], axis=-1)
    return evaluate


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact (u, p) with the data of one form; callables take points of shape (n, 2)."""

    name: str
    form: str
    u: Callable
    grad_u: Callable    # (n, 2, 2), slot (r, c) = d u_r / d x_c
    div_u: Callable
    p: Callable
    f: Callable
    g: Callable
    exprs: dict = field(repr=False, default_factory=dict)
    convective: bool = False


def _operator(form: str, u, p, convective: bool):
    ux, uy = u
    grad = sy.Matrix([[sy.diff(ux, X), sy.diff(ux, Y)], [sy.diff(uy, X), sy.diff(uy, Y)]])
    if form == "zero":
        visc = [ux, uy]
    elif form == "grad":
        visc = [-(sy.diff(c, X, 2) + sy.diff(c, Y, 2)) for c in (ux, uy)]
    elif form == "eps":
        eps = (grad + grad.T) / 2
        visc = [-(sy.diff(eps[r, 0], X) + sy.diff(eps[r, 1], Y)) for r in range(2)]
    else:
        raise ValueError(f"unknown form {form!r}")
    f = [visc[r] + sy.diff(p, (X, Y)[r]) for r in range(2)]
    if convective:
        f = [f[r] + grad[r, 0] * ux + grad[r, 1] * uy for r in range(2)]
    return [sy.simplify(c) for c in f], grad


def _exact_pair(name: str, k: int):
    pi = sy.pi
    if name == "stokes_s51":
        u = (sy.Rational(1, 2) * sy.sin(2 * pi * X) ** 2 * sy.sin(2 * pi * Y) * sy.cos(2 * pi * Y),
             -sy.Rational(1, 2) * sy.sin(2 * pi * Y) ** 2 * sy.sin(2 * pi * X) * sy.cos(2 * pi * X))
        p = sy.sin(2 * pi * X) * sy.cos(2 * pi * Y)
    elif name == "darcy_s52":
        u = (-pi * sy.sin(pi * X) * sy.cos(pi * Y), -pi * sy.cos(pi * X) * sy.sin(pi * Y))
        p = sy.cos(pi * X) * sy.cos(pi * Y)
    elif name == "navier_stokes_s53":
        u = (-sy.Rational(1, 2) * sy.cos(X) ** 2 * sy.cos(Y) * sy.sin(Y),
             sy.Rational(1, 2) * sy.cos(Y) ** 2 * sy.cos(X) * sy.sin(X))
        p = sy.sin(X) - sy.sin(Y)
    elif name == "polynomial_patch":
        # divergence-free velocity of degree k from a stream function of degree k+1
        psi = (X - sy.Rational(3, 10) * Y) ** (k + 1) / (k + 1) + X ** 2 * Y * (X + 2 * Y) ** (k - 2) / 3
        u = (sy.expand(sy.diff(psi, Y)), sy.expand(-sy.diff(psi, X)))
        q = (2 * X - Y + sy.Rational(1, 4)) ** (k - 1) + X * Y ** (k - 2)
        p = sy.expand(q - sy.integrate(q, (X, 0, 1), (Y, 0, 1)))
    else:
        raise UnknownCaseError(f"unknown case {name!r}; expected one of {CASES}")
    return u, p


@lru_cache(maxsize=None)
def manufactured_case(name: str, form: str | None = None, k: int = 2) -> ManufacturedCase:
    """Exact solution and derived loads.

    ``form`` selects the viscous operator used to derive f (defaults: eps for
    stokes_s51 and polynomial_patch, zero for darcy_s52, grad for
    navier_stokes_s53).  ``k`` only matters for ``polynomial_patch``.
    """
    if name not in CASES:
        raise UnknownCaseError(f"unknown case {name!r}; expected one of {CASES}")
    default = {"stokes_s51": "eps", "darcy_s52": "zero", "navier_stokes_s53": "grad", "polynomial_patch": "eps"}
    form = form or default[name]
    convective = name == "navier_stokes_s53"
    u, p = _exact_pair(name, k)
    f, grad = _operator(form, u, p, convective)
    div = sy.simplify(grad[0, 0] + grad[1, 1])
    ufn = _stack(*(_vectorize(c) for c in u))
    gfn = [_vectorize(grad[r, c]) for r in range(2) for c in range(2)]

    def grad_u(pts):
        return np.stack([fn(pts) for fn in gfn], axis=-1).reshape(-1, 2, 2)

    exprs = {"u": u, "p": p, "f": tuple(f), "div": div}
    return ManufacturedCase(name, form, ufn, grad_u, _vectorize(div), _vectorize(p),
                            _stack(*(_vectorize(c) for c in f)), _vectorize(div), exprs, convective)


# --------------------------------------------------------------------------
# errors


def error_rule_degree(k: int) -> int:
    return 2 * k + 2


def compute_errors(system: SaddleSystem, result: SolveResult, case: ManufacturedCase) -> tuple[float, float, float]:
    """(err_u_h1, err_u_l2, err_p_l2) against the exact solution, by element quadrature of degree 2k+2."""
    k = system.k
    pk, pk1 = npoly(k), npoly(k - 1)
    e_h1 = e_l2 = e_p = 0.0
    for e, pr in enumerate(system.projectors):
        sp = pr.space
        rule = sp.float_rule(error_rule_degree(k))
        w, pts = rule.weights, rule.points
        chi = result.chi[system.dofmap.local_to_global[e]]
        m = poly.eval_monomials(k, sp.frame, pts)
        h = sp.frame.diameter
        # H1: grad of the nabla projection
        cg = (poly.vector_grad_matrix(k, h) @ (pr.as_float("nabla_k") @ chi)).reshape(4, pk1)
        gh = (m[:, :pk1] @ cg.T).reshape(-1, 2, 2)
        e_h1 += float(w @ ((case.grad_u(pts) - gh) ** 2).sum(axis=(1, 2)))
        uh = m @ (pr.as_float("zero_k") @ chi).reshape(2, pk).T
        e_l2 += float(w @ ((case.u(pts) - uh) ** 2).sum(axis=1))
        rho = result.rho[system.dofmap.pressure_offsets[e] + np.arange(pk1)]
        ph = (h / sp.frame.area) * (m[:, :pk1] @ rho)
        e_p += float(w @ (case.p(pts) - ph) ** 2)
    return math.sqrt(e_h1), math.sqrt(e_l2), math.sqrt(e_p)


# --------------------------------------------------------------------------
# solve + study


def make_mesh(spec: str, n: int, seed: int = 0) -> PolygonalMesh:
    """``quad``, ``hexa``, ``voro`` or ``file:PATH``."""
    if spec.startswith("file:"):
        return read_mesh(spec[5:])
    return generate_mesh(spec, n, seed=seed)


@dataclass
class SolveOutcome:
    system: SaddleSystem
    result: SolveResult
    errors: tuple[float, float, float]
    h: float


def solve_case(case: ManufacturedCase, mesh: PolygonalMesh, k: int, tol: float = 1e-10,
               max_iter: int = 50) -> SolveOutcome:
    """Assemble and solve one manufactured problem, then measure its errors."""
    projectors = build_projectors(mesh, k)
    g = None if case.name in ("stokes_s51", "navier_stokes_s53") else case.g
    system = assemble(mesh, k, case.form, case.f, g, case.u, projectors)
    if case.convective:
        result = solve_navier_stokes(mesh, k, tol=tol, max_iter=max_iter, system=system)
    else:
        result = solve_linear(system)
    return SolveOutcome(system, result, compute_errors(system, result, case), mesh_size(mesh))


@dataclass
class ConvergenceRow:
    family: str
    n: int
    h: float
    gndof: int
    err_u_h1: float
    err_u_l2: float
    err_p_l2: float
    rate_h1: float | None = None
    rate_l2: float | None = None
    rate_p: float | None = None
    k: int = 0
    iterations: int = 0

    def csv_fields(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(float(v))
        return [self.family, str(self.n), repr(float(self.h)), str(self.gndof),
                fmt(self.err_u_h1), fmt(self.err_u_l2), fmt(self.err_p_l2),
                fmt(self.rate_h1), fmt(self.rate_l2), fmt(self.rate_p)]


def rate(e_prev: float, e_cur: float, h_prev: float, h_cur: float) -> float:
    """Observed order log(e_prev / e_cur) / log(h_prev / h_cur)."""
    return math.log(e_prev / e_cur) / math.log(h_prev / h_cur)


def add_rates(rows: list[ConvergenceRow]) -> list[ConvergenceRow]:
    out = []
    for i, row in enumerate(rows):
        if i == 0:
            out.append(replace(row, rate_h1=None, rate_l2=None, rate_p=None))
            continue
        prev = rows[i - 1]
        if not row.h < prev.h:
            raise StudyError(f"mesh size must decrease along a study (n={prev.n} -> n={row.n})")
        out.append(replace(row,
                           rate_h1=rate(prev.err_u_h1, row.err_u_h1, prev.h, row.h),
                           rate_l2=rate(prev.err_u_l2, row.err_u_l2, prev.h, row.h),
                           rate_p=rate(prev.err_p_l2, row.err_p_l2, prev.h, row.h)))
    return out


@dataclass
class StudyConfig:
    problem: str = "stokes"
    form: str | None = None
    family: str = "quad"
    n_list: tuple[int, ...] = (4, 8, 16, 32)
    k_list: tuple[int, ...] = (2, 3)
    seed: int = 0
    tol: float = 1e-10
    max_iter: int = 50
    output: str | None = None

    def case(self, k: int) -> ManufacturedCase:
        name = PROBLEMS.get(self.problem, self.problem)
        return manufactured_case(name, self.form or DEFAULT_FORM.get(self.problem), k)


def parse_config(text: str) -> StudyConfig:
    """Flat ``key = value`` lines; ``#`` starts a comment; lists are comma separated."""
    cfg = StudyConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in ("n_list", "k_list"):
            setattr(cfg, key, tuple(int(v) for v in value.replace(" ", "").split(",") if v))
        elif key in ("seed", "max_iter"):
            setattr(cfg, key, int(value))
        elif key == "tol":
            cfg.tol = float(value)
        elif key in ("problem", "form", "family", "output"):
            setattr(cfg, key, value)
        else:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
    return cfg


def run_study(config: StudyConfig, on_row: Callable[[ConvergenceRow], None] | None = None) -> dict[int, list[ConvergenceRow]]:
    """Solve the configured case on each (n, k); rates are computed within each k."""
    out: dict[int, list[ConvergenceRow]] = {}
    for k in config.k_list:
        case = config.case(k)
        rows = []
        for n in config.n_list:
            try:
                mesh = make_mesh(config.family, n, config.seed)
                sol = solve_case(case, mesh, k, config.tol, config.max_iter)
            except Exception as exc:
                raise StudyError(f"study failed at family={config.family} n={n} k={k}: {exc}") from exc
            row = ConvergenceRow(config.family, n, sol.h, sol.system.dofmap.gndof, *sol.errors, k=k,
                                 iterations=sol.result.iterations)
            rows.append(row)
            log.info("k=%d n=%d h=%.4f errors %.3e %.3e %.3e", k, n, sol.h, *sol.errors)
        rows = add_rates(rows)
        if on_row:
            for row in rows:
                on_row(row)
        out[k] = rows
    if config.output:
        write_study_csv(out, config.output)
    return out


def write_csv(rows: list[ConvergenceRow], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow(row.csv_fields())


def write_study_csv(results: dict[int, list[ConvergenceRow]], path) -> list[str]:
    """One CSV per degree; with several degrees the file name gets a ``_k<K>`` suffix."""
    if len(results) == 1:
        write_csv(next(iter(results.values())), path)
        return [str(path)]
    root, ext = os.path.splitext(str(path))
    paths = []
    for k, rows in results.items():
        p = f"{root}_k{k}{ext or '.csv'}"
        write_csv(rows, p)
        paths.append(p)
    return paths
