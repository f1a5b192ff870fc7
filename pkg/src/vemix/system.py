"""Local discrete forms, global saddle-point assembly and solvers.

The global unknown vector is ordered ``[chi | lambda | rho]``: velocity DoFs,
the zero-mean multiplier, then per-element pressure coefficients.  On element
E the discrete pressure is

    p_h = (hE / |E|) * sum_l rho_l m_l .

The divergence blocks enter with a minus sign, ``[[K, 0, -B^T], [0, 0, s^T],
[-B, s, 0]]``, so that ``rho`` represents the pressure of ``-div(...) + grad p
= f`` directly rather than its negative.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sps
import scipy.sparse.linalg as spla

from . import poly
from .mesh import PolygonalMesh
from .poly import npoly
from .projectors import ElementProjectors
from .space import GlobalDoFMap, LocalSpace, build_global_map, element_rule_degree

log = logging.getLogger(__name__)

FORMS = ("zero", "grad", "eps")
RESIDUAL_TOL = 1e-10

Field = Callable[[np.ndarray], np.ndarray]


class MissingProjectorError(LookupError):
    pass


class AssemblyError(ValueError):
    pass


class SingularSystemError(np.linalg.LinAlgError):
    pass


class PicardNotConvergedError(RuntimeError):
    def __init__(self, message: str, history: list[float], result: "SolveResult"):
        super().__init__(message)
        self.history = history
        self.result = result


# --------------------------------------------------------------------------
# local pieces


def _require(projectors: ElementProjectors | None, what: str) -> ElementProjectors:
    if projectors is None:
        raise MissingProjectorError(f"{what} needs the element projectors")
    return projectors


def local_stiffness(kind: str, projectors: ElementProjectors) -> np.ndarray:
    """Consistency plus DoF-dot-product stabilization for one element.

    ``zero`` uses the L2 projection and scales its stabilization by |E|;
    ``grad`` and ``eps`` use the corresponding energy projections unscaled.
    """
    pr = _require(projectors, "local_stiffness")
    sp, k, h = pr.space, pr.k, pr.h
    if kind == "zero":
        proj, mass, scale = pr._zero_k, sp.vector_gram(k), sp.area
    elif kind == "grad":
        op = poly.vector_grad_matrix(k, h)
        proj, mass, scale = pr._nabla_k, op.T @ sp.matrix_gram(k - 1) @ op, 1
    elif kind == "eps":
        op = poly.vector_eps_matrix(k, h)
        proj, mass, scale = pr._eps_k, op.T @ sp.matrix_gram(k - 1) @ op, 1
    else:
        raise ValueError(f"unknown form {kind!r}; expected one of {FORMS}")
    rem = np.eye(sp.ndof, dtype=proj.dtype) - sp.monomial_dofs_ext @ proj
    K = proj.T @ mass @ proj + scale * (rem.T @ rem)
    return ((K + K.T) / 2).astype(float)


def local_b_matrix(projectors: ElementProjectors) -> np.ndarray:
    """Rows (hE/|E|) int div(phi_i) m_l for l = 1..npoly(k-1)."""
    pr = _require(projectors, "local_b_matrix")
    sp = pr.space
    B = np.zeros((npoly(pr.k - 1), sp.ndof))
    B[0] = (pr._flux_rows[0] * (pr.h / pr.area)).astype(float)
    B[1:, sp.div_slice] = np.eye(sp.n_div)
    return B


def local_sigma(space: LocalSpace) -> np.ndarray:
    """(hE/|E|) int m_l, the weights of the zero-mean constraint."""
    n = npoly(space.k - 1)
    sigma = (space.monomial_integrals[:n] * (space.h / space.area)).astype(float)
    sigma[0] = space.frame.diameter
    return sigma


def load_rule_degree(k: int) -> int:
    return max(element_rule_degree(k), 2 * k + 2)


def local_loads(f: Field | None, g: Field | None, projectors: ElementProjectors, rule=None):
    """(f_E, g_E) with f_E = int (P0 f) . phi_i and g_E = (hE/|E|) int g m_l."""
    pr = _require(projectors, "local_loads")
    sp, k = pr.space, pr.k
    rule = rule or sp.float_rule(load_rule_degree(k))
    f_E = np.zeros(sp.ndof)
    g_E = np.zeros(npoly(k - 1))
    if f is None and g is None:
        return f_E, g_E
    m = poly.eval_monomials(k, sp.frame, rule.points)
    if f is not None:
        vals = np.asarray(f(rule.points), dtype=float).reshape(-1, 2)
        moments = np.concatenate([(rule.weights * vals[:, 0]) @ m, (rule.weights * vals[:, 1]) @ m])
        # int (P0 f) . phi_i = int f . P0 phi_i by the defining property of P0
        f_E = pr.as_float("zero_k").T @ moments
    if g is not None:
        gv = np.asarray(g(rule.points), dtype=float).ravel()
        g_E = (sp.frame.diameter / sp.frame.area) * ((rule.weights * gv) @ m[:, : npoly(k - 1)])
    return f_E, g_E


def local_convection(w: np.ndarray, projectors: ElementProjectors, rule=None) -> np.ndarray:
    """C[j, i] = int ((P0_{k-1} grad phi_i)(P0_k w)) . P0_k phi_j."""
    pr = _require(projectors, "local_convection")
    sp, k = pr.space, pr.k
    pk, pk1 = npoly(k), npoly(k - 1)
    if rule is None:
        rule = sp.rule
    pts = np.asarray(rule.points, dtype=float)
    wq = np.asarray(rule.weights, dtype=float)
    m = poly.eval_monomials(k, sp.frame, pts)
    p0 = pr.as_float("zero_k").reshape(2, pk, -1)
    grad = pr.as_float("zero_km1_grad").reshape(2, 2, pk1, -1)
    wv = m @ (pr.as_float("zero_k") @ np.asarray(w, dtype=float)).reshape(2, pk).T   # (q, 2)
    phi = np.einsum("qa,cai->qci", m, p0)                              # (q, 2, ndof)
    gphi = np.einsum("qa,rcai->qrci", m[:, :pk1], grad)                  # (q, 2, 2, ndof)
    adv = np.einsum("qrci,qc->qri", gphi, wv)
    return np.einsum("q,qrj,qri->ji", wq, phi, adv)


@dataclass
class LocalMatrices:
    """Everything one element contributes to the global system."""

    K0: np.ndarray | None
    Kgrad: np.ndarray | None
    Keps: np.ndarray | None
    B: np.ndarray
    f: np.ndarray
    g: np.ndarray
    sigma: np.ndarray

    def stiffness(self, form: str) -> np.ndarray:
        K = {"zero": self.K0, "grad": self.Kgrad, "eps": self.Keps}[form]
        if K is None:
            raise MissingProjectorError(f"{form} stiffness was not computed")
        return K


def local_matrices(projectors: ElementProjectors, forms=FORMS, f: Field | None = None,
                   g: Field | None = None) -> LocalMatrices:
    K = {kind: local_stiffness(kind, projectors) if kind in forms else None for kind in FORMS}
    f_E, g_E = local_loads(f, g, projectors)
    return LocalMatrices(K["zero"], K["grad"], K["eps"], local_b_matrix(projectors), f_E, g_E,
                         local_sigma(projectors.space))


# --------------------------------------------------------------------------
# global system


@dataclass
class SaddleSystem:
    """Assembled block system before Dirichlet elimination.

    ``matrix`` is the full square matrix over ``[chi | lambda | rho]``;
    ``dirichlet_mask``/``dirichlet_values`` cover the same index range.
    """

    mesh: PolygonalMesh
    k: int
    form: str
    dofmap: GlobalDoFMap
    projectors: list[ElementProjectors]
    K: sps.csr_matrix
    B: sps.csr_matrix
    sigma: np.ndarray
    f: np.ndarray
    g: np.ndarray
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray
    matrix: sps.csr_matrix = field(init=False)
    rhs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.matrix = self.block_matrix(self.K)
        self.rhs = np.concatenate([self.f, [0.0], -self.g])

    @property
    def n_velocity(self) -> int:
        return self.dofmap.n_velocity

    @property
    def n_pressure(self) -> int:
        return self.dofmap.n_pressure

    @property
    def size(self) -> int:
        return self.n_velocity + 1 + self.n_pressure

    def block_matrix(self, K: sps.spmatrix) -> sps.csr_matrix:
        s = sps.csr_matrix(self.sigma[None, :])
        return sps.bmat([
            [K, None, -self.B.T],
            [None, sps.csr_matrix((1, 1)), s],
            [-self.B, s.T, None],
        ], format="csr")


def build_projectors(mesh: PolygonalMesh, k: int) -> list[ElementProjectors]:
    return [ElementProjectors(LocalSpace(k, geo)) for geo in mesh.geometries]


def boundary_values(dofmap: GlobalDoFMap, bc: Field | None) -> np.ndarray:
    """Velocity DoF values on the boundary nodes from a pointwise field (zero if ``bc`` is None)."""
    values = np.zeros(dofmap.n_velocity)
    if bc is not None:
        nodes = np.flatnonzero(dofmap.boundary_mask[0::2][: len(dofmap.node_coords)])
        vals = np.asarray(bc(dofmap.node_coords[nodes]), dtype=float).reshape(-1, 2)
        values[2 * nodes] = vals[:, 0]
        values[2 * nodes + 1] = vals[:, 1]
    return values


def _scatter(rows: list, cols: list, vals: list, shape) -> sps.csr_matrix:
    if not vals:
        return sps.csr_matrix(shape)
    return sps.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=shape).tocsr()


def assemble(mesh: PolygonalMesh, k: int, form: str, f: Field | None = None, g: Field | None = None,
             bc: Field | None = None, projectors: list[ElementProjectors] | None = None) -> SaddleSystem:
    """Assemble the saddle-point system for one bilinear form.

    ``bc`` gives the Dirichlet velocity on the whole boundary (homogeneous if None).
    """
    if form not in FORMS:
        raise ValueError(f"unknown form {form!r}; expected one of {FORMS}")
    dofmap = build_global_map(mesh, k)
    if projectors is None:
        projectors = build_projectors(mesh, k)
    if len(projectors) != mesh.n_elements or len(dofmap.local_to_global) != mesh.n_elements:
        raise AssemblyError("projector list and DoF map do not match the mesh")
    nv, npr = dofmap.n_velocity, dofmap.n_pressure
    npk1 = npoly(k - 1)
    kr, kc, kv, br, bc_, bv = [], [], [], [], [], []
    fvec = np.zeros(nv)
    gvec = np.zeros(npr)
    sigma = np.zeros(npr)
    for e, pr in enumerate(projectors):
        l2g = dofmap.local_to_global[e]
        if l2g.size != pr.space.ndof:
            raise AssemblyError(f"element {e}: {l2g.size} global DoFs for {pr.space.ndof} local DoFs")
        K = local_stiffness(form, pr)
        B = local_b_matrix(pr)
        f_E, g_E = local_loads(f, g, pr)
        prow = dofmap.pressure_offsets[e] + np.arange(npk1)
        kr.append(np.repeat(l2g, l2g.size))
        kc.append(np.tile(l2g, l2g.size))
        kv.append(K.ravel())
        br.append(np.repeat(prow, l2g.size))
        bc_.append(np.tile(l2g, npk1))
        bv.append(B.ravel())
        np.add.at(fvec, l2g, f_E)
        gvec[prow] = g_E
        sigma[prow] = local_sigma(pr.space)
    Kg = _scatter(kr, kc, kv, (nv, nv))
    Bg = _scatter(br, bc_, bv, (npr, nv))
    Bg.eliminate_zeros()
    mask = np.zeros(nv + 1 + npr, dtype=bool)
    mask[:nv] = dofmap.boundary_mask
    values = np.zeros(nv + 1 + npr)
    values[:nv] = boundary_values(dofmap, bc)
    return SaddleSystem(mesh, k, form, dofmap, projectors, Kg, Bg, sigma, fvec, gvec, mask, values)


def convection_matrix(system: SaddleSystem, chi: np.ndarray) -> sps.csr_matrix:
    """Global convective matrix C(w) for the velocity DoF vector ``chi``."""
    rows, cols, vals = [], [], []
    for e, pr in enumerate(system.projectors):
        l2g = system.dofmap.local_to_global[e]
        C = local_convection(chi[l2g], pr)
        rows.append(np.repeat(l2g, l2g.size))
        cols.append(np.tile(l2g, l2g.size))
        vals.append(C.ravel())
    n = system.n_velocity
    return _scatter(rows, cols, vals, (n, n))


# --------------------------------------------------------------------------
# solves


@dataclass
class SolveResult:
    chi: np.ndarray
    rho: np.ndarray
    lam: float
    residual: float
    div_norm_sq: float
    pressure_integral: float
    history: list[float] = field(default_factory=list)
    converged: bool = True

    @property
    def iterations(self) -> int:
        return len(self.history)


def _suspected_kernel(system: SaddleSystem) -> str:
    if not system.dirichlet_mask.any():
        return {"grad": "constant velocities", "eps": "rigid motions", "zero": "pressure"}[system.form]
    return "pressure modes (check the multiplier row)"


def divergence_norm_sq(system: SaddleSystem, chi: np.ndarray) -> float:
    """sum_E ||div u_h||^2 from the reconstructed divergence polynomials."""
    total = 0.0
    for e, pr in enumerate(system.projectors):
        c = pr.as_float("divergence") @ chi[system.dofmap.local_to_global[e]]
        total += float(c @ pr.space.gram(pr.k - 1, pr.k - 1).astype(float) @ c)
    return total


def solve_linear(system: SaddleSystem, extra: sps.spmatrix | None = None) -> SolveResult:
    """Sparse direct solve with symmetric elimination of the Dirichlet DoFs.

    ``extra`` is added to the velocity block (the convective term of a Picard step).
    """
    A = system.matrix if extra is None else system.block_matrix(system.K + extra)
    b = system.rhs
    fixed = system.dirichlet_mask
    free = ~fixed
    x = system.dirichlet_values.copy()
    A_ff = A[free][:, free].tocsc()
    rhs = b[free] - A[free][:, fixed] @ x[fixed]
    try:
        lu = spla.splu(A_ff)
    except RuntimeError as exc:
        raise SingularSystemError(f"singular saddle-point matrix ({exc}); suspected kernel: "
                                  f"{_suspected_kernel(system)}") from exc
    x[free] = lu.solve(rhs)
    if not np.all(np.isfinite(x)):
        raise SingularSystemError(f"non-finite solution; suspected kernel: {_suspected_kernel(system)}")
    res_vec = A_ff @ x[free] - rhs
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    residual = float(np.linalg.norm(res_vec) / scale) if np.linalg.norm(rhs) > 0 else float(np.linalg.norm(res_vec))
    if residual > RESIDUAL_TOL:
        log.warning("linear residual %.2e exceeds %.0e", residual, RESIDUAL_TOL)
    nv = system.n_velocity
    chi, lam, rho = x[:nv], float(x[nv]), x[nv + 1:]
    return SolveResult(chi, rho, lam, residual, divergence_norm_sq(system, chi), float(system.sigma @ rho))


def solve_navier_stokes(mesh: PolygonalMesh, k: int, f: Field | None = None, bc: Field | None = None,
                        tol: float = 1e-10, max_iter: int = 50, system: SaddleSystem | None = None) -> SolveResult:
    """Picard iteration on the gradient form, started from the Stokes solution.

    Stops when ||chi_m - chi_{m-1}|| <= tol * ||chi_m||; raises
    :class:`PicardNotConvergedError` (carrying the last iterate) otherwise.
    """
    if system is None:
        system = assemble(mesh, k, "grad", f, None, bc)
    elif system.form != "grad":
        raise ValueError("the Navier-Stokes solver uses the gradient form")
    result = solve_linear(system)
    history: list[float] = []
    for it in range(1, max_iter + 1):
        C = convection_matrix(system, result.chi)
        new = solve_linear(system, extra=C)
        inc = float(np.linalg.norm(new.chi - result.chi))
        history.append(inc)
        log.info("Picard %d: increment %.3e", it, inc)
        result = new
        if inc <= tol * np.linalg.norm(new.chi):
            result.history = history
            return result
    result.history = history
    result.converged = False
    raise PicardNotConvergedError(
        f"Picard iteration did not converge in {max_iter} steps (last increment {history[-1]:.3e})",
        history, result)


# --------------------------------------------------------------------------
# export


def write_coo(matrix: sps.spmatrix, path) -> None:
    """One ``row col value`` line per stored entry, 0-based indices."""
    coo = sps.coo_matrix(matrix)
    with open(path, "w") as fh:
        fh.write(f"# rows={coo.shape[0]} cols={coo.shape[1]} nnz={coo.nnz}\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")


def dump_matrices(system: SaddleSystem, directory) -> list[str]:
    """Write the assembled blocks and right-hand side into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    out = []
    for name, mat in (("system", system.matrix), ("K", system.K), ("B", system.B)):
        path = os.path.join(directory, f"{name}.coo")
        write_coo(mat, path)
        out.append(path)
    path = os.path.join(directory, "rhs.txt")
    np.savetxt(path, system.rhs, fmt="%.17g")
    out.append(path)
    return out
