"""Forward solvers for the weakly coupled parabolic systems on the annulus.

Spatial discretization is second-order finite differences on the tensor polar
grid, in divergence (flux) form so that constants lie in the discrete kernel
for pure Neumann closures. Robin/Neumann boundary rows use second-order ghost
elimination; Dirichlet rows are pinned to zero by row replacement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    BoundaryFlagInvalid,
    EllipticityViolated,
    NewtonDivergence,
    QuadratureFailure,
    ShapeMismatch,
    SolverDivergence,
)
from .geometry import PolarGrid, angular_derivative, radial_derivative


# ---------------------------------------------------------------------------
# Coefficient containers
# ---------------------------------------------------------------------------

@dataclass
class DiffusionField:
    """Symmetric diffusion matrix in the polar orthonormal frame (e_r, e_th).

    art is the off-diagonal entry; it must vanish on the two boundary circles
    whenever a Robin/Neumann closure is used there (the ghost elimination is
    radial-only).
    """
    arr: np.ndarray
    att: np.ndarray
    art: np.ndarray

    @classmethod
    def isotropic(cls, grid: PolarGrid, a: float = 1.0) -> "DiffusionField":
        shp = grid.shape
        return cls(arr=np.full(shp, float(a)), att=np.full(shp, float(a)),
                   art=np.zeros(shp))

    def min_eigenvalue(self) -> float:
        lam = 0.5 * (self.arr + self.att) - np.sqrt(
            0.25 * (self.arr - self.att) ** 2 + self.art ** 2)
        return float(np.min(lam))


@dataclass
class SystemCoefficients:
    """Per-component diffusion/drift plus the zero-order coupling matrix.

    c has shape (n, n, n_r, n_theta) for time-independent couplings or
    (n, n, n_t, n_r, n_theta) when sampled on the time grid. beta/eta are
    indexed (component, boundary, theta) with boundary 0 = inner circle.
    """
    grid: PolarGrid
    n: int
    A: list
    b: list
    c: np.ndarray
    beta: np.ndarray
    eta: np.ndarray
    mu_ell: float = 0.0

    def __post_init__(self):
        shp = self.grid.shape
        if len(self.A) != self.n or len(self.b) != self.n:
            raise ShapeMismatch("need one diffusion and one drift per component")
        if self.beta.shape != (self.n, 2, self.grid.n_theta):
            raise ShapeMismatch(f"beta shape {self.beta.shape}")
        if self.eta.shape != (self.n, 2, self.grid.n_theta):
            raise ShapeMismatch(f"eta shape {self.eta.shape}")
        if not np.isin(self.beta, (0.0, 1.0)).all():
            raise BoundaryFlagInvalid("beta must take values in {0, 1}")
        if np.any(self.eta < 0.0):
            raise BoundaryFlagInvalid("eta must be nonnegative")
        if np.any(self.beta + self.eta <= 0.0):
            raise BoundaryFlagInvalid("beta + eta must be positive on the boundary")
        for a in self.A:
            if a.arr.shape != shp:
                raise ShapeMismatch("diffusion field shape mismatch")
        self.mu_ell = min(a.min_eigenvalue() for a in self.A)
        if self.mu_ell <= 0.0:
            raise EllipticityViolated(
                f"smallest diffusion eigenvalue {self.mu_ell:.3e} is not positive")
        if self.c.shape not in ((self.n, self.n) + shp,
                                (self.n, self.n, self.grid.n_t) + shp):
            raise ShapeMismatch(f"coupling field shape {self.c.shape}")

    @property
    def c_static(self) -> bool:
        return self.c.ndim == 4

    def c_slice(self, m: int) -> np.ndarray:
        return self.c if self.c_static else self.c[:, :, m]

    def c_mid(self, m: int) -> np.ndarray:
        if self.c_static:
            return self.c
        return 0.5 * (self.c[:, :, m] + self.c[:, :, m + 1])


def make_coefficients(grid: PolarGrid, n: int = 1, A=None, b=None, c=None,
                      beta=1.0, eta=0.0) -> SystemCoefficients:
    """Convenience constructor broadcasting scalars to full coefficient fields."""
    shp = grid.shape
    if A is None:
        A = [DiffusionField.isotropic(grid) for _ in range(n)]
    elif np.isscalar(A):
        A = [DiffusionField.isotropic(grid, float(A)) for _ in range(n)]
    if b is None:
        b = [np.zeros((2,) + shp) for _ in range(n)]
    else:
        b = [np.broadcast_to(np.asarray(bi, float).reshape(2, 1, 1)
                             if np.asarray(bi).shape == (2,) else bi,
                             (2,) + shp).copy() for bi in b]
    if c is None:
        c = np.zeros((n, n) + shp)
    else:
        c = np.asarray(c, dtype=float)
        if c.shape == (n, n):
            c = np.broadcast_to(c[:, :, None, None], (n, n) + shp).copy()
    beta = np.broadcast_to(np.asarray(beta, float), (n, 2, grid.n_theta)).copy()
    eta = np.broadcast_to(np.asarray(eta, float), (n, 2, grid.n_theta)).copy()
    return SystemCoefficients(grid=grid, n=n, A=A, b=b, c=c, beta=beta, eta=eta)


# ---------------------------------------------------------------------------
# Fields
# ---------------------------------------------------------------------------

@dataclass
class StateField:
    grid: PolarGrid
    values: np.ndarray  # (n, n_t, n_r, n_theta)

    def __post_init__(self):
        expected = (self.grid.n_t,) + self.grid.shape
        if self.values.ndim != 4 or self.values.shape[1:] != expected:
            raise ShapeMismatch(f"state shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ShapeMismatch("state field contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


@dataclass
class SourceField:
    grid: PolarGrid
    values: np.ndarray  # (n, n_t, n_r, n_theta)
    l2_Q: float = 0.0
    l1_Q: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        expected = (self.grid.n_t,) + self.grid.shape
        if self.values.ndim != 4 or self.values.shape[1:] != expected:
            raise ShapeMismatch(f"source shape {self.values.shape}")
        self.l2_Q = _norm_l2(self.grid, self.values)
        self.l1_Q = _norm_l1(self.grid, self.values)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def _norm_l2(grid: PolarGrid, values: np.ndarray) -> float:
    wq = grid.quad_weights
    wt = grid.time_weights
    per_t = np.einsum("ctij,ij->ct", values ** 2, wq)
    return float(np.sqrt(np.sum(per_t * wt[None, :])))


def _norm_l1(grid: PolarGrid, values: np.ndarray) -> float:
    wq = grid.quad_weights
    wt = grid.time_weights
    per_t = np.einsum("ctij,ij->ct", np.abs(values), wq)
    return float(np.sum(per_t * wt[None, :]))


def norm_L2_Q(fld) -> float:
    """Space-time L2 norm with the polar Jacobian and trapezoid time rule."""
    return _norm_l2(fld.grid, fld.values)


def norm_L1_Q(fld) -> float:
    """Space-time L1 norm, absolute values summed over components."""
    return _norm_l1(fld.grid, fld.values)


# ---------------------------------------------------------------------------
# Operator assembly
# ---------------------------------------------------------------------------

@dataclass
class EllipticOperator:
    """Discrete -div(A grad .) + b.grad with the boundary closure built in.

    matrix rows at Dirichlet nodes are zero; dirichlet_mask marks them so the
    time steppers can pin those unknowns.
    """
    matrix: sp.csr_matrix
    dirichlet_mask: np.ndarray


def assemble_operator(coeffs: SystemCoefficients, grid: PolarGrid,
                      component: int) -> EllipticOperator:
    A = coeffs.A[component]
    b = coeffs.b[component]
    beta = coeffs.beta[component]
    eta = coeffs.eta[component]
    n_r, n_th = grid.shape
    dr, dth = grid.dr, grid.dtheta
    r = grid.r
    N = grid.n_nodes

    robin_rings = [k for k in (0, 1) if np.any(beta[k] == 1.0)]
    for k in robin_rings:
        ring = 0 if k == 0 else n_r - 1
        if np.any(A.art[ring, :] != 0.0):
            raise EllipticityViolated(
                "off-diagonal diffusion must vanish on Robin boundary rings")

    rows, cols, vals = [], [], []

    def idx(i, j):
        return i * n_th + (j % n_th)

    def add(ri, ci, v):
        rows.append(np.asarray(ri).ravel())
        cols.append(np.asarray(ci).ravel())
        vals.append(np.asarray(v).ravel())

    ii, jj = np.meshgrid(np.arange(1, n_r - 1), np.arange(n_th), indexing="ij")
    rid = idx(ii, jj)
    ric = r[ii]

    # radial flux
    rh_p = r[ii] + 0.5 * dr
    rh_m = r[ii] - 0.5 * dr
    arr_p = 0.5 * (A.arr[ii, jj] + A.arr[ii + 1, jj])
    arr_m = 0.5 * (A.arr[ii, jj] + A.arr[ii - 1, jj])
    cp = -rh_p * arr_p / (ric * dr * dr)
    cm = -rh_m * arr_m / (ric * dr * dr)
    add(rid, idx(ii + 1, jj), cp)
    add(rid, idx(ii - 1, jj), cm)
    add(rid, rid, -(cp + cm))

    # angular flux
    att_p = 0.5 * (A.att[ii, jj] + A.att[ii, (jj + 1) % n_th])
    att_m = 0.5 * (A.att[ii, jj] + A.att[ii, (jj - 1) % n_th])
    ap = -att_p / (ric ** 2 * dth * dth)
    am = -att_m / (ric ** 2 * dth * dth)
    add(rid, idx(ii, jj + 1), ap)
    add(rid, idx(ii, jj - 1), am)
    add(rid, rid, -(ap + am))

    # mixed terms, centered (interior only; art vanishes on Robin rings)
    if np.any(A.art != 0.0):
        q3p = -A.art[ii + 1, jj] / (4.0 * dr * dth * ric)
        q3m = A.art[ii - 1, jj] / (4.0 * dr * dth * ric)
        add(rid, idx(ii + 1, jj + 1), q3p)
        add(rid, idx(ii + 1, jj - 1), -q3p)
        add(rid, idx(ii - 1, jj + 1), q3m)
        add(rid, idx(ii - 1, jj - 1), -q3m)
        q4p = -A.art[ii, (jj + 1) % n_th] / (4.0 * dr * dth * ric)
        q4m = -A.art[ii, (jj - 1) % n_th] / (4.0 * dr * dth * ric)
        add(rid, idx(ii + 1, jj + 1), q4p)
        add(rid, idx(ii - 1, jj + 1), -q4p)
        add(rid, idx(ii + 1, jj - 1), -q4m)
        add(rid, idx(ii - 1, jj - 1), q4m)

    # drift
    br = b[0][ii, jj]
    bt = b[1][ii, jj]
    add(rid, idx(ii + 1, jj), br / (2.0 * dr))
    add(rid, idx(ii - 1, jj), -br / (2.0 * dr))
    add(rid, idx(ii, jj + 1), bt / (2.0 * dth * ric))
    add(rid, idx(ii, jj - 1), -bt / (2.0 * dth * ric))

    dirichlet = np.zeros(N, dtype=bool)
    jb = np.arange(n_th)

    for side, ring in ((0, 0), (1, n_r - 1)):
        robin = beta[side] == 1.0
        dirichlet[idx(ring, jb[~robin])] = True
        if not np.any(robin):
            continue
        jr = jb[robin]
        rid_b = idx(ring, jr)
        rb = r[ring]
        arr0 = A.arr[ring, jr]
        eta_b = eta[side][jr]
        sgn = -1.0 if side == 0 else 1.0  # outward normal is sgn * e_r
        inner = ring + (1 if side == 0 else -1)   # first node inside
        # interior half point sits toward the domain, ghost half point outside
        rh_int = rb + 0.5 * dr if side == 0 else rb - 0.5 * dr
        rh_gho = rb - 0.5 * dr if side == 0 else rb + 0.5 * dr
        arr_int = 0.5 * (A.arr[ring, jr] + A.arr[inner, jr])
        # flux form at the ring, ghost flux uses the one-sided arr value:
        # side 0: (1/(r0 dr^2)) [rh_int*arr_int*(u_in - u_b) - rh_gho*arr0*(u_b - u_g)]
        # side 1: (1/(r1 dr^2)) [rh_gho*arr0*(u_g - u_b) - rh_int*arr_int*(u_b - u_in)]
        # with u_g = u_in - (2 dr eta / arr0) * u_b in both cases.
        c_in = -(rh_int * arr_int + rh_gho * arr0) / (rb * dr * dr)
        c_dg = (rh_int * arr_int + rh_gho * arr0) / (rb * dr * dr) \
            + 2.0 * rh_gho * eta_b / (rb * dr)
        add(rid_b, idx(inner, jr), c_in)
        add(rid_b, rid_b, c_dg)
        # angular flux on the ring
        att_p = 0.5 * (A.att[ring, jr] + A.att[ring, (jr + 1) % n_th])
        att_m = 0.5 * (A.att[ring, jr] + A.att[ring, (jr - 1) % n_th])
        ap = -att_p / (rb ** 2 * dth * dth)
        am = -att_m / (rb ** 2 * dth * dth)
        add(rid_b, idx(ring, jr + 1), ap)
        add(rid_b, idx(ring, jr - 1), am)
        add(rid_b, rid_b, -(ap + am))
        # drift: the ghost closure reduces u_r on the ring to +-eta*u/arr
        br_b = b[0][ring, jr]
        bt_b = b[1][ring, jr]
        u_r_coeff = sgn * (-eta_b) / arr0  # u_r = sgn * (-eta) u / arr on the ring
        add(rid_b, rid_b, br_b * u_r_coeff)
        add(rid_b, idx(ring, jr + 1), bt_b / (2.0 * dth * rb))
        add(rid_b, idx(ring, jr - 1), -bt_b / (2.0 * dth * rb))

    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N, N)).tocsr()
    if np.any(dirichlet):
        mask = sp.diags((~dirichlet).astype(float))
        mat = (mask @ mat).tocsr()
    return EllipticOperator(matrix=mat, dirichlet_mask=dirichlet)


# ---------------------------------------------------------------------------
# Linear forward solver
# ---------------------------------------------------------------------------

_RESIDUAL_TOL = 1e-10


def _coupling_matrix(c_block: np.ndarray, dirichlet: np.ndarray) -> sp.csr_matrix:
    """Block matrix of nodewise couplings, with Dirichlet rows zeroed."""
    n = c_block.shape[0]
    N = c_block.shape[-1] * c_block.shape[-2]
    blocks = [[sp.diags(c_block[i, l].ravel()) for l in range(n)] for i in range(n)]
    mat = sp.bmat(blocks, format="csr")
    if np.any(dirichlet):
        mat = (sp.diags((~dirichlet).astype(float)) @ mat).tocsr()
    return mat


class LinearPropagator:
    """Implicit time stepper for the coupled linear system.

    Couplings are treated implicitly inside one block solve per step; when
    the coupling field is time-independent the step matrix is factorized
    once and reused.
    """

    def __init__(self, coeffs: SystemCoefficients, grid: PolarGrid,
                 scheme: str = "backward_euler"):
        if scheme not in ("backward_euler", "crank_nicolson"):
            raise ShapeMismatch(f"unknown scheme {scheme!r}")
        if not coeffs.grid.same_layout(grid):
            raise ShapeMismatch("coefficients were built on a different grid")
        self.coeffs = coeffs
        self.grid = grid
        self.scheme = scheme
        ops = [assemble_operator(coeffs, grid, i) for i in range(coeffs.n)]
        self.L = sp.block_diag([op.matrix for op in ops], format="csr")
        self.dirichlet = np.concatenate([op.dirichlet_mask for op in ops])
        self.mass = sp.diags((~self.dirichlet).astype(float))
        self.pin = sp.diags(self.dirichlet.astype(float))
        self._free_diag = sp.diags((~self.dirichlet).astype(float))
        self._static = None
        if coeffs.c_static:
            Smat = self._system_matrix(coeffs.c_slice(0))
            lhs = self._lhs_from(Smat)
            self._static = (Smat, lhs, spla.splu(lhs.tocsc()))

    def _system_matrix(self, c_block):
        return self.L + _coupling_matrix(c_block, self.dirichlet)

    def _lhs_from(self, Smat):
        dt = self.grid.dt
        weight = 1.0 if self.scheme == "backward_euler" else 0.5
        return (self.mass / dt + weight * Smat + self.pin).tocsr()

    def _step_matrices(self, m):
        if self._static is not None:
            return self._static
        c_block = (self.coeffs.c_slice(m + 1) if self.scheme == "backward_euler"
                   else self.coeffs.c_mid(m))
        Smat = self._system_matrix(c_block)
        lhs = self._lhs_from(Smat)
        return Smat, lhs, spla.splu(lhs.tocsc())

    def solve(self, g: SourceField, y0: np.ndarray) -> StateField:
        grid, coeffs = self.grid, self.coeffs
        n, N = coeffs.n, grid.n_nodes
        if g.values.shape[0] != n:
            raise ShapeMismatch("source component count mismatch")
        y0 = np.asarray(y0, dtype=float)
        if y0.shape != (n,) + grid.shape:
            raise ShapeMismatch(f"initial slice shape {y0.shape}")
        dt = grid.dt
        free = ~self.dirichlet

        traj = np.empty((n, grid.n_t) + grid.shape)
        y = y0.reshape(n * N).copy()
        y[self.dirichlet] = 0.0
        traj[:, 0] = y.reshape(n, *grid.shape)

        for m in range(grid.n_t - 1):
            Smat, lhs, factor = self._step_matrices(m)
            if self.scheme == "backward_euler":
                gs = g.values[:, m + 1].reshape(n * N)
                rhs = y / dt * free + np.where(free, gs, 0.0)
            else:
                gs = 0.5 * (g.values[:, m] + g.values[:, m + 1]).reshape(n * N)
                rhs = y / dt * free - 0.5 * (Smat @ y) * free + np.where(free, gs, 0.0)
            y_new = factor.solve(rhs)
            resid = np.linalg.norm(lhs @ y_new - rhs)
            if resid > _RESIDUAL_TOL * max(1.0, np.linalg.norm(rhs)):
                raise SolverDivergence(
                    f"linear solve residual {resid:.2e} at step {m}")
            y = y_new
            traj[:, m + 1] = y.reshape(n, *grid.shape)
        return StateField(grid=grid, values=traj)


def solve_forward_linear(coeffs: SystemCoefficients, g: SourceField,
                         y0: np.ndarray, grid: PolarGrid,
                         scheme: str = "backward_euler") -> StateField:
    """Implicit forward solve of the coupled linear system."""
    return LinearPropagator(coeffs, grid, scheme).solve(g, y0)


# ---------------------------------------------------------------------------
# Semilinear solver and linearization
# ---------------------------------------------------------------------------

@dataclass
class NonlinearityModel:
    """Reaction terms f_i(t, x, y) with Jacobian, vectorized over the grid.

    f(t, rmesh, thmesh, Y) -> (n, n_r, n_theta);
    df(t, rmesh, thmesh, Y) -> (n, n, n_r, n_theta) of partials df_i/dy_l.
    hypothesis_case: "A" (f_i = 0 at y_i = 0) or "B" (f_i <= 0 at y_i = 0,
    off-diagonal partials <= 0).
    """
    f: Callable
    df: Callable
    hypothesis_case: str = "A"

    def check_zero_at_origin(self, grid: PolarGrid, n: int,
                             n_probe_t: int = 5, tol: float = 1e-12) -> None:
        rm, tm = grid.rmesh, grid.thmesh
        zero = np.zeros((n,) + grid.shape)
        for t in np.linspace(0.0, grid.T, n_probe_t):
            val = np.asarray(self.f(t, rm, tm, zero))
            if np.max(np.abs(val)) > tol:
                raise QuadratureFailure(
                    f"f(t, x, 0) != 0 at t={t:g} (max {np.max(np.abs(val)):.2e})")


def solve_forward_semilinear(coeffs: SystemCoefficients, f: NonlinearityModel,
                             g: SourceField, y0: np.ndarray, grid: PolarGrid,
                             newton_tol: float = 1e-9,
                             max_newton: int = 25) -> StateField:
    """Backward Euler with a damped Newton solve of each implicit step."""
    f.check_zero_at_origin(grid, coeffs.n)
    prop = LinearPropagator(coeffs, grid, "backward_euler")
    n, N = coeffs.n, grid.n_nodes
    dt = grid.dt
    free = ~prop.dirichlet
    rm, tm = grid.rmesh, grid.thmesh

    traj = np.empty((n, grid.n_t) + grid.shape)
    y = np.asarray(y0, float).reshape(n * N).copy()
    y[prop.dirichlet] = 0.0
    traj[:, 0] = y.reshape(n, *grid.shape)

    for m in range(grid.n_t - 1):
        t_new = grid.t[m + 1]
        Smat = prop._system_matrix(coeffs.c_slice(m + 1))
        gs = np.where(free, g.values[:, m + 1].reshape(n * N), 0.0)

        def residual(v):
            Y = v.reshape(n, *grid.shape)
            fv = np.asarray(f.f(t_new, rm, tm, Y)).reshape(n * N)
            res = (v - y) / dt * free + Smat @ v + np.where(free, fv, 0.0) - gs
            res[prop.dirichlet] = v[prop.dirichlet]
            return res

        v = y.copy()
        res = residual(v)
        norm = np.linalg.norm(res, ord=np.inf)
        converged = norm < newton_tol
        for _ in range(max_newton):
            if converged:
                break
            Y = v.reshape(n, *grid.shape)
            J_f = np.asarray(f.df(t_new, rm, tm, Y))
            J = (prop.mass / dt + Smat
                 + _coupling_matrix(J_f, prop.dirichlet) + prop.pin).tocsr()
            delta = spla.splu(J.tocsc()).solve(-res)
            step = 1.0
            for _damp in range(12):
                trial = v + step * delta
                tr_res = residual(trial)
                tr_norm = np.linalg.norm(tr_res, ord=np.inf)
                if tr_norm < norm or tr_norm < newton_tol:
                    break
                step *= 0.5
            v, res, norm = trial, tr_res, tr_norm
            converged = norm < newton_tol
        if not converged:
            raise NewtonDivergence(
                f"Newton stalled at step {m} with residual {norm:.2e}")
        y = v
        traj[:, m + 1] = y.reshape(n, *grid.shape)
    return StateField(grid=grid, values=traj)


@dataclass
class LinearizedSystem:
    """Coupling field (and remainder source) equivalent to the nonlinearity.

    mode "diagonal": c is diagonal with c_ii = int_0^1 df_i/dy_i along the
    partial ray in y_i, and gbar_i = -f_i(y with y_i = 0); the identity
    f_i(y) = c_ii y_i - gbar_i is exact. mode "full": c_il = int_0^1
    df_i/dy_l(tau*y) dtau with gbar = 0, exact whenever f(0) = 0.
    """
    c: np.ndarray        # (n, n, n_t, n_r, n_theta)
    gbar: SourceField
    mode: str


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_TAU = 0.5 * (_GL_X + 1.0)
_GL_WEIGHT = 0.5 * _GL_W


def linearize_semilinear(f: NonlinearityModel, y: StateField,
                         mode: str | None = None) -> LinearizedSystem:
    """Exact ray-integral linearization of the reaction terms along y.

    The tau integral is evaluated with 16-point Gauss-Legendre quadrature.
    """
    if mode is None:
        mode = "diagonal" if f.hypothesis_case == "A" else "full"
    if mode not in ("diagonal", "full"):
        raise QuadratureFailure(f"unknown linearization mode {mode!r}")
    grid = y.grid
    n = y.n
    rm, tm = grid.rmesh, grid.thmesh
    c = np.zeros((n, n, grid.n_t) + grid.shape)
    gbar = np.zeros((n, grid.n_t) + grid.shape)

    for m, t in enumerate(grid.t):
        Y = y.values[:, m]
        if mode == "full":
            for tau, w in zip(_GL_TAU, _GL_WEIGHT):
                c[:, :, m] += w * np.asarray(f.df(t, rm, tm, tau * Y))
        else:
            for i in range(n):
                Yi = Y.copy()
                for tau, w in zip(_GL_TAU, _GL_WEIGHT):
                    Yi[i] = tau * Y[i]
                    c[i, i, m] += w * np.asarray(f.df(t, rm, tm, Yi))[i, i]
                Yi[i] = 0.0
                gbar[i, m] = -np.asarray(f.f(t, rm, tm, Yi))[i]
    if not (np.isfinite(c).all() and np.isfinite(gbar).all()):
        raise QuadratureFailure("non-finite partial derivatives in linearization")
    if mode == "full":
        gbar[:] = 0.0
    return LinearizedSystem(c=c, gbar=SourceField(grid=grid, values=gbar),
                            mode=mode)


def with_coupling(coeffs: SystemCoefficients, c: np.ndarray) -> SystemCoefficients:
    """Copy of the coefficients with the coupling field replaced."""
    return SystemCoefficients(grid=coeffs.grid, n=coeffs.n, A=coeffs.A,
                              b=coeffs.b, c=c, beta=coeffs.beta, eta=coeffs.eta)
