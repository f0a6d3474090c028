"""Annular grid, level function construction and Carleman weight fields.

The domain is the 2D annulus r0 < r < r1 discretized on a tensor polar grid
(uniform in r, periodic uniform in theta) with a uniform time axis on [0, T].
The inner circle is the observation-free boundary piece Gamma0, the outer
circle Gamma1 carries the observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import RegularGridInterpolator

from .errors import (
    DegenerateResolution,
    FlowEscape,
    NoAdmissibleMu,
    NonPositiveRadius,
    NonSymmetricDiffusion,
    OverflowGuard,
    VanishingGradient,
)

# Exponent budget for float64; anything beyond this underflows/overflows.
_EXP_MAX = 705.0


# ---------------------------------------------------------------------------
# Grid
# ---------------------------------------------------------------------------

@dataclass
class PolarGrid:
    r0: float
    r1: float
    n_r: int
    n_theta: int
    T: float
    n_t: int
    r: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    t: np.ndarray = field(repr=False)
    quad_weights: np.ndarray = field(repr=False)
    gamma0_nodes: np.ndarray = field(repr=False)
    gamma1_nodes: np.ndarray = field(repr=False)

    @property
    def dr(self) -> float:
        return (self.r1 - self.r0) / (self.n_r - 1)

    @property
    def dtheta(self) -> float:
        return 2.0 * math.pi / self.n_theta

    @property
    def dt(self) -> float:
        return self.T / (self.n_t - 1)

    @property
    def n_nodes(self) -> int:
        return self.n_r * self.n_theta

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_r, self.n_theta)

    @property
    def rmesh(self) -> np.ndarray:
        return np.broadcast_to(self.r[:, None], self.shape)

    @property
    def thmesh(self) -> np.ndarray:
        return np.broadcast_to(self.theta[None, :], self.shape)

    @property
    def time_weights(self) -> np.ndarray:
        """Trapezoidal weights on the time axis."""
        w = np.full(self.n_t, self.dt)
        w[0] = w[-1] = 0.5 * self.dt
        return w

    def arc_weights(self, boundary: str) -> np.ndarray:
        """Arc-length weights r*dtheta on one boundary circle."""
        radius = self.r0 if boundary == "gamma0" else self.r1
        return np.full(self.n_theta, radius * self.dtheta)

    def same_layout(self, other: "PolarGrid") -> bool:
        return (
            self.shape == other.shape
            and self.n_t == other.n_t
            and math.isclose(self.r0, other.r0)
            and math.isclose(self.r1, other.r1)
            and math.isclose(self.T, other.T)
        )


def build_polar_grid(r0: float, r1: float, n_r: int, n_theta: int,
                     T: float, n_t: int) -> PolarGrid:
    if r0 <= 0.0:
        raise NonPositiveRadius(f"inner radius must be positive, got {r0}")
    if r1 <= r0:
        raise NonPositiveRadius(f"need r1 > r0, got r0={r0}, r1={r1}")
    if n_r < 3 or n_theta < 4 or n_t < 3:
        raise DegenerateResolution(
            f"need n_r >= 3, n_theta >= 4, n_t >= 3, got ({n_r}, {n_theta}, {n_t})")
    if T <= 0.0:
        raise DegenerateResolution(f"time horizon must be positive, got {T}")

    r = np.linspace(r0, r1, n_r)
    theta = np.arange(n_theta) * (2.0 * math.pi / n_theta)
    t = np.linspace(0.0, T, n_t)

    # Trapezoid in r with the Jacobian r, exact for the linear integrand r,
    # so the total weight reproduces the annulus area pi*(r1^2 - r0^2).
    dr = (r1 - r0) / (n_r - 1)
    wr = np.full(n_r, dr) * r
    wr[0] *= 0.5
    wr[-1] *= 0.5
    quad = wr[:, None] * np.full(n_theta, 2.0 * math.pi / n_theta)[None, :]

    flat = np.arange(n_r * n_theta).reshape(n_r, n_theta)
    return PolarGrid(r0=r0, r1=r1, n_r=n_r, n_theta=n_theta, T=T, n_t=n_t,
                     r=r, theta=theta, t=t, quad_weights=quad,
                     gamma0_nodes=flat[0].copy(), gamma1_nodes=flat[-1].copy())


# ---------------------------------------------------------------------------
# Discrete differential operators on spatial fields (shape (n_r, n_theta))
# ---------------------------------------------------------------------------

def radial_derivative(grid: PolarGrid, u: np.ndarray) -> np.ndarray:
    """d/dr, second order: central inside, one-sided on the two circles."""
    du = np.empty_like(u)
    dr = grid.dr
    du[..., 1:-1, :] = (u[..., 2:, :] - u[..., :-2, :]) / (2.0 * dr)
    du[..., 0, :] = (-3.0 * u[..., 0, :] + 4.0 * u[..., 1, :] - u[..., 2, :]) / (2.0 * dr)
    du[..., -1, :] = (3.0 * u[..., -1, :] - 4.0 * u[..., -2, :] + u[..., -3, :]) / (2.0 * dr)
    return du


def angular_derivative(grid: PolarGrid, u: np.ndarray) -> np.ndarray:
    """d/dtheta, periodic central difference."""
    return (np.roll(u, -1, axis=-1) - np.roll(u, 1, axis=-1)) / (2.0 * grid.dtheta)


def gradient(grid: PolarGrid, u: np.ndarray) -> np.ndarray:
    """Gradient in the polar orthonormal frame: (d/dr, (1/r) d/dtheta)."""
    gr = radial_derivative(grid, u)
    gt = angular_derivative(grid, u) / grid.rmesh
    return np.stack([gr, gt])


def _as_diffusion_arrays(A, grid: PolarGrid):
    """Normalize a diffusion input to polar-frame component arrays.

    Accepts None / scalar (isotropic), a constant 2x2 matrix, a full
    (n_r, n_theta, 2, 2) field, or any object exposing arr/att/art arrays.
    """
    shape = grid.shape
    if A is None:
        one = np.ones(shape)
        return one, one.copy(), np.zeros(shape)
    if np.isscalar(A):
        a = float(A)
        if a <= 0.0:
            raise NonSymmetricDiffusion(f"isotropic diffusion must be positive, got {a}")
        return np.full(shape, a), np.full(shape, a), np.zeros(shape)
    if hasattr(A, "arr"):
        arr = np.broadcast_to(A.arr, shape).astype(float)
        att = np.broadcast_to(A.att, shape).astype(float)
        art = np.broadcast_to(A.art, shape).astype(float)
    else:
        mat = np.asarray(A, dtype=float)
        if mat.shape == (2, 2):
            mat = np.broadcast_to(mat, shape + (2, 2))
        if mat.shape != shape + (2, 2):
            raise NonSymmetricDiffusion(
                f"diffusion field has shape {mat.shape}, expected {shape + (2, 2)}")
        if not np.allclose(mat[..., 0, 1], mat[..., 1, 0], atol=1e-12):
            raise NonSymmetricDiffusion("diffusion matrix field is not symmetric")
        arr, att, art = mat[..., 0, 0], mat[..., 1, 1], mat[..., 0, 1]
    # SPD check via the 2x2 eigenvalue formula
    lam_min = 0.5 * (arr + att) - np.sqrt(0.25 * (arr - att) ** 2 + art ** 2)
    if np.min(lam_min) <= 0.0:
        raise NonSymmetricDiffusion("diffusion matrix field is not positive definite")
    return np.asarray(arr), np.asarray(att), np.asarray(art)


def laplacian_A(grid: PolarGrid, A, u: np.ndarray) -> np.ndarray:
    """Discrete div(A grad u) at the interior radial rows.

    Flux form in r and theta with centered mixed terms; returns an array of
    shape (n_r - 2, n_theta) for rows i = 1 .. n_r - 2.
    """
    arr, att, art = _as_diffusion_arrays(A, grid)
    dr, dth = grid.dr, grid.dtheta
    r = grid.r
    ri = r[1:-1][:, None]

    # radial flux (1/r) d/dr (r * arr * u_r)
    rh = 0.5 * (r[:-1] + r[1:])[:, None]
    arr_h = 0.5 * (arr[:-1, :] + arr[1:, :])
    flux_r = rh * arr_h * (u[1:, :] - u[:-1, :]) / dr
    lap = (flux_r[1:, :] - flux_r[:-1, :]) / (dr * ri)

    # angular flux (1/r^2) d/dth (att * u_th)
    att_h = 0.5 * (att + np.roll(att, -1, axis=1))
    dth_u = (np.roll(u, -1, axis=1) - u) / dth
    flux_t = att_h * dth_u
    lap += (flux_t - np.roll(flux_t, 1, axis=1))[1:-1, :] / (dth * ri ** 2)

    if np.any(art != 0.0):
        u_th = angular_derivative(grid, u)
        u_r = radial_derivative(grid, u)
        # (1/r) d/dr (art * u_th), centered
        m1 = art * u_th
        lap += (m1[2:, :] - m1[:-2, :]) / (2.0 * dr * ri)
        # (1/r) d/dth (art * u_r), centered
        m2 = art * u_r
        lap += (np.roll(m2, -1, axis=1) - np.roll(m2, 1, axis=1))[1:-1, :] / (2.0 * dth * ri)

    return lap


# ---------------------------------------------------------------------------
# Level function psi0
# ---------------------------------------------------------------------------

@dataclass
class Psi0Field:
    """Level function on the annulus: constant traces, nonvanishing gradient."""
    grid: PolarGrid
    values: np.ndarray
    gradient: np.ndarray        # shape (2, n_r, n_theta), polar frame
    k0: float
    k1: float
    grad_min: float

    @classmethod
    def from_values(cls, grid: PolarGrid, values: np.ndarray,
                    trace_tol: float = 1e-12) -> "Psi0Field":
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape:
            raise VanishingGradient(
                f"values shape {values.shape} does not match grid {grid.shape}")
        grad = gradient(grid, values)
        gnorm = np.sqrt(grad[0] ** 2 + grad[1] ** 2)
        fld = cls(grid=grid, values=values, gradient=grad,
                  k0=float(values[0].min()), k1=float(values[-1].max()),
                  grad_min=float(gnorm.min()))
        fld.validate(trace_tol=trace_tol)
        return fld

    def validate(self, trace_tol: float = 1e-12) -> None:
        if np.max(np.abs(self.values[0] - self.k0)) > trace_tol:
            raise VanishingGradient(
                f"trace on Gamma0 not constant within {trace_tol}")
        if np.max(np.abs(self.values[-1] - self.k1)) > trace_tol:
            raise VanishingGradient(
                f"trace on Gamma1 not constant within {trace_tol}")
        if not self.k0 < self.k1:
            raise VanishingGradient(f"need k0 < k1, got {self.k0}, {self.k1}")
        if self.grad_min <= 0.0:
            raise VanishingGradient("discrete gradient vanishes somewhere")


def construct_psi0_radial(grid: PolarGrid) -> Psi0Field:
    """The canonical level function psi0(r, theta) = r."""
    values = np.tile(grid.r[:, None], (1, grid.n_theta))
    grad = np.stack([np.ones(grid.shape), np.zeros(grid.shape)])
    return Psi0Field(grid=grid, values=values, gradient=grad,
                     k0=grid.r0, k1=grid.r1, grad_min=1.0)


def construct_psi0_flow(grid: PolarGrid, seed, grad_tol: float = 1e-6,
                        trace_tol: float = 1e-3, rtol: float = 1e-10,
                        atol: float = 1e-12) -> Psi0Field:
    """Rebuild a level function by integrating the normalized gradient flow.

    Trajectories of d/ds x = grad(psi)/|grad(psi)|^2 advance psi by exactly s,
    so running the flow backwards from each node until it hits the inner
    circle assigns the node the arc parameter of its level set. Values are
    anchored so the inner trace equals the seed's inner trace.
    """
    seed_values = seed.values if isinstance(seed, Psi0Field) else np.asarray(seed, float)
    if seed_values.shape != grid.shape:
        raise VanishingGradient("seed shape does not match grid")
    grad = gradient(grid, seed_values)
    gnorm = np.sqrt(grad[0] ** 2 + grad[1] ** 2)
    if gnorm.min() <= grad_tol:
        raise VanishingGradient(
            f"seed gradient minimum {gnorm.min():.3e} below tolerance {grad_tol:.1e}")

    k0_seed = float(seed_values[0].min())
    k1_seed = float(seed_values[-1].max())
    s_max = 4.0 * (k1_seed - k0_seed) / max(gnorm.min(), grad_tol) + 1.0

    # periodic padding in theta for interpolation
    th_ext = np.append(grid.theta, 2.0 * math.pi)
    pad = lambda a: np.concatenate([a, a[:, :1]], axis=1)
    interp_r = RegularGridInterpolator((grid.r, th_ext), pad(grad[0]),
                                       bounds_error=False, fill_value=None)
    interp_t = RegularGridInterpolator((grid.r, th_ext), pad(grad[1]),
                                       bounds_error=False, fill_value=None)

    def rhs(_s, x):
        rr = x[0]
        th = x[1] % (2.0 * math.pi)
        pr = float(interp_r((rr, th)))
        pt = float(interp_t((rr, th)))
        g2 = pr * pr + pt * pt
        if g2 < grad_tol * grad_tol:
            raise VanishingGradient("gradient vanished along a flow trajectory")
        return (-pr / g2, -pt / (g2 * rr))

    def hit_inner(_s, x):
        return x[0] - grid.r0
    hit_inner.terminal = True
    hit_inner.direction = -1.0

    def escaped(_s, x):
        return x[0] - (grid.r1 + 2.0 * grid.dr)
    escaped.terminal = True
    escaped.direction = 1.0

    values = np.empty(grid.shape)
    values[0, :] = k0_seed
    for i in range(1, grid.n_r):
        for j in range(grid.n_theta):
            sol = solve_ivp(rhs, (0.0, s_max), [grid.r[i], grid.theta[j]],
                            events=(hit_inner, escaped), rtol=rtol, atol=atol,
                            max_step=0.25 * (k1_seed - k0_seed))
            if sol.t_events[1].size:
                raise FlowEscape(
                    f"trajectory from node ({i},{j}) left the annulus")
            if not sol.t_events[0].size:
                raise FlowEscape(
                    f"trajectory from node ({i},{j}) never reached Gamma0")
            values[i, j] = k0_seed + sol.t_events[0][0]

    return Psi0Field.from_values(grid, values, trace_tol=trace_tol)


def exponentiate_for_subharmonicity(psi0: Psi0Field, A, mu_grid) -> tuple[Psi0Field, float]:
    """Replace psi0 by a rescaled exp(mu*psi0) that is discretely A-subharmonic.

    Tries the candidate exponents in ascending order and keeps the smallest mu
    for which div(A grad exp(mu*psi0)) > 0 at every interior node. The result
    is mapped affinely back onto [k0, k1], which preserves the sign of the
    discrete operator exactly.
    """
    grid = psi0.grid
    mu_grid = list(mu_grid)
    if sorted(mu_grid) != mu_grid:
        mu_grid = sorted(mu_grid)
    for mu in mu_grid:
        if mu <= 0.0:
            continue
        w = np.exp(mu * psi0.values)
        lap = laplacian_A(grid, A, w)
        if np.min(lap) > 0.0:
            lo, hi = math.exp(mu * psi0.k0), math.exp(mu * psi0.k1)
            scale = (psi0.k1 - psi0.k0) / (hi - lo)
            rescaled = psi0.k0 + scale * (w - lo)
            out = Psi0Field.from_values(grid, rescaled)
            if np.min(laplacian_A(grid, A, out.values)) <= 0.0:
                continue  # affine map degraded the sign in floats; try larger mu
            return out, float(mu)
    raise NoAdmissibleMu(
        f"no exponent in {mu_grid} makes psi0 discretely A-subharmonic")


# ---------------------------------------------------------------------------
# Shift and weight parameters
# ---------------------------------------------------------------------------

@dataclass
class ShiftChoice:
    K: float
    psi_sup_norm: float
    ratio: float


def choose_shift_K(psi0: Psi0Field, margin: float = 0.0,
                   enforce_tilde_ratio: bool = False) -> ShiftChoice:
    """Smallest shift K with (k1 + K)/(k0 + K) <= 8/7.

    With enforce_tilde_ratio the reflected function 2*(k0 + K) - psi must
    satisfy the same sup/inf bound, which tightens the constraint to
    K >= 8*k1 - 9*k0.
    """
    if margin < 0.0:
        raise DegenerateResolution(f"margin must be nonnegative, got {margin}")
    k0, k1 = psi0.k0, psi0.k1
    K = max(0.0, 7.0 * k1 - 8.0 * k0)
    if enforce_tilde_ratio:
        K = max(K, 8.0 * k1 - 9.0 * k0)
    K += margin
    return ShiftChoice(K=K, psi_sup_norm=k1 + K, ratio=(k1 + K) / (k0 + K))


@dataclass
class WeightParams:
    lam: float
    s: float
    K: float
    mu: float
    psi_sup_norm: float

    def validate(self, k0: float, k1: float) -> None:
        if self.lam <= 0.0 or self.s <= 0.0 or self.K < 0.0 or self.mu <= 0.0:
            raise DegenerateResolution("weight parameters out of range")
        if (k1 + self.K) / (k0 + self.K) > 8.0 / 7.0 + 1e-12:
            raise DegenerateResolution(
                "shift K violates the 8/7 sup/inf ratio condition")
        if not math.isclose(self.psi_sup_norm, k1 + self.K, rel_tol=1e-12):
            raise DegenerateResolution("psi_sup_norm inconsistent with k1 + K")


def make_weight_params(psi0: Psi0Field, lam: float, s: float, mu: float = 1.0,
                       margin: float = 0.0,
                       enforce_tilde_ratio: bool = False) -> WeightParams:
    shift = choose_shift_K(psi0, margin=margin,
                           enforce_tilde_ratio=enforce_tilde_ratio)
    params = WeightParams(lam=lam, s=s, K=shift.K, mu=mu,
                          psi_sup_norm=shift.psi_sup_norm)
    params.validate(psi0.k0, psi0.k1)
    return params


# ---------------------------------------------------------------------------
# Weight fields
# ---------------------------------------------------------------------------

@dataclass
class WeightFields:
    """Carleman weights sampled on the space-time grid.

    phi and alpha blow up (to +inf / -inf) on the time slices t = 0 and t = T;
    every weighted product multiplying exp(2*s*alpha) is defined as 0 there,
    which is the true limit. log_phi carries the overflow-safe representation
    used for log-space quadrature.
    """
    grid: PolarGrid
    psi0: Psi0Field
    params: WeightParams
    psi: np.ndarray
    psi_tilde: np.ndarray
    phi: np.ndarray
    phi_tilde: np.ndarray
    alpha: np.ndarray
    alpha_tilde: np.ndarray
    log_phi: np.ndarray
    log_phi_tilde: np.ndarray

    def log_weight(self, phi_power: float = 0.0, s_power: float = 0.0,
                   lam_power: float = 0.0, tilde: bool = False,
                   alpha_shift: float = 0.0, s: float | None = None) -> np.ndarray:
        """log of s^a * lam^b * phi^p * exp(2 s (alpha + alpha_shift)).

        Endpoint slices are -inf, consistent with the vanishing-limit
        convention. phi and alpha do not depend on the scale parameter, so a
        different s than the one stored in params may be supplied.
        """
        s = self.params.s if s is None else s
        lam = self.params.lam
        lphi = self.log_phi_tilde if tilde else self.log_phi
        alph = self.alpha_tilde if tilde else self.alpha
        out = np.full(alph.shape, -np.inf)
        inner = slice(1, -1)
        out[inner] = (s_power * math.log(s) + lam_power * math.log(lam)
                      + phi_power * lphi[inner]
                      + 2.0 * s * (alph[inner] + alpha_shift))
        return out

    def weighted_product(self, phi_power: float = 0.0, s_power: float = 0.0,
                         lam_power: float = 0.0, tilde: bool = False) -> np.ndarray:
        """s^a * lam^b * phi^p * exp(2 s alpha), zero on the endpoint slices."""
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(self.log_weight(phi_power, s_power, lam_power, tilde))


def eval_weights(psi0: Psi0Field, params: WeightParams, grid: PolarGrid) -> WeightFields:
    """Build psi, the reflected psi, and the four time-singular weights.

    psi = psi0 + K; the reflected function mirrors psi through its Gamma0
    value so both agree there (matching the boundary identities of the
    continuous construction for any k0, not only k0 = 0).
    """
    if psi0.grid.shape != grid.shape:
        raise DegenerateResolution("psi0 grid does not match target grid")
    params.validate(psi0.k0, psi0.k1)
    lam, s = params.lam, params.s

    psi = psi0.values + params.K
    psi_tilde = 2.0 * (psi0.k0 + params.K) - psi

    big_exp = 1.5 * lam * params.psi_sup_norm
    tau = grid.t * (grid.T - grid.t)          # zero at the endpoints
    log_tau = np.full(grid.n_t, np.inf)
    log_tau[1:-1] = np.log(tau[1:-1])
    if big_exp - np.min(log_tau[1:-1]) > _EXP_MAX or lam * params.psi_sup_norm - np.min(log_tau[1:-1]) > _EXP_MAX:
        raise OverflowGuard(
            f"exp(1.5*lam*||psi||) = exp({big_exp:.1f}) leaves the float64 "
            "range at this time resolution; lower lam")

    def build(psi_arr):
        lam_psi = lam * psi_arr                              # (n_r, n_theta)
        log_phi = lam_psi[None] - log_tau[:, None, None]     # (n_t, n_r, n_theta)
        phi = np.full(log_phi.shape, np.inf)
        phi[1:-1] = np.exp(log_phi[1:-1])
        # alpha = -(exp(big) - exp(lam*psi)) / tau, evaluated stably
        log_neg = big_exp + np.log1p(-np.exp(lam_psi - big_exp))
        alpha = np.full(log_phi.shape, -np.inf)
        alpha[1:-1] = -np.exp(log_neg[None] - log_tau[1:-1, None, None])
        return phi, alpha, log_phi

    phi, alpha, log_phi = build(psi)
    phi_t, alpha_t, log_phi_t = build(psi_tilde)
    return WeightFields(grid=grid, psi0=psi0, params=params,
                        psi=psi, psi_tilde=psi_tilde,
                        phi=phi, phi_tilde=phi_t,
                        alpha=alpha, alpha_tilde=alpha_t,
                        log_phi=log_phi, log_phi_tilde=log_phi_t)


# ---------------------------------------------------------------------------
# Time-derivative bounds of the weights
# ---------------------------------------------------------------------------

@dataclass
class WeightBoundReport:
    phi_t_ratio: float
    alpha_t_ratio: float
    alpha_tt_ratio: float
    refined_phi_t_ratio: float
    refined_alpha_t_ratio: float
    refined_alpha_tt_ratio: float

    @property
    def stable(self) -> bool:
        pairs = [(self.phi_t_ratio, self.refined_phi_t_ratio),
                 (self.alpha_t_ratio, self.refined_alpha_t_ratio),
                 (self.alpha_tt_ratio, self.refined_alpha_tt_ratio)]
        return all(b <= 2.0 * a and a <= 2.0 * b for a, b in pairs)


def _time_bound_ratios(psi: np.ndarray, lam: float, sup_norm: float,
                       T: float, n_t: int) -> tuple[float, float, float]:
    """Discrete maxima of |phi_t|/phi^2, |alpha_t|/phi^2, |alpha_tt|/phi^3.

    phi and alpha factor exactly into a spatial part exp(lam*psi) and the
    time profile 1/(t(T-t)); the spatial factor cancels through the discrete
    time differences, which keeps the evaluation inside float range for any
    admissible lam.
    """
    t = np.linspace(0.0, T, n_t)
    dt = T / (n_t - 1)
    p = 1.0 / (t[1:-1] * (T - t[1:-1]))          # interior time profile
    if n_t < 5:
        raise DegenerateResolution("need n_t >= 5 for central time differences")
    p_t = (p[2:] - p[:-2]) / (2.0 * dt)          # at interior indices 2..n_t-3
    p_tt = (p[2:] - 2.0 * p[1:-1] + p[:-2]) / dt ** 2
    pm = p[1:-1]

    lam_psi = lam * psi                          # spatial, (n_r, n_theta)
    big_exp = 1.5 * lam * sup_norm
    log_gap = big_exp + np.log1p(-np.exp(lam_psi - big_exp))   # log(B - E)

    with np.errstate(divide="ignore"):          # p_t vanishes at T/2
        # |phi_t| / phi^2 = |p_t| / (p^2 * E)
        r1 = np.exp(np.log(np.abs(p_t) / pm ** 2)[:, None, None] - lam_psi[None])
        # |alpha_t| / phi^2 = (B - E) |p_t| / (p^2 * E^2)
        r2 = np.exp(np.log(np.abs(p_t) / pm ** 2)[:, None, None]
                    + (log_gap - 2.0 * lam_psi)[None])
        # |alpha_tt| / phi^3 = (B - E) |p_tt| / (p^3 * E^3)
        r3 = np.exp(np.log(np.abs(p_tt) / pm ** 3)[:, None, None]
                    + (log_gap - 3.0 * lam_psi)[None])
    return float(r1.max()), float(r2.max()), float(r3.max())


def check_weight_time_bounds(weights: WeightFields) -> WeightBoundReport:
    """Estimate the constants in the weight time-derivative bounds.

    Evaluates the three discrete ratio maxima on the stored time grid and on
    a once-refined time grid; agreement within a factor of two is the
    stability certificate exposed via the report.
    """
    grid, params = weights.grid, weights.params
    base = _time_bound_ratios(weights.psi, params.lam, params.psi_sup_norm,
                              grid.T, grid.n_t)
    fine = _time_bound_ratios(weights.psi, params.lam, params.psi_sup_norm,
                              grid.T, 2 * (grid.n_t - 1) + 1)
    if not all(map(math.isfinite, base + fine)):
        raise OverflowGuard("non-finite weight time-derivative ratio")
    return WeightBoundReport(*base, *fine)
