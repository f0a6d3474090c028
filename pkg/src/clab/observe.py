"""Boundary observation operator on the outer circle and its inversion.

The observation is the nodewise combination gamma * conormal + delta * trace
on Gamma1. Together with the homogeneous boundary condition
beta * conormal + eta * trace = 0 it forms a 2x2 system per node whose
determinant gamma*eta - beta*delta >= epsilon makes trace and conormal
recoverable from the measurement alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import CompatibilityViolated, ShapeMismatch, SingularRecovery
from .geometry import PolarGrid, WeightFields, angular_derivative
from .pde import StateField, SystemCoefficients


@dataclass
class ObservationSpec:
    """Observation coefficients on Gamma1, per component and theta node."""
    gamma: np.ndarray   # (n, n_theta)
    delta: np.ndarray   # (n, n_theta)
    epsilon: float

    @classmethod
    def broadcast(cls, grid: PolarGrid, n: int, gamma=1.0, delta=0.0,
                  epsilon: float = 0.5) -> "ObservationSpec":
        shp = (n, grid.n_theta)
        return cls(gamma=np.broadcast_to(np.asarray(gamma, float), shp).copy(),
                   delta=np.broadcast_to(np.asarray(delta, float), shp).copy(),
                   epsilon=float(epsilon))


@dataclass
class BoundaryTrace:
    """Trace and conormal derivative of a trajectory on Gamma1."""
    grid: PolarGrid
    trace: np.ndarray     # (n, n_t, n_theta)
    conormal: np.ndarray  # (n, n_t, n_theta)


@dataclass
class ObservationSeries:
    """Measured boundary series zeta on the outer lateral boundary."""
    grid: PolarGrid
    values: np.ndarray    # (n, n_t, n_theta)

    @property
    def n(self) -> int:
        return self.values.shape[0]


def check_compatibility(spec: ObservationSpec,
                        coeffs: SystemCoefficients) -> float:
    """Minimum of gamma*eta - beta*delta over Gamma1 nodes and components."""
    beta1 = coeffs.beta[:, 1, :]
    eta1 = coeffs.eta[:, 1, :]
    det = spec.gamma * eta1 - beta1 * spec.delta
    min_det = float(det.min())
    if min_det < spec.epsilon:
        i, j = np.unravel_index(np.argmin(det), det.shape)
        raise CompatibilityViolated(
            f"determinant {min_det:.3e} < epsilon {spec.epsilon:g} at "
            f"component {i}, theta node {j}", component=int(i), node=int(j))
    return min_det


def extract_trace_and_conormal(y: StateField, coeffs: SystemCoefficients,
                               grid: PolarGrid) -> BoundaryTrace:
    """Restrict the trajectory to Gamma1 and evaluate the conormal flux.

    The radial derivative uses the one-sided second-order three-node stencil;
    the tangential part enters through the off-diagonal diffusion entry.
    """
    if not y.grid.same_layout(grid):
        raise ShapeMismatch("state grid does not match")
    dr = grid.dr
    vals = y.values                       # (n, n_t, n_r, n_theta)
    trace = vals[:, :, -1, :].copy()
    u_r = (3.0 * vals[:, :, -1, :] - 4.0 * vals[:, :, -2, :]
           + vals[:, :, -3, :]) / (2.0 * dr)
    conormal = np.empty_like(trace)
    for i in range(y.n):
        A = coeffs.A[i]
        conormal[i] = A.arr[-1, :][None, :] * u_r[i]
        if np.any(A.art[-1, :] != 0.0):
            u_th = angular_derivative(grid, vals[i, :, -1, :])
            conormal[i] += A.art[-1, :][None, :] * u_th / grid.r1
    return BoundaryTrace(grid=grid, trace=trace, conormal=conormal)


def apply_observation(spec: ObservationSpec, trace: BoundaryTrace) -> ObservationSeries:
    """zeta = gamma * conormal + delta * trace, nodewise on Gamma1."""
    zeta = (spec.gamma[:, None, :] * trace.conormal
            + spec.delta[:, None, :] * trace.trace)
    return ObservationSeries(grid=trace.grid, values=zeta)


@dataclass
class RecoveredTrace:
    trace: np.ndarray
    conormal: np.ndarray
    K_node: np.ndarray   # (n, n_theta)
    K_max: float


def recover_trace_from_observation(zeta: ObservationSeries, spec: ObservationSpec,
                                   coeffs: SystemCoefficients) -> RecoveredTrace:
    """Invert {beta*conormal + eta*trace = 0, gamma*conormal + delta*trace = zeta}.

    Also returns the nodewise constant (|beta| + |eta|)/det realizing the
    pointwise bound |trace| + |conormal| <= K * |zeta|.
    """
    beta1 = coeffs.beta[:, 1, :]
    eta1 = coeffs.eta[:, 1, :]
    det = spec.gamma * eta1 - beta1 * spec.delta
    if float(det.min()) < spec.epsilon:
        raise SingularRecovery(
            f"determinant {det.min():.3e} below epsilon {spec.epsilon:g}")
    z = zeta.values
    trace = -beta1[:, None, :] * z / det[:, None, :]
    conormal = eta1[:, None, :] * z / det[:, None, :]
    K_node = (np.abs(beta1) + np.abs(eta1)) / det
    return RecoveredTrace(trace=trace, conormal=conormal, K_node=K_node,
                          K_max=float(K_node.max()))


def norm_L2_Sigma1(series: ObservationSeries) -> float:
    """Unweighted L2 norm over the outer lateral boundary (0,T) x Gamma1."""
    grid = series.grid
    wa = grid.arc_weights("gamma1")
    wt = grid.time_weights
    per_t = series.values ** 2 @ wa       # (n, n_t)
    return float(np.sqrt(np.sum(per_t * wt[None, :])))


def log_norm_weighted_Sigma(series_sq_log: np.ndarray, weights: WeightFields,
                            s: float, phi_power: float, s_power: float,
                            lam_power: float, boundary: str) -> float:
    """log of the weighted boundary integral, exponent-shifted for safety.

    series_sq_log is log(|series|^2) with -inf at zeros, shape (n, n_t,
    n_theta).
    """
    grid = weights.grid
    ring = 0 if boundary == "gamma0" else -1
    lw = weights.log_weight(phi_power=phi_power, s_power=s_power,
                            lam_power=lam_power, s=s)[:, ring, :]  # (n_t, n_theta)
    wa = grid.arc_weights(boundary)
    wt = grid.time_weights
    w = wt[:, None] * wa[None, :]
    a = series_sq_log + lw[None, :, :]
    mask = w > 0.0
    return float(logsumexp(a[:, mask], b=np.broadcast_to(w[mask], a[:, mask].shape)))


def norm_weighted_Sigma(series: ObservationSeries, weights: WeightFields,
                        s: float, phi_power: float = 3.0, s_power: float = 3.0,
                        lam_power: float = 3.0, boundary: str = "gamma1") -> float:
    """Weighted squared boundary norm; may underflow to 0 for strong weights."""
    with np.errstate(divide="ignore"):
        sq_log = np.log(series.values ** 2)
    val = log_norm_weighted_Sigma(sq_log, weights, s, phi_power, s_power,
                                  lam_power, boundary)
    with np.errstate(over="ignore", under="ignore"):
        return float(np.exp(val))
