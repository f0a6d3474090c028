"""Numerical evaluation of the two sides of the weighted observability bound.

Every weighted integral is accumulated in log space (exponent-shifted
summation): for realistic parameters exp(2*s*alpha) spans thousands of
orders of magnitude, so reports carry log-integrals and ratios are formed by
log-sum-exp, never by dividing underflowed floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import EmptyCorpus, WeightGridMismatch
from .geometry import Psi0Field, PolarGrid, WeightFields, eval_weights, gradient, make_weight_params
from .observe import ObservationSeries, log_norm_weighted_Sigma
from .pde import SourceField, StateField


def _log_integral_Q(log_density: np.ndarray, grid: PolarGrid) -> float:
    """log of the space-time integral of exp(log_density)."""
    w = grid.time_weights[:, None, None] * grid.quad_weights[None]
    a = log_density.reshape(-1)
    b = np.broadcast_to(w, log_density.shape).reshape(-1)
    if np.all(np.isneginf(a)):
        return -math.inf
    return float(logsumexp(a, b=b))


def _log_sq(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(values ** 2)


@dataclass
class CarlemanReport:
    """Both sides of the inequality for one solution at one (s, lambda).

    The five integrals are stored as natural logs; the value properties
    exponentiate and may underflow to 0 for strong weights, which is why the
    ratio is always derived from the log representation.
    """
    s: float
    lam: float
    log_lhs_interior: float
    log_lhs_boundary: float
    log_rhs_source: float
    log_rhs_obs: float

    @property
    def lhs_interior(self) -> float:
        return math.exp(self.log_lhs_interior) if self.log_lhs_interior > -math.inf else 0.0

    @property
    def lhs_boundary(self) -> float:
        return math.exp(self.log_lhs_boundary) if self.log_lhs_boundary > -math.inf else 0.0

    @property
    def rhs_source(self) -> float:
        return math.exp(self.log_rhs_source) if self.log_rhs_source > -math.inf else 0.0

    @property
    def rhs_obs(self) -> float:
        return math.exp(self.log_rhs_obs) if self.log_rhs_obs > -math.inf else 0.0

    @property
    def log_ratio(self) -> float:
        lhs = np.logaddexp(self.log_lhs_interior, self.log_lhs_boundary)
        rhs = np.logaddexp(self.log_rhs_source, self.log_rhs_obs)
        if rhs == -math.inf:
            return math.nan
        return float(lhs - rhs)

    @property
    def ratio_defined(self) -> bool:
        return np.logaddexp(self.log_rhs_source, self.log_rhs_obs) > -math.inf

    @property
    def ratio(self) -> float:
        lr = self.log_ratio
        if math.isnan(lr):
            return math.nan
        return math.exp(lr)


def eval_carleman_sides(y: StateField, gbar: SourceField,
                        zeta: ObservationSeries, weights: WeightFields,
                        s: float, lam: float,
                        alpha_shift: float = 0.0) -> CarlemanReport:
    """Quadrature of the four weighted integrals for one trajectory.

    The weights must have been built from the same grid and the same lambda;
    s is free because phi and alpha do not depend on it.
    """
    grid = weights.grid
    if not (y.grid.same_layout(grid) and gbar.grid.same_layout(grid)
            and zeta.grid.same_layout(grid)):
        raise WeightGridMismatch("trajectory and weights live on different grids")
    if not math.isclose(lam, weights.params.lam, rel_tol=1e-12):
        raise WeightGridMismatch(
            f"weights built for lambda={weights.params.lam}, requested {lam}")

    vals = y.values  # (n, n_t, n_r, n_theta)
    y2 = np.sum(vals ** 2, axis=0)
    grads = gradient(grid, vals)          # (2, n, n_t, n_r, n_theta)
    grad2 = np.sum(grads ** 2, axis=(0, 1))

    with np.errstate(divide="ignore"):
        log_y2 = np.log(y2)
        log_grad2 = np.log(grad2)
        log_g2 = np.log(np.sum(gbar.values ** 2, axis=0))

    term_grad = weights.log_weight(phi_power=1, s_power=1, lam_power=2,
                                   s=s, alpha_shift=alpha_shift) + log_grad2
    term_val = weights.log_weight(phi_power=3, s_power=3, lam_power=4,
                                  s=s, alpha_shift=alpha_shift) + log_y2
    log_lhs_interior = _log_integral_Q(np.logaddexp(term_grad, term_val), grid)

    log_y2_g0 = _log_sq(vals[:, :, 0, :])
    log_lhs_boundary = log_norm_weighted_Sigma(
        log_y2_g0, weights, s,
        phi_power=2, s_power=2, lam_power=2, boundary="gamma0")
    if alpha_shift != 0.0:
        # boundary helper has no shift argument; apply it explicitly
        log_lhs_boundary += 2.0 * s * alpha_shift

    log_rhs_source = _log_integral_Q(
        weights.log_weight(s=s, alpha_shift=alpha_shift) + log_g2, grid)

    log_rhs_obs = log_norm_weighted_Sigma(
        _log_sq(zeta.values), weights, s,
        phi_power=3, s_power=3, lam_power=3, boundary="gamma1")
    if alpha_shift != 0.0:
        log_rhs_obs += 2.0 * s * alpha_shift

    return CarlemanReport(s=s, lam=lam,
                          log_lhs_interior=log_lhs_interior,
                          log_lhs_boundary=log_lhs_boundary,
                          log_rhs_source=log_rhs_source,
                          log_rhs_obs=log_rhs_obs)


@dataclass
class ScanResult:
    """Admissibility table of empirical constants over the (s, lambda) grid."""
    s_grid: np.ndarray
    lambda_grid: np.ndarray
    log_ratio_table: np.ndarray   # (n_s, n_lambda), max over corpus; nan if undefined
    s_star: float
    lambda_star: float
    stabilized: bool
    C_hat: float
    n_corpus: int

    @property
    def ratio_table(self) -> np.ndarray:
        with np.errstate(over="ignore"):
            return np.exp(self.log_ratio_table)

    def rows(self):
        """(s, lambda, C_hat, n_corpus) rows for delimited output."""
        out = []
        tab = self.ratio_table
        for i, s in enumerate(self.s_grid):
            for j, lam in enumerate(self.lambda_grid):
                out.append((float(s), float(lam), float(tab[i, j]), self.n_corpus))
        return out


def scan_parameters(corpus, s_grid, lambda_grid, psi0: Psi0Field,
                    grid: PolarGrid, mu: float = 1.0, margin: float = 0.0,
                    stab_tol: float = 0.10) -> ScanResult:
    """Max corpus ratio per (s, lambda) plus the empirical stabilization region.

    The tabulated constant typically rises at small parameters and then
    decays monotonically; the admissible range s >= s0, lambda >= lambda0 is
    detected as the largest lower-right submatrix in which the constant never
    grows by more than stab_tol along either grid direction, so a single
    C_hat (its max over the region) covers every cell in it.
    """
    corpus = list(corpus)
    if not corpus:
        raise EmptyCorpus("parameter scan needs at least one (y, gbar, zeta) triple")
    s_grid = np.asarray(s_grid, dtype=float)
    lambda_grid = np.asarray(lambda_grid, dtype=float)
    if np.any(np.diff(s_grid) <= 0.0) or np.any(np.diff(lambda_grid) <= 0.0):
        raise EmptyCorpus("scan grids must be strictly ascending")

    table = np.full((len(s_grid), len(lambda_grid)), np.nan)
    for j, lam in enumerate(lambda_grid):
        params = make_weight_params(psi0, lam=float(lam), s=float(s_grid[0]),
                                    mu=mu, margin=margin)
        weights = eval_weights(psi0, params, grid)
        for i, s in enumerate(s_grid):
            logs = []
            for (y, gbar, zeta) in corpus:
                rep = eval_carleman_sides(y, gbar, zeta, weights,
                                          s=float(s), lam=float(lam))
                if rep.ratio_defined:
                    logs.append(rep.log_ratio)
            if logs:
                table[i, j] = max(logs)

    # signed adjacent-cell relative growth along each grid direction
    with np.errstate(invalid="ignore"):
        d_s = np.expm1(np.diff(table, axis=0))
        d_lam = np.expm1(np.diff(table, axis=1))

    def region_ok(i0: int, j0: int) -> bool:
        # no adjacent pair inside the lower-right submatrix grows past tol
        blk_s = d_s[i0:, j0:]
        blk_l = d_lam[i0:, j0:]
        if np.isnan(blk_s).any() or np.isnan(blk_l).any():
            return False
        return bool((blk_s <= stab_tol).all() and (blk_l <= stab_tol).all())

    region = None
    best_area = 0
    for i in range(table.shape[0] - 1):
        for j in range(table.shape[1] - 1):
            area = (table.shape[0] - i) * (table.shape[1] - j)
            if area > best_area and region_ok(i, j):
                region, best_area = (i, j), area
    stabilized = region is not None
    if region is None:
        region = (table.shape[0] - 1, table.shape[1] - 1)
    sub = table[region[0]:, region[1]:]
    c_hat = float(np.exp(np.nanmax(sub))) if not np.isnan(sub).all() else math.nan
    return ScanResult(s_grid=s_grid, lambda_grid=lambda_grid,
                      log_ratio_table=table,
                      s_star=float(s_grid[region[0]]),
                      lambda_star=float(lambda_grid[region[1]]),
                      stabilized=stabilized, C_hat=c_hat, n_corpus=len(corpus))
