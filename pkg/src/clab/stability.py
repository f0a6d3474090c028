"""Empirical estimation of the source-to-observation stability constant.

Sources are drawn from the anti-concentration class G_k (nonnegative with
L2 norm at most k times the L1 norm); each sample is pushed through a forward
solve and the outer-boundary observation, and the ratio source-norm over
observation-norm is tabulated. Samplers are parameter first: the analytic
parameters are drawn once and stored on the source, so the same member of
G_k can be re-evaluated on any grid for refinement studies.
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

from .errors import ClassEmpty, ProjectionFailure, RejectionExhausted, ShapeMismatch, ZeroObservation
from .geometry import PolarGrid
from .observe import (ObservationSeries, ObservationSpec, apply_observation,
                      extract_trace_and_conormal, norm_L2_Sigma1)
from .pde import (LinearPropagator, NonlinearityModel, SourceField, StateField,
                  SystemCoefficients, solve_forward_semilinear)

_SAMPLERS = ("bumps", "random_fourier_squared", "indicator_blocks")
_MAX_ATTEMPTS = 50


@dataclass
class SourceClassSpec:
    k: float
    sampler: str = "bumps"
    seed: int = 0
    positivity: bool = True

    def __post_init__(self):
        if self.sampler not in _SAMPLERS:
            raise ShapeMismatch(f"unknown sampler {self.sampler!r}")
        if not self.positivity:
            raise ShapeMismatch("the source class is nonnegative by definition")


def k_min(grid: PolarGrid) -> float:
    """Norm ratio of the constant source, the flattest member of the class."""
    area_Q = grid.T * math.pi * (grid.r1 ** 2 - grid.r0 ** 2)
    return 1.0 / math.sqrt(area_Q)


# ---------------------------------------------------------------------------
# Parameter-first sampler families
# ---------------------------------------------------------------------------

def _draw_params(spec: SourceClassSpec, grid: PolarGrid, n_components: int,
                 rng: np.random.Generator) -> dict:
    r0, r1, T = grid.r0, grid.r1, grid.T
    params: dict = {"family": spec.sampler, "n": n_components, "w": 0.0}
    comps = []
    for _ in range(n_components):
        if spec.sampler == "bumps":
            n_b = int(rng.integers(1, 4))
            comps.append({
                "rc": rng.uniform(r0, r1, n_b).tolist(),
                "thc": rng.uniform(0.0, 2.0 * math.pi, n_b).tolist(),
                "tc": rng.uniform(0.15 * T, 0.85 * T, n_b).tolist(),
                "wr": rng.uniform(0.08, 0.35, n_b).tolist(),
                "wth": rng.uniform(0.3, 1.2, n_b).tolist(),
                "wt": rng.uniform(0.15 * T, 0.6 * T, n_b).tolist(),
                "h": rng.uniform(0.2, 1.0, n_b).tolist(),
            })
        elif spec.sampler == "random_fourier_squared":
            modes = 3
            comps.append({
                "a": rng.normal(0.0, 1.0, (modes, modes)).tolist(),
                "ph": rng.uniform(0.0, 2.0 * math.pi, (modes, modes)).tolist(),
                "tslope": float(rng.uniform(-0.5, 0.5)),
            })
        else:
            n_blk = int(rng.integers(1, 4))
            ra = rng.uniform(r0, r1, n_blk)
            rb = np.minimum(r1, ra + rng.uniform(0.1, 0.5, n_blk) * (r1 - r0))
            tha = rng.uniform(0.0, 2.0 * math.pi, n_blk)
            thb = tha + rng.uniform(0.3, 2.0, n_blk)
            ta = rng.uniform(0.0, 0.7 * T, n_blk)
            tb = np.minimum(T, ta + rng.uniform(0.2, 0.6, n_blk) * T)
            comps.append({
                "ra": ra.tolist(), "rb": rb.tolist(),
                "tha": tha.tolist(), "thb": thb.tolist(),
                "ta": ta.tolist(), "tb": tb.tolist(),
                "h": rng.uniform(0.2, 1.0, n_blk).tolist(),
            })
    params["components"] = comps
    return params


def _eval_component(params: dict, comp: dict, grid: PolarGrid) -> np.ndarray:
    rm = grid.rmesh[None, :, :]
    thm = grid.thmesh[None, :, :]
    tm = grid.t[:, None, None]
    fam = params["family"]
    out = np.zeros((grid.n_t,) + grid.shape)
    if fam == "bumps":
        for rc, thc, tc, wr, wth, wt, h in zip(
                comp["rc"], comp["thc"], comp["tc"], comp["wr"], comp["wth"],
                comp["wt"], comp["h"]):
            # periodic angular distance
            dth = np.angle(np.exp(1j * (thm - thc)))
            out += h * np.exp(-((rm - rc) / wr) ** 2
                              - (dth / wth) ** 2
                              - ((tm - tc) / wt) ** 2)
    elif fam == "random_fourier_squared":
        a = np.asarray(comp["a"])
        ph = np.asarray(comp["ph"])
        acc = np.zeros_like(out)
        modes = a.shape[0]
        for p in range(modes):
            for q in range(modes):
                acc += a[p, q] * np.cos(q * thm + ph[p, q]) * np.cos(
                    p * math.pi * (rm - grid.r0) / (grid.r1 - grid.r0))
        out = acc ** 2 * (1.0 + comp["tslope"] * tm / max(grid.T, 1e-300))
    else:
        twopi = 2.0 * math.pi
        for ra, rb, tha, thb, ta, tb, h in zip(
                comp["ra"], comp["rb"], comp["tha"], comp["thb"],
                comp["ta"], comp["tb"], comp["h"]):
            ang = np.mod(thm - tha, twopi) <= (thb - tha)
            out += h * ((rm >= ra) & (rm <= rb) & ang
                        & (tm >= ta) & (tm <= tb))
    return np.maximum(out, 0.0)


def evaluate_source_params(params: dict, grid: PolarGrid) -> SourceField:
    """Re-evaluate a stored analytic source on an arbitrary grid.

    The flattening weight w mixes in the constant 1 field; it is part of the
    parameters so that the same class member appears at every resolution.
    """
    vals = np.stack([_eval_component(params, comp, grid)
                     for comp in params["components"]])
    w = params.get("w", 0.0)
    if w > 0.0:
        scale = max(float(vals.max()), 1e-300)
        vals = (1.0 - w) * vals + w * scale
    return SourceField(grid=grid, values=vals, params=dict(params))


def sample_source_Gk(spec: SourceClassSpec, grid: PolarGrid,
                     n_components: int = 1,
                     rng: np.random.Generator | None = None) -> SourceField:
    """Draw one member of G_k, flattening toward a constant when too spiky."""
    if spec.k < k_min(grid) * (1.0 - 1e-12):
        raise ClassEmpty(
            f"k={spec.k:g} below the constant-source minimum {k_min(grid):.6g}")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    for _ in range(_MAX_ATTEMPTS):
        params = _draw_params(spec, grid, n_components, rng)
        g = evaluate_source_params(params, grid)
        if g.l1_Q <= 0.0:
            continue
        if g.l2_Q <= spec.k * g.l1_Q:
            return g
        # bisect the flattening weight; w=1 is the constant with ratio k_min
        lo, hi = 0.0, 1.0
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            params["w"] = mid
            g = evaluate_source_params(params, grid)
            if g.l2_Q <= spec.k * g.l1_Q:
                hi = mid
            else:
                lo = mid
        params["w"] = hi
        g = evaluate_source_params(params, grid)
        if g.l2_Q <= spec.k * g.l1_Q * (1.0 + 1e-12):
            return g
    raise RejectionExhausted(
        f"no admissible source after {_MAX_ATTEMPTS} attempts (k={spec.k:g})")


# ---------------------------------------------------------------------------
# Ratios and the constant estimate
# ---------------------------------------------------------------------------

def stability_ratio(g: SourceField, zeta: ObservationSeries) -> float:
    """||g||_{L2(Q)} / ||zeta||_{L2(Sigma1)}; nan for the zero instance."""
    zn = norm_L2_Sigma1(zeta)
    if zn == 0.0:
        if g.l2_Q == 0.0:
            return math.nan
        raise ZeroObservation(
            "observation vanished for a nonzero source; under the stability "
            "theory this cannot happen and points at a discretization artifact")
    return g.l2_Q / zn


@dataclass
class StabilityReport:
    samples: list            # (sample id, ||g||_2, ||zeta||_2, ratio)
    C_hat: float
    M_observed: float
    config_digest: str
    zero_observations: int = 0

    def to_json(self) -> str:
        return json.dumps({
            "schema_version": 1,
            "config_digest": self.config_digest,
            "C_hat": self.C_hat,
            "M_observed": self.M_observed,
            "zero_observations": self.zero_observations,
            "samples": [[int(i), float(a), float(b), float(r)]
                        for (i, a, b, r) in self.samples],
        }, sort_keys=True)


def _config_digest(payload: dict) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


def estimate_constant(spec: SourceClassSpec, grid: PolarGrid,
                      coeffs: SystemCoefficients, obs: ObservationSpec,
                      n_samples: int, f: NonlinearityModel | None = None,
                      n_components: int | None = None,
                      workers: int = 1,
                      sources: list[SourceField] | None = None) -> StabilityReport:
    """Max observed ratio over a sampled corpus, with sup-norm bookkeeping.

    Pre-drawn sources may be passed in (refinement studies re-evaluate the
    same analytic parameters on finer grids); otherwise they are drawn here
    sequentially from the seeded generator, so the corpus is identical for
    any worker count.
    """
    if n_components is None:
        n_components = coeffs.n
    if sources is None:
        rng = np.random.default_rng(spec.seed)
        sources = [sample_source_Gk(spec, grid, n_components, rng)
                   for _ in range(n_samples)]
    if len(sources) != n_samples:
        raise ShapeMismatch("source corpus length does not match n_samples")

    y0 = np.zeros((coeffs.n,) + grid.shape)
    local = threading.local()

    def solve_one(idx: int):
        g = sources[idx]
        if f is None:
            if not hasattr(local, "prop"):
                local.prop = LinearPropagator(coeffs, grid)
            y = local.prop.solve(g, y0)
        else:
            y = solve_forward_semilinear(coeffs, f, g, y0, grid)
        zeta = apply_observation(obs, extract_trace_and_conormal(y, coeffs, grid))
        return idx, g, y, zeta

    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(solve_one, range(n_samples)))
        results.sort(key=lambda r: r[0])
    else:
        results = [solve_one(i) for i in range(n_samples)]

    rows = []
    zero_obs = 0
    m_obs = 0.0
    c_hat = -math.inf
    for idx, g, y, zeta in results:
        try:
            ratio = stability_ratio(g, zeta)
        except ZeroObservation:
            zero_obs += 1
            ratio = math.inf
        zn = norm_L2_Sigma1(zeta)
        rows.append((idx, g.l2_Q, zn, ratio))
        m_obs = max(m_obs, y.max_abs())
        if not math.isnan(ratio):
            c_hat = max(c_hat, ratio)

    digest = _config_digest({
        "k": spec.k, "sampler": spec.sampler, "seed": spec.seed,
        "n_samples": n_samples, "n": coeffs.n,
        "grid": (grid.r0, grid.r1, grid.n_r, grid.n_theta, grid.T, grid.n_t),
        "semilinear": f is not None,
    })
    return StabilityReport(samples=rows, C_hat=c_hat, M_observed=m_obs,
                           config_digest=digest, zero_observations=zero_obs)


def add_observation_noise(zeta: ObservationSeries, sigma: float,
                          seed: int = 0) -> ObservationSeries:
    """Additive Gaussian perturbation for sensitivity tables."""
    rng = np.random.default_rng(seed)
    return ObservationSeries(grid=zeta.grid,
                             values=zeta.values + rng.normal(0.0, sigma,
                                                             zeta.values.shape))


# ---------------------------------------------------------------------------
# Adversarial ascent over the bump parameterization
# ---------------------------------------------------------------------------

_ASCENT_KEYS = ("rc", "thc", "tc", "wr", "wth", "wt", "h")


def _project_Gk(params: dict, spec: SourceClassSpec,
                grid: PolarGrid) -> SourceField | None:
    params = dict(params)
    params["w"] = 0.0
    g = evaluate_source_params(params, grid)
    if g.l1_Q <= 0.0:
        return None
    if g.l2_Q <= spec.k * g.l1_Q:
        return g
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        params["w"] = mid
        g = evaluate_source_params(params, grid)
        if g.l2_Q <= spec.k * g.l1_Q:
            hi = mid
        else:
            lo = mid
    params["w"] = hi
    g = evaluate_source_params(params, grid)
    if g.l2_Q <= spec.k * g.l1_Q * (1.0 + 1e-12):
        return g
    return None


def adversarial_search(start: SourceField, spec: SourceClassSpec,
                       grid: PolarGrid, coeffs: SystemCoefficients,
                       obs: ObservationSpec, n_steps: int,
                       step: float = 0.1) -> tuple[SourceField, list[float]]:
    """Coordinate ascent on the bump parameters, maximizing the ratio.

    Each move is projected back into G_k by flattening; moves that do not
    improve the ratio are rejected, so the returned trace is non-decreasing.
    """
    if start.params.get("family") != "bumps":
        raise ProjectionFailure("adversarial search needs a bumps-family source")
    prop = LinearPropagator(coeffs, grid)
    y0 = np.zeros((coeffs.n,) + grid.shape)

    def ratio_of(g: SourceField) -> float:
        y = prop.solve(g, y0)
        zeta = apply_observation(obs, extract_trace_and_conormal(y, coeffs, grid))
        return stability_ratio(g, zeta)

    best = _project_Gk(start.params, spec, grid)
    if best is None:
        raise ProjectionFailure("start source cannot be projected into the class")
    best_ratio = ratio_of(best)
    trace = [best_ratio]
    for _ in range(n_steps):
        improved = False
        for ci, comp in enumerate(best.params["components"]):
            for key in _ASCENT_KEYS:
                for bi in range(len(comp[key])):
                    for sgn in (+1.0, -1.0):
                        trial = json.loads(json.dumps(best.params))
                        base = trial["components"][ci][key][bi]
                        trial["components"][ci][key][bi] = base * (1.0 + sgn * step) \
                            if key != "thc" else base + sgn * step
                        g = _project_Gk(trial, spec, grid)
                        if g is None:
                            continue
                        r = ratio_of(g)
                        if r > best_ratio:
                            best, best_ratio = g, r
                            improved = True
        trace.append(best_ratio)
        if not improved:
            break
    return best, trace
