"""Sign-hypothesis checkers and positivity predicates on computed trajectories.

Discrete schemes have no exact maximum principle, so all checks use relative
tolerances; a violation beyond tolerance is a genuine result (returned with a
witness), never an exception.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pde import NonlinearityModel, SourceField, StateField, SystemCoefficients


@dataclass
class SignCheckResult:
    passed: bool
    witness: tuple | None = None
    detail: str = ""


def check_sign_hypotheses(coeffs: SystemCoefficients | None = None,
                          f: NonlinearityModel | None = None,
                          probe_values=(0.0, 0.25, 1.0, 4.0),
                          probe_times=3, tol: float = 1e-12) -> SignCheckResult:
    """Off-diagonal couplings must be nonpositive; case B reactions likewise.

    For a nonlinearity the conditions are sampled on a probe lattice of
    nonnegative states. A failed check is a result with a witness, not an
    error.
    """
    if coeffs is not None:
        c = coeffs.c if coeffs.c_static else coeffs.c
        n = coeffs.n
        for i in range(n):
            for l in range(n):
                if i == l:
                    continue
                block = c[i, l]
                if np.max(block) > tol:
                    pos = np.unravel_index(np.argmax(block), block.shape)
                    return SignCheckResult(
                        passed=False, witness=(i, l) + tuple(int(p) for p in pos),
                        detail=f"c[{i},{l}] = {np.max(block):.3e} > 0")
    if f is not None:
        grid_like = probe_values
        times = np.linspace(0.0, 1.0, probe_times)
        vals = np.asarray(probe_values, dtype=float)
        # small synthetic lattice: every component independently on the probe values
        import itertools
        n_guess = 2
        rm = np.ones((1, 1))
        tm = np.zeros((1, 1))
        for combo in itertools.product(range(len(vals)), repeat=n_guess):
            Y = np.array([vals[k] for k in combo], dtype=float).reshape(n_guess, 1, 1)
            for t in times:
                J = np.asarray(f.df(t, rm, tm, Y))
                n_actual = J.shape[0]
                if n_actual != n_guess:
                    n_guess = n_actual
                    break
                for i in range(n_actual):
                    for l in range(n_actual):
                        if i != l and J[i, l].max() > tol:
                            return SignCheckResult(
                                passed=False, witness=(i, l, float(t)),
                                detail=f"df_{i}/dy_{l} = {float(J[i, l].max()):.3e} > 0")
                if f.hypothesis_case == "B":
                    for i in range(n_actual):
                        Yi = Y.copy()
                        Yi[i] = 0.0
                        fi = np.asarray(f.f(t, rm, tm, Yi))[i]
                        if fi.max() > tol:
                            return SignCheckResult(
                                passed=False, witness=(i, float(t)),
                                detail=f"f_{i} = {float(fi.max()):.3e} > 0 at y_{i}=0")
    return SignCheckResult(passed=True)


@dataclass
class PositivityReport:
    min_value: float
    max_abs: float
    tolerance: float
    passed: bool
    first_violation: tuple | None      # (t_index, r_index, theta_index, component)
    improving_pass: dict = field(default_factory=dict)   # time -> bool
    zero_set_fraction: dict = field(default_factory=dict)  # time -> fraction
    near_violations: int = 0
    source_mass_before: float | None = None

    def to_json(self) -> str:
        payload = {
            "schema_version": 1,
            "min_value": self.min_value,
            "max_abs": self.max_abs,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "first_violation": self.first_violation,
            "improving_pass": {str(k): bool(v) for k, v in self.improving_pass.items()},
            "zero_set_fraction": {str(k): float(v) for k, v in self.zero_set_fraction.items()},
            "near_violations": self.near_violations,
            "source_mass_before": self.source_mass_before,
        }
        return json.dumps(payload, sort_keys=True)


def _rescaled(y: StateField, coeffs: SystemCoefficients | None) -> np.ndarray:
    """Exponential time rescaling when some diagonal coupling is positive.

    Mirrors the substitution z = y * exp(-gamma t) with gamma above twice the
    coupling sup-norm; the sign pattern is unchanged, the check runs on z and
    witnesses are mapped back to y.
    """
    vals = y.values
    if coeffs is None:
        return vals
    c = coeffs.c
    diag_max = max(float(np.max(c[i, i])) for i in range(coeffs.n))
    if diag_max <= 0.0:
        return vals
    gamma = 2.0 * float(np.max(np.abs(c)))
    scale = np.exp(-gamma * y.grid.t)
    return vals * scale[None, :, None, None]


def run_positivity_check(y: StateField, tolerance: float | None = None,
                         coeffs: SystemCoefficients | None = None) -> PositivityReport:
    """Invariant-cone check: the trajectory should stay above -tolerance."""
    z = _rescaled(y, coeffs)
    max_abs = float(np.max(np.abs(z)))
    if tolerance is None:
        tolerance = 1e-8 * max(max_abs, 1e-300)
    min_val = float(np.min(z))
    passed = min_val >= -tolerance
    witness = None
    if not passed:
        comp, ti, ri, thi = np.unravel_index(np.argmin(z), z.shape)
        witness = (int(ti), int(ri), int(thi), int(comp))
    return PositivityReport(min_value=min_val, max_abs=max_abs,
                            tolerance=tolerance, passed=passed,
                            first_violation=witness)


_ZERO_SET_MEASURE_FRACTION = 1e-3


def run_positivity_improving_check(y: StateField, t_check,
                                   floor: float | None = None,
                                   g: SourceField | None = None) -> PositivityReport:
    """Strict-positivity check at interior times (smoothing spreads support).

    If at some checked time a nonzero fraction of the quadrature measure
    still sits at zero, the contrapositive of the improving property demands
    that the source mass before that time vanishes; the report carries that
    mass when the source is supplied.
    """
    grid = y.grid
    vals = y.values
    max_abs = float(np.max(np.abs(vals)))
    if floor is None:
        floor = 1e-12 * max(max_abs, 1e-300)
    total_w = float(np.sum(grid.quad_weights))

    improving = {}
    zero_fracs = {}
    near = 0
    source_mass = None
    min_overall = float(np.min(vals))
    first_violation = None
    for t in t_check:
        m = int(np.argmin(np.abs(grid.t - t)))
        if grid.t[m] <= 0.0:
            continue
        slab = vals[:, m]                           # (n, n_r, n_theta)
        min_here = float(np.min(slab))
        improving[float(grid.t[m])] = min_here > floor
        w_zero = float(np.sum(grid.quad_weights[np.max(np.abs(slab), axis=0) <= floor]))
        frac = w_zero / total_w
        zero_fracs[float(grid.t[m])] = frac
        if floor < min_here <= 10.0 * floor:
            near += 1
        if frac > _ZERO_SET_MEASURE_FRACTION and g is not None:
            wt = grid.time_weights.copy()
            wt[grid.t > grid.t[m]] = 0.0
            per_t = np.einsum("ctij,ij->ct", np.abs(g.values), grid.quad_weights)
            source_mass = float(np.sum(per_t * wt[None, :]))
        if not improving[float(grid.t[m])] and first_violation is None:
            comp, ri, thi = np.unravel_index(np.argmin(slab), slab.shape)
            first_violation = (int(m), int(ri), int(thi), int(comp))

    return PositivityReport(min_value=min_overall, max_abs=max_abs,
                            tolerance=floor,
                            passed=all(improving.values()) if improving else True,
                            first_violation=first_violation,
                            improving_pass=improving,
                            zero_set_fraction=zero_fracs,
                            near_violations=near,
                            source_mass_before=source_mass)
