"""Delimited and binary export of grid fields plus measurement-file round trip.

CSV layouts:
  weight fields      t, r, theta, psi, phi, alpha, phi_tilde, alpha_tilde
  state / source     component, t, r, theta, value
  observation series t, theta, component, zeta
Binary dump: magic "CLAB", u32 version, u32 rank, u32 dims, then the payload
as row-major little-endian float64.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import Io
from .geometry import PolarGrid, WeightFields
from .observe import ObservationSeries
from .pde import SourceField, StateField

_MAGIC = b"CLAB"
_VERSION = 1


def write_binary(path, array: np.ndarray) -> None:
    arr = np.ascontiguousarray(array, dtype="<f8")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())
    except OSError as exc:
        raise Io(f"cannot write binary dump {path}: {exc}") from exc


def read_binary(path) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise Io(f"cannot read binary dump {path}: {exc}") from exc
    if raw[:4] != _MAGIC:
        raise Io(f"{path}: bad magic {raw[:4]!r}")
    version, rank = struct.unpack_from("<II", raw, 4)
    if version != _VERSION:
        raise Io(f"{path}: unsupported version {version}")
    dims = struct.unpack_from(f"<{rank}I", raw, 12)
    off = 12 + 4 * rank
    n = int(np.prod(dims))
    if len(raw) - off != 8 * n:
        raise Io(f"{path}: payload size mismatch")
    return np.frombuffer(raw[off:], dtype="<f8").reshape(dims).copy()


def _open_writer(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise Io(f"cannot write {path}: {exc}") from exc


def write_weights_csv(path, weights: WeightFields) -> None:
    grid = weights.grid
    with _open_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "theta", "psi", "phi", "alpha",
                    "phi_tilde", "alpha_tilde"])
        for m in range(grid.n_t):
            for i in range(grid.n_r):
                for j in range(grid.n_theta):
                    w.writerow([repr(float(grid.t[m])), repr(float(grid.r[i])),
                                repr(float(grid.theta[j])),
                                repr(float(weights.psi[i, j])),
                                repr(float(weights.phi[m, i, j])),
                                repr(float(weights.alpha[m, i, j])),
                                repr(float(weights.phi_tilde[m, i, j])),
                                repr(float(weights.alpha_tilde[m, i, j]))])


def write_field_csv(path, fld: StateField | SourceField) -> None:
    grid = fld.grid
    with _open_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["component", "t", "r", "theta", "value"])
        for c in range(fld.values.shape[0]):
            for m in range(grid.n_t):
                for i in range(grid.n_r):
                    for j in range(grid.n_theta):
                        w.writerow([c, repr(float(grid.t[m])),
                                    repr(float(grid.r[i])),
                                    repr(float(grid.theta[j])),
                                    repr(float(fld.values[c, m, i, j]))])


def write_observation_csv(path, zeta: ObservationSeries) -> None:
    """Measurement file: the format read back by read_observation_csv."""
    grid = zeta.grid
    with _open_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["t", "theta", "component", "zeta"])
        for m in range(grid.n_t):
            for j in range(grid.n_theta):
                for c in range(zeta.n):
                    w.writerow([repr(float(grid.t[m])),
                                repr(float(grid.theta[j])), c,
                                repr(float(zeta.values[c, m, j]))])


def read_observation_csv(path, grid: PolarGrid) -> ObservationSeries:
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise Io(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["t", "theta", "component", "zeta"]:
            raise Io(f"{path}: unexpected header {header}")
        rows = [(float(t), float(th), int(c), float(z))
                for t, th, c, z in reader]
    if not rows:
        raise Io(f"{path}: empty measurement file")
    n = max(r[2] for r in rows) + 1
    vals = np.full((n, grid.n_t, grid.n_theta), np.nan)
    for t, th, c, z in rows:
        m = int(np.argmin(np.abs(grid.t - t)))
        j = int(np.argmin(np.abs(np.angle(np.exp(1j * (grid.theta - th))))))
        vals[c, m, j] = z
    if np.isnan(vals).any():
        raise Io(f"{path}: measurement file does not cover the grid")
    return ObservationSeries(grid=grid, values=vals)


def write_scan_csv(path, scan) -> None:
    """(s, lambda, C_hat, n_corpus) rows of a parameter scan."""
    with _open_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["s", "lambda", "C_hat", "n_corpus"])
        for s, lam, c_hat, n in scan.rows():
            w.writerow([repr(s), repr(lam), repr(c_hat), n])


def write_samples_csv(path, report) -> None:
    """Per-sample stability rows (id, source norm, observation norm, ratio)."""
    with _open_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["sample", "g_l2", "zeta_l2", "ratio"])
        for sid, gl2, zl2, ratio in report.samples:
            w.writerow([sid, repr(float(gl2)), repr(float(zl2)),
                        repr(float(ratio))])
