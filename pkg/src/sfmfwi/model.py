"""Grids, velocity fields, acquisition geometry, wavelets and shot gathers.

Arrays are depth-major: ``values[z, x]`` with z the slow axis. All objects are
immutable once built; array payloads are stored read-only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgument


def _frozen(arr, dtype=np.float64):
    out = np.array(arr, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Grid2D:
    nx: int
    nz: int
    dx: float
    dz: float

    def __post_init__(self):
        if int(self.nx) < 8 or int(self.nz) < 8:
            raise InvalidArgument(f"grid needs nx, nz >= 8, got nx={self.nx}, nz={self.nz}")
        if not (self.dx > 0 and self.dz > 0):
            raise InvalidArgument(f"grid spacing must be positive, got dx={self.dx}, dz={self.dz}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nz", int(self.nz))
        object.__setattr__(self, "dx", float(self.dx))
        object.__setattr__(self, "dz", float(self.dz))

    @property
    def shape(self):
        return (self.nz, self.nx)

    def contains(self, x, z):
        return 0 <= x < self.nx and 0 <= z < self.nz


@dataclass(frozen=True, eq=False)
class VelocityModel:
    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != self.grid.shape:
            raise InvalidArgument(f"values shape {vals.shape} does not match grid (nz, nx)={self.grid.shape}")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgument("velocity values must be finite")
        object.__setattr__(self, "values", vals)

    def with_values(self, values):
        return VelocityModel(self.grid, values)

    @property
    def vmin(self):
        return float(self.values.min())

    @property
    def vmax(self):
        return float(self.values.max())


@dataclass(frozen=True)
class AcquisitionGeometry:
    """Source and receiver grid indices as ``(x, z)`` pairs; all shots share the receivers."""

    source_positions: tuple
    receiver_positions: tuple

    def __post_init__(self):
        src = tuple((int(x), int(z)) for x, z in self.source_positions)
        rec = tuple((int(x), int(z)) for x, z in self.receiver_positions)
        if not src or not rec:
            raise InvalidArgument("geometry needs at least one source and one receiver")
        object.__setattr__(self, "source_positions", src)
        object.__setattr__(self, "receiver_positions", rec)

    @property
    def n_shots(self):
        return len(self.source_positions)

    @property
    def n_receivers(self):
        return len(self.receiver_positions)

    def validate(self, grid: Grid2D):
        for kind, pts in (("source", self.source_positions), ("receiver", self.receiver_positions)):
            for x, z in pts:
                if not grid.contains(x, z):
                    raise InvalidArgument(f"{kind} at (x={x}, z={z}) lies outside the {grid.nx}x{grid.nz} grid")

    @classmethod
    def surface(cls, grid: Grid2D, n_shots: int, n_receivers: int, source_depth=1, receiver_depth=1):
        """Evenly spread sources and receivers along a horizontal line near the top."""
        if n_shots < 1 or n_receivers < 1:
            raise InvalidArgument("need at least one shot and one receiver")
        sx = np.rint(np.linspace(0, grid.nx - 1, n_shots)) if n_shots > 1 else [grid.nx // 2]
        rx = np.rint(np.linspace(0, grid.nx - 1, n_receivers))
        geom = cls(tuple((int(x), source_depth) for x in sx), tuple((int(x), receiver_depth) for x in rx))
        geom.validate(grid)
        return geom


@dataclass(frozen=True, eq=False)
class RickerWavelet:
    f0: float
    dt: float
    nt: int
    t0: float
    samples: np.ndarray = field(repr=False)

    def __post_init__(self):
        s = _frozen(self.samples)
        if s.shape != (self.nt,):
            raise InvalidArgument(f"wavelet has {s.shape} samples, expected ({self.nt},)")
        object.__setattr__(self, "samples", s)

    def scaled(self, factor):
        return RickerWavelet(self.f0, self.dt, self.nt, self.t0, self.samples * factor)


@dataclass(frozen=True, eq=False)
class ShotGather:
    traces: np.ndarray
    dt: float

    def __post_init__(self):
        tr = _frozen(self.traces)
        if tr.ndim != 3:
            raise InvalidArgument(f"gather traces must be [shot][receiver][time], got ndim={tr.ndim}")
        if not np.all(np.isfinite(tr)):
            raise InvalidArgument("gather contains non-finite samples")
        object.__setattr__(self, "traces", tr)

    @property
    def n_shots(self):
        return self.traces.shape[0]

    @property
    def n_receivers(self):
        return self.traces.shape[1]

    @property
    def nt(self):
        return self.traces.shape[2]

    def select_shots(self, indices):
        return ShotGather(self.traces[list(indices)], self.dt)


def ricker(t, f0, t0):
    """Ricker pulse evaluated at arbitrary times ``t``."""
    arg = (np.pi * f0 * (np.asarray(t, dtype=np.float64) - t0)) ** 2
    return (1.0 - 2.0 * arg) * np.exp(-arg)


def make_ricker(f0, dt, nt, t0=None):
    """Ricker wavelet ``(1 - 2 pi^2 f0^2 tau^2) exp(-pi^2 f0^2 tau^2)`` with ``tau = t - t0``.

    ``t0`` defaults to ``1.5 / f0`` so the pulse starts close to zero.
    """
    if not (f0 > 0):
        raise InvalidArgument(f"f0 must be positive, got {f0}")
    if not (dt > 0):
        raise InvalidArgument(f"dt must be positive, got {dt}")
    if int(nt) != nt or nt <= 0:
        raise InvalidArgument(f"nt must be a positive integer, got {nt}")
    nt = int(nt)
    if t0 is None:
        t0 = 1.5 / f0
    if nt * dt <= 2 * t0:
        warnings.warn(f"record length {nt * dt:.4g}s is shorter than 2*t0={2 * t0:.4g}s; wavelet is truncated")
    # evaluate on an integer offset grid so samples are exactly symmetric about t0
    k0 = t0 / dt
    tau = (np.arange(nt) - k0) * dt
    if abs(k0 - round(k0)) < 1e-9:
        tau = (np.arange(nt) - int(round(k0))) * dt
    arg = (np.pi * f0 * tau) ** 2
    samples = (1.0 - 2.0 * arg) * np.exp(-arg)
    return RickerWavelet(float(f0), float(dt), nt, float(t0), samples)


def gaussian_smooth(model: VelocityModel, sigma_cells):
    """Separable Gaussian blur with reflect padding; ``sigma_cells=0`` is the identity."""
    if sigma_cells < 0:
        raise InvalidArgument(f"sigma_cells must be >= 0, got {sigma_cells}")
    if sigma_cells == 0:
        return model
    return model.with_values(gaussian_filter(model.values, sigma=float(sigma_cells), mode="reflect"))


def linear_gradient_model(grid: Grid2D, v_top, v_bottom):
    if not (v_top > 0 and v_bottom > 0):
        raise InvalidArgument(f"velocities must be positive, got v_top={v_top}, v_bottom={v_bottom}")
    z = np.arange(grid.nz, dtype=np.float64)
    col = v_top + z * (v_bottom - v_top) / (grid.nz - 1)
    return VelocityModel(grid, np.repeat(col[:, None], grid.nx, axis=1))


def constant_model(grid: Grid2D, v):
    return VelocityModel(grid, np.full(grid.shape, float(v)))
