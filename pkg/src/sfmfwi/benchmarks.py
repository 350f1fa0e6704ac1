"""Bundled synthetic velocity models standing in for the large field benchmarks."""
import numpy as np

from .errors import InvalidArgument
from .model import Grid2D, VelocityModel

KINDS = ("two_layer", "three_layer", "lens", "random_layers")
V_LO, V_HI = 1500.0, 4500.0


def generate_synthetic_benchmark(kind, grid: Grid2D, seed=0):
    """Deterministic test model with velocities in [1500, 4500] m/s.

    ``two_layer`` and ``three_layer`` ignore the seed. ``lens`` places a
    high-velocity ellipse (salt analogue) in a depth-increasing background;
    the seed jitters its centre and size. ``random_layers`` draws layer
    thicknesses and velocity steps that increase with depth.
    """
    nz, nx = grid.shape
    z = np.arange(nz)[:, None] * np.ones((1, nx))
    x = np.ones((nz, 1)) * np.arange(nx)[None, :]
    rng = np.random.default_rng(int(seed))
    if kind == "two_layer":
        v = np.where(z < nz // 2, 2000.0, 3000.0)
    elif kind == "three_layer":
        v = np.where(z < nz // 3, 2000.0, np.where(z < 2 * nz // 3, 2600.0, 3200.0))
    elif kind == "lens":
        v = 1800.0 + 1000.0 * z / (nz - 1)
        cz = nz * (0.5 + 0.05 * rng.uniform(-1, 1))
        cx = nx * (0.5 + 0.08 * rng.uniform(-1, 1))
        az = nz * (0.14 + 0.02 * rng.uniform(-1, 1))
        ax = nx * (0.24 + 0.03 * rng.uniform(-1, 1))
        inside = ((z - cz) / az) ** 2 + ((x - cx) / ax) ** 2 <= 1.0
        v = np.where(inside, 3800.0, v)
    elif kind == "random_layers":
        n_layers = int(rng.integers(4, 8))
        tops = np.sort(rng.choice(np.arange(2, nz - 2), size=n_layers - 1, replace=False))
        steps = rng.uniform(150.0, 450.0, size=n_layers - 1)
        vel = 1800.0 + np.concatenate([[0.0], np.cumsum(steps)])
        # gentle dip so the layering is not purely 1D
        dip = rng.uniform(-0.08, 0.08)
        zz = z + dip * (x - nx / 2)
        layer = np.searchsorted(tops, zz, side="right")
        v = vel[layer]
    else:
        raise InvalidArgument(f"unknown benchmark kind {kind!r}; choose from {', '.join(KINDS)}")
    return VelocityModel(grid, np.clip(v, V_LO, V_HI))
