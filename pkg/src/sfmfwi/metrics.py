"""Model-quality metrics: relative error, SSIM, effective rank, deblurring diagnostics."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .errors import InvalidArgument, NumericError


def _arr(m):
    return np.asarray(getattr(m, "values", m), dtype=np.float64)


def rel_l2(m, m_true):
    a, b = _arr(m), _arr(m_true)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {a.shape} vs {b.shape}")
    denom = np.linalg.norm(b)
    if denom == 0:
        raise InvalidArgument("reference model has zero norm")
    return float(np.linalg.norm(a - b) / denom)


@dataclass(frozen=True)
class SsimConfig:
    sigma: float = 1.5
    size: int = 11
    K1: float = 0.01
    K2: float = 0.03
    L: float = 1.0

    def __post_init__(self):
        if self.size % 2 == 0:
            raise InvalidArgument(f"SSIM window size must be odd, got {self.size}")
        if not (self.K1 > 0 and self.K2 > 0):
            raise InvalidArgument("K1 and K2 must be positive")


def _gauss_kernel(sigma, size):
    r = np.arange(size) - size // 2
    k = np.exp(-0.5 * (r / sigma) ** 2)
    return k / k.sum()


def ssim(m, m_true, cfg: SsimConfig = SsimConfig()):
    """Mean SSIM after joint min-max normalization of both fields to [0, 1]."""
    a, b = _arr(m), _arr(m_true)
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {a.shape} vs {b.shape}")
    if min(a.shape) < cfg.size:
        raise InvalidArgument(f"fields {a.shape} are smaller than the {cfg.size}-cell window")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        if np.array_equal(a, b):
            return 1.0
        raise InvalidArgument("degenerate dynamic range")
    a = (a - lo) / (hi - lo)
    b = (b - lo) / (hi - lo)
    k = _gauss_kernel(cfg.sigma, cfg.size)

    def blur(x):
        return correlate1d(correlate1d(x, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    saa = blur(a * a) - mu_a * mu_a
    sbb = blur(b * b) - mu_b * mu_b
    sab = blur(a * b) - mu_a * mu_b
    c1 = (cfg.K1 * cfg.L) ** 2
    c2 = (cfg.K2 * cfg.L) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * sab + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (saa + sbb + c2)
    return float(np.mean(num / den))


def effective_rank(m):
    """Singular values above ``sigma_max * max(shape) * machine_eps``."""
    a = _arr(m)
    if a.size == 0:
        raise InvalidArgument("empty matrix")
    try:
        s = np.linalg.svd(a, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD did not converge: {exc}") from exc
    tol = s.max() * max(a.shape) * np.finfo(np.float64).eps
    return int(np.count_nonzero(s > tol))


@dataclass
class SpectralReport:
    k: np.ndarray
    spectrum_corrupt: np.ndarray
    spectrum_corrected: np.ndarray
    r_band: float
    hf_gain: float
    grad_energy_gain: float
    p90_grad_gain: float

    def ratios(self):
        return {"R_band": self.r_band, "hf_gain": self.hf_gain,
                "grad_energy_gain": self.grad_energy_gain, "p90_grad_gain": self.p90_grad_gain}

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "S_corrupt", "S_corrected"])
            for row in zip(self.k, self.spectrum_corrupt, self.spectrum_corrected):
                w.writerow([repr(float(v)) for v in row])
            w.writerow(["R_band", "hf_gain", "grad_energy_gain", "p90_grad_gain"])
            w.writerow([repr(v) for v in self.ratios().values()])


def radial_spectrum(values, dx, dz):
    """Radially averaged |FFT|^2 on linear bins of width 1/(N*d), DC bin dropped.

    Returns bin centres (cycles/m) and the mean energy per bin.
    """
    a = np.asarray(values, dtype=np.float64)
    nz, nx = a.shape
    power = np.abs(np.fft.fft2(a)) ** 2
    kz = np.fft.fftfreq(nz, d=dz)
    kx = np.fft.fftfreq(nx, d=dx)
    kr = np.hypot(kz[:, None], kx[None, :])
    width = 1.0 / (max(nx, nz) * max(dx, dz))
    idx = np.floor(kr / width + 0.5).astype(int)
    nbins = idx.max() + 1
    sums = np.bincount(idx.ravel(), weights=power.ravel(), minlength=nbins)
    counts = np.bincount(idx.ravel(), minlength=nbins)
    keep = np.arange(1, nbins)
    keep = keep[counts[keep] > 0]
    return keep * width, sums[keep] / counts[keep]


def _grad_mag(a, dx, dz):
    # forward differences, edge replicated so the last row/column differences vanish
    p = np.pad(a, ((0, 1), (0, 1)), mode="edge")
    gx = (p[:-1, 1:] - p[:-1, :-1]) / dx
    gz = (p[1:, :-1] - p[:-1, :-1]) / dz
    return np.sqrt(gx * gx + gz * gz)


def deblur_report(m_corrupt, m_corrected, grid, band_lo=0.03, band_hi=0.10, k_c=0.0375):
    a, b = _arr(m_corrupt), _arr(m_corrected)
    if a.shape != b.shape or a.shape != grid.shape:
        raise InvalidArgument(f"fields {a.shape}, {b.shape} do not match grid {grid.shape}")
    nyquist = 0.5 / max(grid.dx, grid.dz)
    for name, val in (("band_lo", band_lo), ("band_hi", band_hi), ("k_c", k_c)):
        if not 0 < val <= nyquist:
            raise InvalidArgument(f"{name}={val} cycles/m lies outside (0, Nyquist={nyquist:.4g}]")
    if band_lo >= band_hi:
        raise InvalidArgument("band_lo must be below band_hi")
    k, s_a = radial_spectrum(a, grid.dx, grid.dz)
    _, s_b = radial_spectrum(b, grid.dx, grid.dz)
    band = (k >= band_lo) & (k <= band_hi)
    hf = k > k_c
    r_band = s_b[band].sum() / s_a[band].sum()
    hf_gain = (s_b[hf].sum() / s_b.sum()) / (s_a[hf].sum() / s_a.sum())
    ga, gb = _grad_mag(a, grid.dx, grid.dz), _grad_mag(b, grid.dx, grid.dz)
    energy = np.mean(gb**2) / np.mean(ga**2)
    p90 = np.percentile(gb, 90) / np.percentile(ga, 90)
    return SpectralReport(k, s_a, s_b, float(r_band), float(hf_gain), float(energy), float(p90))
