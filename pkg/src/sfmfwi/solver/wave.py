"""Constant-density acoustic modeling, misfit, and the discrete-adjoint gradient.

The gradient is the exact derivative of the discrete time loop: ``model_gradient``
replays the forward recurrence backwards through ``_adjoint_step``, the literal
transpose of ``_forward_step``. Forward operator outputs are kept for every step,
or regenerated segment by segment from uniform checkpoints.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import DivergenceError, InvalidArgument, ResourceError, StabilityError
from ..model import AcquisitionGeometry, RickerWavelet, ShotGather, VelocityModel
from ._kernels import C1, C2, H, _adjoint_step, _forward_step

# stability constant of the 8th-order Laplacian: sqrt(sum|c| / 2) per axis pair
STENCIL_ABS_SUM = abs(C2[0]) + 2.0 * np.abs(C2[1:]).sum()
C_STENCIL = math.sqrt(STENCIL_ABS_SUM / 2.0)
FINITE_CHECK_EVERY = 50


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    nt: int
    pml_width: int = 16
    pml_reflection_coeff: float = 1e-3
    spatial_order: int = 8
    time_order: int = 2
    rho0: float = 1.0
    cfl_safety: float = 0.9
    # velocity used for the PML damping profile; None -> max of the model being run
    pml_velocity: float | None = None
    # C-PML frequency shift alpha_max = pi * pml_freq; None -> wavelet f0
    pml_freq: float | None = None
    # 0 keeps every step's operator output; >0 stores full states every n steps
    checkpoint_every: int = 0
    max_wavefield_bytes: int = 2 * 1024**3
    threads: int = 1

    def __post_init__(self):
        if self.spatial_order != 8 or self.time_order != 2:
            raise InvalidArgument("only spatial_order=8 and time_order=2 are supported")
        if not (self.dt > 0) or int(self.nt) < 2:
            raise InvalidArgument(f"need dt > 0 and nt >= 2, got dt={self.dt}, nt={self.nt}")
        if self.pml_width < 8:
            raise InvalidArgument(f"pml_width must be >= 8, got {self.pml_width}")
        if not (0 < self.pml_reflection_coeff < 1):
            raise InvalidArgument("pml_reflection_coeff must lie in (0, 1)")
        if not (0 < self.cfl_safety <= 1):
            raise InvalidArgument("cfl_safety must lie in (0, 1]")
        if self.checkpoint_every < 0 or self.threads < 1:
            raise InvalidArgument("checkpoint_every must be >= 0 and threads >= 1")


def max_stable_dt(v_max, dx, dz, cfl_safety=1.0):
    return cfl_safety * min(dx, dz) / (v_max * C_STENCIL)


def check_cfl(model: VelocityModel, cfg: SolverConfig):
    g = model.grid
    limit = max_stable_dt(model.vmax, g.dx, g.dz, cfg.cfl_safety)
    if cfg.dt > limit:
        raise StabilityError(
            f"dt={cfg.dt:.6g}s violates CFL for v_max={model.vmax:.1f} m/s; need dt <= {limit:.6g}s", limit)


def pml_profiles(n, width, h, v_pml, reflection, alpha_max, dt):
    """C-PML (a, b) coefficients along one padded axis of length ``n``.

    Quadratic damping ``d0 (dist/L)^2`` with ``d0 = 3 v ln(1/R) / (2L)`` and a
    frequency shift decreasing linearly from ``alpha_max`` at the inner edge.
    Interior nodes get ``a = b = 0`` so the memory variables stay zero there.
    """
    L = width * h
    d0 = 3.0 * v_pml * math.log(1.0 / reflection) / (2.0 * L)
    i = np.arange(n)
    dist = np.zeros(n)
    dist[:width] = (width - i[:width]) / width
    dist[n - width:] = (i[n - width:] - (n - width - 1)) / width
    d = d0 * dist**2
    alpha = alpha_max * (1.0 - dist)
    b = np.exp(-(d + alpha) * dt)
    a = np.where(d > 0, d / (d + alpha) * (b - 1.0), 0.0)
    inside = dist == 0
    a[inside] = 0.0
    b[inside] = 0.0
    return a, b


class _Propagator:
    """Per-run constants shared by all shots."""

    def __init__(self, model: VelocityModel, geom: AcquisitionGeometry, wavelet: RickerWavelet, cfg: SolverConfig):
        if abs(wavelet.dt - cfg.dt) > 1e-12 * cfg.dt:
            raise InvalidArgument(f"wavelet dt={wavelet.dt} differs from solver dt={cfg.dt}")
        geom.validate(model.grid)
        check_cfl(model, cfg)
        g = model.grid
        w = cfg.pml_width
        self.cfg, self.grid, self.w = cfg, g, w
        self.nt = int(cfg.nt)
        self.c_pad = np.pad(model.values, w, mode="edge")
        self.A = cfg.dt**2 * self.c_pad**2
        self.shape = self.c_pad.shape
        v_pml = cfg.pml_velocity if cfg.pml_velocity is not None else model.vmax
        f_pml = cfg.pml_freq if cfg.pml_freq is not None else wavelet.f0
        amax = math.pi * f_pml
        self.ax, self.bx = pml_profiles(self.shape[1], w, g.dx, v_pml, cfg.pml_reflection_coeff, amax, cfg.dt)
        self.az, self.bz = pml_profiles(self.shape[0], w, g.dz, v_pml, cfg.pml_reflection_coeff, amax, cfg.dt)
        self.idx, self.idz = 1.0 / g.dx, 1.0 / g.dz
        src = np.zeros(self.nt)
        n = min(self.nt, wavelet.nt)
        src[:n] = wavelet.samples[:n]
        self.wavelet = src
        self.src_scale = cfg.dt**2 * cfg.rho0 / (g.dx * g.dz)
        self.sources = [(z + w + H, x + w + H) for x, z in geom.source_positions]
        self.rec_z = np.array([z + w + H for _, z in geom.receiver_positions])
        self.rec_x = np.array([x + w + H for x, _ in geom.receiver_positions])

    def _fresh_state(self):
        nz, nx = self.shape
        return [np.zeros((nz + 2 * H, nx + 2 * H)) for _ in range(6)]

    def _steps(self, state, shot, n0, n1, traces=None, W=None):
        """Run forward steps n0..n1-1; records u^{n+1} into ``traces[:, n+1]``."""
        u_prev, u_cur, psx, psz, zex, zez = state
        sz, sx = self.sources[shot]
        q = self.src_scale * self.c_pad[sz - H, sx - H] ** 2
        Wn = np.empty(self.shape)
        for n in range(n0, n1):
            out = W[n - n0] if W is not None else Wn
            _forward_step(u_prev, u_cur, psx, psz, zex, zez, self.ax, self.bx, self.az, self.bz,
                          self.A, out, self.w, self.idx, self.idz)
            u_prev[sz, sx] += q * self.wavelet[n]
            u_prev, u_cur = u_cur, u_prev
            if traces is not None:
                traces[:, n + 1] = u_cur[self.rec_z, self.rec_x]
            if (n + 1) % FINITE_CHECK_EVERY == 0 or n == self.nt - 2:
                if not np.isfinite(u_cur[sz, sx]) or not np.isfinite(np.abs(u_cur).max()):
                    raise DivergenceError(f"wavefield became non-finite at step {n + 1}", n + 1)
        state[0], state[1] = u_prev, u_cur
        return state

    def forward(self, shot):
        traces = np.zeros((len(self.rec_z), self.nt))
        self._steps(self._fresh_state(), shot, 0, self.nt - 1, traces=traces)
        return traces

    def _check_memory(self):
        per_step = self.shape[0] * self.shape[1] * 8
        need = per_step * self.nt * max(1, self.cfg.threads)
        if self.cfg.checkpoint_every == 0 and need > self.cfg.max_wavefield_bytes:
            suggest = max(1, int(math.sqrt(self.nt)))
            raise ResourceError(
                f"storing {self.nt} wavefield steps needs {need / 2**20:.0f} MiB "
                f"(limit {self.cfg.max_wavefield_bytes / 2**20:.0f} MiB); set checkpoint_every={suggest}")

    def gradient(self, shot, d_obs):
        """Misfit and gradient w.r.t. the padded velocity for one shot."""
        nsteps = self.nt - 1
        C = self.cfg.checkpoint_every or nsteps
        traces = np.zeros((len(self.rec_z), self.nt))
        state = self._fresh_state()
        checkpoints = {}
        W = None
        for n0 in range(0, nsteps, C):
            n1 = min(n0 + C, nsteps)
            if self.cfg.checkpoint_every:
                checkpoints[n0] = [a.copy() for a in state]
                self._steps(state, shot, n0, n1, traces=traces)
            else:
                W = np.empty((n1 - n0,) + self.shape)
                self._steps(state, shot, n0, n1, traces=traces, W=W)
        res = traces - d_obs
        misfit = 0.5 * float(np.sum(res * res))

        nz, nx = self.shape
        lam_next = np.zeros((nz + 2 * H, nx + 2 * H))
        lam_cur = np.zeros_like(lam_next)
        pbx, pbz, zbx, zbz, tbx, tbz, gx, gz = (np.zeros_like(lam_next) for _ in range(8))
        gA = np.zeros(self.shape)
        sz, sx = self.sources[shot]
        src_acc = 0.0
        lam_next[self.rec_z, self.rec_x] += res[:, nsteps]
        for n0 in reversed(range(0, nsteps, C)):
            n1 = min(n0 + C, nsteps)
            if self.cfg.checkpoint_every:
                state = [a.copy() for a in checkpoints.pop(n0)]
                W = np.empty((n1 - n0,) + self.shape)
                self._steps(state, shot, n0, n1, W=W)
            for n in range(n1 - 1, n0 - 1, -1):
                lam_cur[self.rec_z, self.rec_x] += res[:, n]
                src_acc += self.wavelet[n] * lam_next[sz, sx]
                _adjoint_step(lam_next, lam_cur, pbx, pbz, zbx, zbz, self.ax, self.bx, self.az, self.bz,
                              self.A, W[n - n0], gA, tbx, tbz, gx, gz, self.w, self.idx, self.idz)
                lam_next, lam_cur = lam_cur, lam_next
        grad = 2.0 * self.cfg.dt**2 * self.c_pad * gA
        grad[sz - H, sx - H] += 2.0 * self.src_scale * self.c_pad[sz - H, sx - H] * src_acc
        return misfit, grad

    def fold(self, g_pad):
        """Adjoint of edge-replication padding: pad gradients back onto the model grid."""
        w = self.w
        g = g_pad.copy()
        g[w, :] += g[:w, :].sum(axis=0)
        g[-w - 1, :] += g[-w:, :].sum(axis=0)
        g[:, w] += g[:, :w].sum(axis=1)
        g[:, -w - 1] += g[:, -w:].sum(axis=1)
        return g[w:-w, w:-w].copy()


def _map_shots(fn, n_shots, threads):
    if threads <= 1 or n_shots == 1:
        return [fn(i) for i in range(n_shots)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_shots)))


def simulate_shots(model: VelocityModel, geom: AcquisitionGeometry, wavelet: RickerWavelet, cfg: SolverConfig):
    """Pressure at the receivers for every shot; trace sample n is u at t = n*dt."""
    prop = _Propagator(model, geom, wavelet, cfg)
    traces = _map_shots(prop.forward, geom.n_shots, cfg.threads)
    return ShotGather(np.stack(traces), cfg.dt)


def _check_compatible(a: ShotGather, b: ShotGather):
    if a.traces.shape != b.traces.shape:
        raise InvalidArgument(f"gather shapes differ: {a.traces.shape} vs {b.traces.shape}")


def data_misfit(d_syn: ShotGather, d_obs: ShotGather):
    """``0.5 * sum(residual^2)`` over shots, receivers and samples (no dt weighting)."""
    _check_compatible(d_syn, d_obs)
    r = d_syn.traces - d_obs.traces
    return 0.5 * float(np.sum(r * r))


def model_gradient(model: VelocityModel, geom: AcquisitionGeometry, wavelet: RickerWavelet,
                   d_obs: ShotGather, cfg: SolverConfig):
    """Return ``(misfit, dmisfit/dvelocity)``; the gradient has the model's (nz, nx) shape."""
    prop = _Propagator(model, geom, wavelet, cfg)
    expected = (geom.n_shots, geom.n_receivers, prop.nt)
    if d_obs.traces.shape != expected:
        raise InvalidArgument(f"observed gather shape {d_obs.traces.shape} does not match {expected}")
    prop._check_memory()
    results = _map_shots(lambda i: prop.gradient(i, d_obs.traces[i]), geom.n_shots, cfg.threads)
    misfit = 0.0
    g_pad = np.zeros(prop.shape)
    # shot order reduction keeps the sum deterministic regardless of threads
    for phi, g in results:
        misfit += phi
        g_pad += g
    return misfit, prop.fold(g_pad)


def add_gaussian_noise(gather: ShotGather, snr_db, seed):
    """White Gaussian noise with variance ``mean(d^2) / 10^(snr_db/10)``."""
    tr = gather.traces
    if tr.size == 0:
        raise InvalidArgument("cannot add noise to an empty gather")
    p_signal = float(np.mean(tr * tr))
    sigma = math.sqrt(p_signal / 10.0 ** (snr_db / 10.0))
    rng = np.random.default_rng(int(seed))
    return ShotGather(tr + sigma * rng.standard_normal(tr.shape), gather.dt)


def measured_snr_db(clean: ShotGather, noisy: ShotGather):
    noise = noisy.traces - clean.traces
    return 10.0 * math.log10(np.mean(clean.traces**2) / np.mean(noise**2))


def subsample_indices(n_shots, n_keep):
    if not (1 <= n_keep <= n_shots):
        raise InvalidArgument(f"n_keep must lie in [1, {n_shots}], got {n_keep}")
    if n_keep == 1:
        return [int(math.floor((n_shots - 1) / 2 + 0.5))]
    return [int(math.floor(i * (n_shots - 1) / (n_keep - 1) + 0.5)) for i in range(n_keep)]


def subsample_shots(geom: AcquisitionGeometry, n_keep):
    """Keep ``n_keep`` evenly spread sources; the first and last are always kept."""
    idx = subsample_indices(geom.n_shots, n_keep)
    return AcquisitionGeometry(tuple(geom.source_positions[i] for i in idx), geom.receiver_positions)
