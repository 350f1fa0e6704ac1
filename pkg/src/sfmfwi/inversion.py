"""Inversion drivers: conventional FWI, TV-regularised FWI, DIP-FWI and SFM-FWI.

Every driver spends exactly ``total_physics_steps`` forward+adjoint evaluations,
counted by :class:`WaveProblem`.
"""
from __future__ import annotations

import csv
import dataclasses
import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import metrics
from .errors import InvalidArgument
from .model import AcquisitionGeometry, RickerWavelet, ShotGather, VelocityModel
from .net import Architecture, FlowUNet, backprop_params, interpolate_path, warm_start_loss_dip, warm_start_loss_sfm
from .optim import AdamWState, Bounds, adamw_step, clamp, tv_array
from .solver import SolverConfig, data_misfit, model_gradient, simulate_shots


class Method(str, enum.Enum):
    FWI = "FWI"
    FWI_TV = "FWI_TV"
    DIP = "DIP"
    SFM = "SFM"


@dataclass(frozen=True)
class SfmConfig:
    T: int = 30
    K: int = 100
    # reuse the last inner proposal for the target update instead of a fresh network pass
    reuse_last_proposal: bool = False

    def __post_init__(self):
        if self.T < 2:
            raise InvalidArgument(f"SFM needs T >= 2 (t = s/(T-1)), got T={self.T}")
        if self.K < 1:
            raise InvalidArgument(f"SFM needs K >= 1, got K={self.K}")


@dataclass(frozen=True)
class InversionConfig:
    method: Method = Method.FWI
    total_physics_steps: int = 300
    lr_model: float = 10.0
    lr_net: float = 2e-4
    lr_warm: float | None = None
    wd_model: float = 0.0
    wd_net: float = 1e-4
    lambda_tv: float = 0.0
    # when set, lambda_tv is replaced by misfit0 / TV0 * auto_lambda_factor
    auto_lambda_factor: float | None = None
    tv_epsilon: float = 1e-3
    bounds: Bounds = Bounds(1000.0, 5000.0)
    seed: int = 0
    record_every: int = 10
    warm_start_steps: int = 200
    # "zero": ||v(m0,0)||^2, "model": ||v(m0,0) - m0||^2
    sfm_warm_target: str = "zero"
    arch: Architecture = Architecture()
    net_dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        problems = []
        if self.total_physics_steps < 1:
            problems.append("total_physics_steps must be >= 1")
        if self.record_every < 1:
            problems.append("record_every must be >= 1")
        if self.lambda_tv < 0:
            problems.append("lambda_tv must be >= 0")
        if self.warm_start_steps < 0:
            problems.append("warm_start_steps must be >= 0")
        if self.sfm_warm_target not in ("zero", "model"):
            problems.append("sfm_warm_target must be 'zero' or 'model'")
        if not (self.lr_model > 0 and self.lr_net > 0):
            problems.append("learning rates must be positive")
        if problems:
            raise InvalidArgument("; ".join(problems))

    def replace(self, **kw):
        return dataclasses.replace(self, **kw)


def check_budget(cfg: InversionConfig, sfm: SfmConfig):
    if sfm.T * sfm.K != cfg.total_physics_steps:
        raise InvalidArgument(
            f"(T={sfm.T}, K={sfm.K}) gives {sfm.T * sfm.K} physics steps, budget is {cfg.total_physics_steps}")


class WaveProblem:
    """Observed data plus the forward operator; counts gradient evaluations."""

    def __init__(self, geom: AcquisitionGeometry, wavelet: RickerWavelet, d_obs: ShotGather, solver_cfg: SolverConfig):
        self.geom, self.wavelet, self.d_obs, self.solver_cfg = geom, wavelet, d_obs, solver_cfg
        self.evaluations = 0

    def evaluate(self, model: VelocityModel):
        self.evaluations += 1
        return model_gradient(model, self.geom, self.wavelet, self.d_obs, self.solver_cfg)

    def misfit(self, model: VelocityModel):
        """Forward-only misfit; not counted as a physics step."""
        return data_misfit(simulate_shots(model, self.geom, self.wavelet, self.solver_cfg), self.d_obs)


CSV_HEADER = ("step", "misfit", "rel_l2", "ssim", "rank", "seconds")


@dataclass
class ConvergenceRecord:
    rows: list = field(default_factory=list)
    evaluations: int = 0
    final_misfit: float = math.nan
    info: dict = field(default_factory=dict)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    @property
    def initial_misfit(self):
        return self.rows[0]["misfit"]

    def write_csv(self, path, include_seconds=True):
        """Write the record; ``include_seconds=False`` zeroes wall time for byte-reproducible files."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow([r["step"], repr(r["misfit"]), _fmt(r["rel_l2"]), _fmt(r["ssim"]), r["rank"],
                            repr(r["seconds"]) if include_seconds else "0.0"])

    @classmethod
    def read_csv(cls, path):
        rec = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                rec.rows.append({"step": int(row["step"]), "misfit": float(row["misfit"]),
                                 "rel_l2": float(row["rel_l2"]) if row["rel_l2"] else math.nan,
                                 "ssim": float(row["ssim"]) if row["ssim"] else math.nan,
                                 "rank": int(row["rank"]), "seconds": float(row["seconds"])})
        return rec


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else repr(float(v))


class _Recorder:
    def __init__(self, cfg: InversionConfig, truth, snapshot):
        self.cfg, self.truth, self.snapshot = cfg, truth, snapshot
        self.record = ConvergenceRecord()
        self.t0 = time.perf_counter()

    def __call__(self, step, misfit, emitted: VelocityModel):
        n = self.cfg.total_physics_steps
        if (step - 1) % self.cfg.record_every and step != n:
            return
        row = {"step": step, "misfit": float(misfit), "rel_l2": math.nan, "ssim": math.nan,
               "rank": metrics.effective_rank(emitted.values), "seconds": time.perf_counter() - self.t0}
        if self.truth is not None:
            row["rel_l2"] = metrics.rel_l2(emitted.values, self.truth.values)
            row["ssim"] = metrics.ssim(emitted.values, self.truth.values)
        self.record.rows.append(row)
        if self.snapshot is not None:
            self.snapshot(step, emitted)

    def finish(self, problem: WaveProblem, final: VelocityModel):
        self.record.evaluations = problem.evaluations
        self.record.final_misfit = problem.misfit(final)
        return final, self.record


def auto_lambda(misfit0, tv0, factor):
    return misfit0 / tv0 * factor


def _run_model_space(cfg, model0, problem, truth, snapshot, lam):
    rec = _Recorder(cfg, truth, snapshot)
    g = model0.grid
    m = np.array(model0.values, dtype=np.float64)
    opt = AdamWState(lr=cfg.lr_model, weight_decay=cfg.wd_model)
    for step in range(1, cfg.total_physics_steps + 1):
        current = model0.with_values(m)
        phi, grad = problem.evaluate(current)
        if lam is None:
            tv0, _ = tv_array(m, g.dx, g.dz, cfg.tv_epsilon)
            lam = auto_lambda(phi, tv0, cfg.auto_lambda_factor)
            rec.record.info["lambda_tv"] = lam
        if lam:
            _, tv_grad = tv_array(m, g.dx, g.dz, cfg.tv_epsilon)
            grad = grad + lam * tv_grad
        rec(step, phi, current)
        adamw_step(opt, [m], [grad], names=["velocity"])
        m = clamp(m, cfg.bounds)
    return rec.finish(problem, model0.with_values(m))


def run_conventional_fwi(cfg: InversionConfig, model0: VelocityModel, problem: WaveProblem, truth=None,
                         snapshot=None):
    """Plain least-squares FWI: gradient -> AdamW on velocities -> box projection."""
    return _run_model_space(cfg, model0, problem, truth, snapshot, lam=0.0)


def run_tv_fwi(cfg: InversionConfig, model0: VelocityModel, problem: WaveProblem, truth=None, snapshot=None):
    """FWI with ``lambda * TV`` added to the objective; see ``auto_lambda_factor``."""
    lam = None if cfg.auto_lambda_factor is not None else cfg.lambda_tv
    final, record = _run_model_space(cfg, model0, problem, truth, snapshot, lam=lam)
    record.info.setdefault("lambda_tv", cfg.lambda_tv)
    return final, record


def _torch_dtype(name):
    return {"float32": torch.float32, "float64": torch.float64}[name]


def build_network(cfg: InversionConfig, m0_values, out_shift=0.0):
    arch = dataclasses.replace(cfg.arch, in_shift=float(np.mean(m0_values)), out_shift=float(out_shift))
    return FlowUNet(arch, seed=cfg.seed, dtype=_torch_dtype(cfg.net_dtype))


def default_network(cfg: InversionConfig, m0_values):
    """The network a DIP or SFM driver builds when none is passed in.

    DIP emits velocities directly, so its output is centred on mean(m0); the
    SFM flow emits updates and stays centred on zero.
    """
    shift = float(np.mean(m0_values)) if cfg.method is Method.DIP else 0.0
    return build_network(cfg, m0_values, out_shift=shift)


def _warm_start(net, loss_fn, steps, lr, wd):
    opt = AdamWState(lr=lr, weight_decay=wd)
    params = list(net.parameters())
    history = []
    for _ in range(steps):
        loss = loss_fn()
        grads = backprop_params(loss, torch.ones_like(loss), params)
        with torch.no_grad():
            adamw_step(opt, [p.data for p in params], grads)
        history.append(loss.item())
    return history


def warm_start_dip(cfg: InversionConfig, net, z, m0):
    return _warm_start(net, lambda: warm_start_loss_dip(net, z, m0), cfg.warm_start_steps,
                       cfg.lr_warm or cfg.lr_net, cfg.wd_net)


def warm_start_sfm(cfg: InversionConfig, net, m0):
    target = None if cfg.sfm_warm_target == "model" else np.zeros_like(m0)
    return _warm_start(net, lambda: warm_start_loss_sfm(net, m0, target), cfg.warm_start_steps,
                       cfg.lr_warm or cfg.lr_net, cfg.wd_net)


def run_dip_fwi(cfg: InversionConfig, model0: VelocityModel, problem: WaveProblem, truth=None, snapshot=None,
                net=None):
    """Optimise network weights so that ``g(z)`` with ``z = m0`` fits the data."""
    rec = _Recorder(cfg, truth, snapshot)
    m0 = np.array(model0.values, dtype=np.float64)
    if net is None:
        net = default_network(cfg.replace(method=Method.DIP), m0)
    z = torch.from_numpy(m0)
    rec.record.info["warm_start_loss"] = warm_start_dip(cfg, net, z, m0)
    params = list(net.parameters())
    opt = AdamWState(lr=cfg.lr_net, weight_decay=cfg.wd_net)
    for step in range(1, cfg.total_physics_steps + 1):
        m = net(z, 0.0).to(torch.float64)
        values = m.detach().numpy()
        phi, grad = problem.evaluate(model0.with_values(values))
        grads = backprop_params(m, grad, params)
        with torch.no_grad():
            adamw_step(opt, [p.data for p in params], grads)
        rec(step, phi, model0.with_values(clamp(values, cfg.bounds)))
    with torch.no_grad():
        final = clamp(net(z, 0.0).to(torch.float64).numpy(), cfg.bounds)
    return rec.finish(problem, model0.with_values(final))


def run_sfm_fwi(cfg: InversionConfig, sfm: SfmConfig, model0: VelocityModel, problem: WaveProblem, truth=None,
                snapshot=None, net=None, trace=None):
    """Self-flow-matching FWI.

    For ``s = 0..T-1`` with ``t = s/(T-1)``: form ``m_t = (1-t) m0 + t m1_hat``,
    train the flow network for ``K`` steps on the data misfit of the proposal
    ``m_t + (1-t) v(m_t, t)``, then move the target ``m1_hat`` to that proposal.
    ``trace``, if given, is called with ``(s, t, m_t, m1_hat)`` after every outer step.
    """
    check_budget(cfg, sfm)
    rec = _Recorder(cfg, truth, snapshot)
    m0 = torch.from_numpy(np.array(model0.values, dtype=np.float64))
    if net is None:
        net = default_network(cfg.replace(method=Method.SFM), m0.numpy())
    if cfg.warm_start_steps:
        rec.record.info["warm_start_loss"] = warm_start_sfm(cfg, net, m0.numpy())
    params = list(net.parameters())
    opt = AdamWState(lr=cfg.lr_net, weight_decay=cfg.wd_net)
    m1_hat = m0.clone()
    step = 0
    for s in range(sfm.T):
        t = s / (sfm.T - 1)
        m_t = interpolate_path(m0, m1_hat, t)
        proposal = None
        for k in range(sfm.K):
            v = net(m_t, t).to(torch.float64)
            proposal = m_t + (1.0 - t) * v
            values = proposal.detach().numpy()
            phi, grad = problem.evaluate(model0.with_values(values))
            grads = backprop_params(proposal, grad, params)
            with torch.no_grad():
                adamw_step(opt, [p.data for p in params], grads)
            step += 1
            rec(step, phi, model0.with_values(clamp(values, cfg.bounds)))
        with torch.no_grad():
            if sfm.reuse_last_proposal:
                m1_hat = proposal.detach().clone()
            else:
                m1_hat = m_t + (1.0 - t) * net(m_t, t).to(torch.float64)
        if trace is not None:
            trace(s, t, m_t.numpy().copy(), m1_hat.numpy().copy())
    final = model0.with_values(clamp(m1_hat.numpy(), cfg.bounds))
    return rec.finish(problem, final)


def run_inversion(cfg: InversionConfig, model0, problem, truth=None, snapshot=None, sfm: SfmConfig | None = None,
                  trace=None, net=None):
    """Dispatch on ``cfg.method``; ``net`` optionally supplies the DIP/SFM network."""
    torch.manual_seed(cfg.seed)
    if cfg.method is Method.FWI:
        return run_conventional_fwi(cfg, model0, problem, truth, snapshot)
    if cfg.method is Method.FWI_TV:
        return run_tv_fwi(cfg, model0, problem, truth, snapshot)
    if cfg.method is Method.DIP:
        return run_dip_fwi(cfg, model0, problem, truth, snapshot, net=net)
    if sfm is None:
        raise InvalidArgument("SFM method needs an SfmConfig")
    return run_sfm_fwi(cfg, sfm, model0, problem, truth, snapshot, net=net, trace=trace)


def ablation_grid(cfg: InversionConfig, pairs, model0, problem_factory, truth=None):
    """One SFM run per ``(T, K)`` pair at a fixed budget; returns a list of result dicts."""
    pairs = [tuple(int(v) for v in p) for p in pairs]
    for T, K in pairs:
        if T * K != cfg.total_physics_steps:
            raise InvalidArgument(f"pair (T={T}, K={K}) uses {T * K} steps, budget is {cfg.total_physics_steps}")
    out = []
    for T, K in pairs:
        final, record = run_sfm_fwi(cfg, SfmConfig(T, K), model0, problem_factory(), truth)
        row = {"T": T, "K": K, "final_misfit": record.final_misfit, "evaluations": record.evaluations,
               "rel_l2": math.nan, "ssim": math.nan, "record": record, "model": final}
        if truth is not None:
            row["rel_l2"] = metrics.rel_l2(final.values, truth.values)
            row["ssim"] = metrics.ssim(final.values, truth.values)
        out.append(row)
    return out


def write_ablation_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "T", "K", "rel_l2", "ssim", "final_misfit", "evaluations"])
        for r in rows:
            w.writerow([f"({r['T']},{r['K']})", r["T"], r["K"], _fmt(r["rel_l2"]), _fmt(r["ssim"]),
                        repr(r["final_misfit"]), r["evaluations"]])
