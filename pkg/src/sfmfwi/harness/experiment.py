"""Scenario presets and the end-to-end experiment runner.

Output directory layout::

    config.echo        resolved config (runnable as-is)
    manifest.json      written last; its absence marks a partial run
    convergence.csv    step,misfit,rel_l2,ssim,rank,seconds
    truth.sfwi initial.sfwi final.sfwi
    snaps/snap_<step>.sfwi
    gathers/d_obs.sgth (+ d_obs_clean.sgth when noise was added)
"""
from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np
import torch

from .. import __version__, metrics
from ..benchmarks import generate_synthetic_benchmark
from ..errors import ConfigError, InvalidArgument
from ..inversion import InversionConfig, Method, SfmConfig, WaveProblem, default_network, run_inversion
from ..io import load_field, load_gather, save_field, save_gather
from ..model import AcquisitionGeometry, Grid2D, gaussian_smooth, linear_gradient_model, make_ricker
from ..net import Architecture, save_params
from ..optim import Bounds
from ..solver import SolverConfig, add_gaussian_noise, measured_snr_db, simulate_shots, subsample_indices
from .config import echo_config


@dataclass(frozen=True)
class Scenario:
    name: str
    init_kind: str
    snr_db: float | None = None
    n_keep_shots: int | None = None


@dataclass
class Setup:
    truth: object
    model0: object
    geom: AcquisitionGeometry
    wavelet: object
    solver_cfg: SolverConfig
    d_clean: object
    d_obs: object
    scenario: Scenario


def scenario_of(values):
    sc = values["scenario"]
    return Scenario(sc["name"], sc["init_kind"], sc["snr_db"], sc["n_keep_shots"])


def solver_config_of(values, threads=1):
    s = values["solver"]
    return SolverConfig(dt=s["dt"], nt=s["nt"], pml_width=s["pml_width"],
                        pml_reflection_coeff=s["pml_reflection_coeff"], rho0=s["rho0"],
                        cfl_safety=s["cfl_safety"], pml_velocity=s["pml_velocity"],
                        checkpoint_every=s["checkpoint_every"], threads=threads)


def inversion_config_of(values):
    m = values["method"]
    arch = Architecture(base_channels=m["base_channels"],
                        channel_mult=tuple(int(x) for x in str(m["channel_mult"]).split(",")),
                        num_res_blocks=m["num_res_blocks"], groups=m["groups"], out_scale=m["out_scale"],
                        padding_mode=m["padding_mode"])
    cfg = InversionConfig(method=Method(m["name"]), total_physics_steps=m["total_physics_steps"],
                          lr_model=m["lr_model"], lr_net=m["lr_net"], lr_warm=m["lr_warm"],
                          wd_model=m["wd_model"], wd_net=m["wd_net"], lambda_tv=m["lambda_tv"],
                          auto_lambda_factor=m["auto_lambda_factor"], tv_epsilon=m["tv_epsilon"],
                          bounds=Bounds(m["c_min"], m["c_max"]), seed=m["seed"], record_every=m["record_every"],
                          warm_start_steps=m["warm_start_steps"], sfm_warm_target=m["sfm_warm_target"],
                          arch=arch, net_dtype=m["net_dtype"])
    sfm = None
    if cfg.method is Method.SFM:
        sfm = SfmConfig(m["T"], m["K"], reuse_last_proposal=m["reuse_last_proposal"])
    return cfg, sfm


def _truth_of(values):
    g = values["grid"]
    kind = g["benchmark"]
    if kind == "none":
        return None
    if kind == "file":
        return load_field(g["truth_path"])
    grid = Grid2D(g["nx"], g["nz"], g["dx"], g["dz"])
    return generate_synthetic_benchmark(kind, grid, seed=g["model_seed"])


def build_setup(values, threads=1):
    """Truth, initial model, geometry and (degraded) observations for one config."""
    a, sc = values["acquisition"], values["scenario"]
    scenario = scenario_of(values)
    truth = _truth_of(values)
    if sc["initial_path"]:
        model0 = load_field(sc["initial_path"])
    elif scenario.init_kind == "linear":
        v_top = sc["v_top"] if sc["v_top"] is not None else truth.vmin
        v_bottom = sc["v_bottom"] if sc["v_bottom"] is not None else truth.vmax
        model0 = linear_gradient_model(truth.grid, v_top, v_bottom)
    else:
        model0 = gaussian_smooth(truth, sc["smooth_sigma"])
    grid = model0.grid
    if truth is not None and truth.grid != grid:
        raise ConfigError([f"scenario.initial_path: grid {grid} differs from truth grid {truth.grid}"])
    geom = AcquisitionGeometry.surface(grid, a["n_shots"], a["n_receivers"], a["source_depth"],
                                       a["receiver_depth"])
    solver_cfg = solver_config_of(values, threads)
    wavelet = make_ricker(a["f0"], solver_cfg.dt, solver_cfg.nt, a["t0"])
    if a["d_obs_path"]:
        d_clean = load_gather(a["d_obs_path"])
        if d_clean.traces.shape != (geom.n_shots, geom.n_receivers, solver_cfg.nt):
            raise ConfigError([f"acquisition.d_obs_path: gather shape {d_clean.traces.shape} does not match "
                               f"({geom.n_shots}, {geom.n_receivers}, {solver_cfg.nt})"])
    else:
        d_clean = simulate_shots(truth, geom, wavelet, solver_cfg)
    if scenario.n_keep_shots is not None:
        keep = subsample_indices(geom.n_shots, scenario.n_keep_shots)
        geom = AcquisitionGeometry(tuple(geom.source_positions[i] for i in keep), geom.receiver_positions)
        d_clean = d_clean.select_shots(keep)
    d_obs = d_clean
    if scenario.snr_db is not None:
        d_obs = add_gaussian_noise(d_clean, scenario.snr_db, seed=values["method"]["seed"])
    return Setup(truth, model0, geom, wavelet, solver_cfg, d_clean, d_obs, scenario)


def field_checksum(model):
    if model is None:
        return None
    return hashlib.sha256(np.ascontiguousarray(model.values, dtype="<f4").tobytes()).hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def configure_determinism(deterministic, threads):
    torch.set_num_threads(1 if deterministic else max(1, threads))
    torch.use_deterministic_algorithms(bool(deterministic))


def run_experiment(values, out_dir, threads=1, deterministic=False, log=None):
    """Run one configured experiment and write its artifacts into ``out_dir``.

    Returns the manifest dict. The manifest is written last, so a directory
    without one holds a failed or interrupted run.
    """
    started = _now()
    os.makedirs(os.path.join(out_dir, "snaps"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "gathers"), exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.json")
    if os.path.exists(manifest_path):
        os.remove(manifest_path)
    with open(os.path.join(out_dir, "config.echo"), "w") as fh:
        fh.write(echo_config(values))
    configure_determinism(deterministic, threads)
    setup = build_setup(values, 1 if deterministic else threads)
    cfg, sfm = inversion_config_of(values)
    if setup.truth is not None:
        save_field(setup.truth, os.path.join(out_dir, "truth.sfwi"))
    save_field(setup.model0, os.path.join(out_dir, "initial.sfwi"))
    save_gather(setup.d_obs, os.path.join(out_dir, "gathers", "d_obs.sgth"))
    snr = None
    if setup.d_obs is not setup.d_clean:
        save_gather(setup.d_clean, os.path.join(out_dir, "gathers", "d_obs_clean.sgth"))
        snr = measured_snr_db(setup.d_clean, setup.d_obs)

    every = values["output"]["snapshot_every"]
    n = cfg.total_physics_steps

    def snapshot(step, model):
        if every and ((step - 1) % every == 0 or step == n):
            save_field(model, os.path.join(out_dir, "snaps", f"snap_{step}.sfwi"))

    problem = WaveProblem(setup.geom, setup.wavelet, setup.d_obs, setup.solver_cfg)
    net = None
    if cfg.method in (Method.DIP, Method.SFM):
        net = default_network(cfg, setup.model0.values)
    if log:
        log(f"running {cfg.method.value} for {n} physics steps ({setup.scenario.name} scenario)")
    final, record = run_inversion(cfg, setup.model0, problem, truth=setup.truth, snapshot=snapshot, sfm=sfm,
                                  net=net)
    save_field(final, os.path.join(out_dir, "final.sfwi"))
    record.write_csv(os.path.join(out_dir, "convergence.csv"), include_seconds=not deterministic)
    if net is not None and values["output"]["save_network"]:
        save_params(net, os.path.join(out_dir, "network.sfnp"))

    summary = {"final_misfit": record.final_misfit, "initial_misfit": record.initial_misfit,
               "rank": metrics.effective_rank(final.values), "rel_l2": None, "ssim": None}
    if setup.truth is not None:
        summary["rel_l2"] = metrics.rel_l2(final.values, setup.truth.values)
        summary["ssim"] = metrics.ssim(final.values, setup.truth.values)
    manifest = {
        "status": "complete",
        "version": __version__,
        "method": cfg.method.value,
        "scenario": dataclasses.asdict(setup.scenario),
        "seed": cfg.seed,
        "total_physics_steps": n,
        "evaluations": problem.evaluations,
        "sfm": None if sfm is None else {"T": sfm.T, "K": sfm.K},
        "threads": 1 if deterministic else threads,
        "deterministic": bool(deterministic),
        "truth_sha256": field_checksum(setup.truth),
        "measured_snr_db": snr,
        "info": {k: v for k, v in record.info.items() if k != "warm_start_loss"},
        "summary": summary,
        "started": started,
        "finished": _now(),
        "config": values,
    }
    if problem.evaluations != n:
        raise InvalidArgument(f"driver spent {problem.evaluations} evaluations, budget was {n}")
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def read_manifest(run_dir):
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        raise FileNotFoundError(f"{run_dir}: no manifest.json (run missing or incomplete)")
    with open(path) as fh:
        return json.load(fh)
