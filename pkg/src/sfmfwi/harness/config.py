"""Sectioned key/value experiment configs.

Every key has a type, a default and a unit. ``load_config`` collects every
problem before failing, and ``echo_config`` writes the fully resolved values
back out in the same format, so an echo is itself a runnable config.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass

from ..errors import ConfigError

SCENARIOS = ("clean", "poor_init", "noisy", "sparse_shots")
METHODS = ("FWI", "FWI_TV", "DIP", "SFM")


@dataclass(frozen=True)
class Key:
    kind: str  # int, float, str, bool, optfloat, optint, optstr
    default: object
    doc: str
    choices: tuple = ()


SCHEMA = {
    "grid": {
        "benchmark": Key("str", "two_layer", "synthetic truth generator, or 'file' (truth_path) or 'none'",
                         ("two_layer", "three_layer", "lens", "random_layers", "file", "none")),
        "truth_path": Key("optstr", None, "SFWI truth model when benchmark = file"),
        "nx": Key("int", 64, "cells along x"),
        "nz": Key("int", 64, "cells along depth"),
        "dx": Key("float", 10.0, "m"),
        "dz": Key("float", 10.0, "m"),
        "model_seed": Key("int", 0, "seed for seeded generators"),
    },
    "acquisition": {
        "n_shots": Key("int", 8, "sources spread evenly along the surface line"),
        "n_receivers": Key("int", 32, "receivers spread evenly along the surface line"),
        "source_depth": Key("int", 1, "cells"),
        "receiver_depth": Key("int", 1, "cells"),
        "f0": Key("float", 15.0, "Hz, Ricker dominant frequency"),
        "t0": Key("optfloat", None, "s, Ricker delay; empty means 1.5/f0"),
        "d_obs_path": Key("optstr", None, "SGTH observed data; replaces synthesis when set"),
    },
    "solver": {
        "dt": Key("float", 1e-3, "s"),
        "nt": Key("int", 700, "time samples"),
        "pml_width": Key("int", 12, "cells"),
        "pml_reflection_coeff": Key("float", 1e-3, "target PML reflection"),
        "pml_velocity": Key("optfloat", 4500.0, "m/s used for PML damping; empty means model max"),
        "rho0": Key("float", 1.0, "kg/m^3, source scaling"),
        "cfl_safety": Key("float", 0.9, "fraction of the stability limit"),
        "checkpoint_every": Key("int", 0, "steps between stored states; 0 stores every step"),
    },
    "method": {
        "name": Key("str", "SFM", "inversion driver", METHODS),
        "total_physics_steps": Key("optint", None, "forward+adjoint budget; empty means T*K (SFM) or 300"),
        "seed": Key("int", 0, "network init and noise seed"),
        "lr_model": Key("float", 10.0, "m/s per step, AdamW on velocities"),
        "lr_net": Key("float", 2e-4, "AdamW on network weights"),
        "lr_warm": Key("optfloat", None, "warm-start rate; empty means lr_net"),
        "wd_model": Key("float", 0.0, "decoupled weight decay on velocities"),
        "wd_net": Key("float", 1e-4, "decoupled weight decay on network weights"),
        "lambda_tv": Key("float", 0.0, "TV weight"),
        "auto_lambda_factor": Key("optfloat", None, "if set, lambda = misfit0 / TV0 * factor"),
        "tv_epsilon": Key("float", 1e-3, "TV smoothing, (m/s)/m"),
        "c_min": Key("float", 1400.0, "m/s lower bound"),
        "c_max": Key("optfloat", 4800.0, "m/s upper bound; empty means none"),
        "T": Key("optint", None, "SFM outer steps; empty means the scenario default"),
        "K": Key("optint", None, "SFM inner steps; empty means the scenario default"),
        "reuse_last_proposal": Key("bool", False, "SFM target update reuses the last inner proposal"),
        "warm_start_steps": Key("int", 200, "network warm-start iterations"),
        "sfm_warm_target": Key("str", "zero", "SFM warm-start target", ("zero", "model")),
        "record_every": Key("int", 10, "physics steps between convergence rows"),
        "base_channels": Key("int", 16, "network width"),
        "channel_mult": Key("str", "1,2,2", "per-level channel multipliers"),
        "num_res_blocks": Key("int", 2, "residual blocks per level"),
        "groups": Key("int", 8, "group-norm groups"),
        "out_scale": Key("float", 1000.0, "m/s per unit network output"),
        "padding_mode": Key("str", "zeros", "conv padding", ("zeros", "replicate")),
        "net_dtype": Key("str", "float32", "network precision", ("float32", "float64")),
    },
    "scenario": {
        "name": Key("str", "clean", "stress preset", SCENARIOS),
        "init_kind": Key("optstr", None, "smoothed or linear; empty means the preset's choice"),
        "smooth_sigma": Key("float", 6.0, "cells, Gaussian smoothing of the truth"),
        "v_top": Key("optfloat", None, "m/s, linear init at z=0; empty means truth min"),
        "v_bottom": Key("optfloat", None, "m/s, linear init at z=nz-1; empty means truth max"),
        "initial_path": Key("optstr", None, "SFWI initial model; replaces init_kind when set"),
        "snr_db": Key("optfloat", None, "dB, noisy preset; empty means 3.5"),
        "n_keep_shots": Key("optint", None, "sparse preset; empty means 5"),
    },
    "output": {
        "snapshot_every": Key("optint", None, "steps between snapshots; empty means record_every, 0 disables"),
        "save_network": Key("bool", False, "write the trained network parameters (DIP/SFM)"),
    },
}


def _parse(kind, raw):
    raw = raw.strip()
    if kind.startswith("opt"):
        if raw == "" or raw.lower() == "none":
            return None
        kind = kind[3:]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def defaults():
    return {sec: {k: entry.default for k, entry in keys.items()} for sec, keys in SCHEMA.items()}


def parse_config_text(text, overrides=None):
    """Parse config text into ``{section: {key: value}}`` with defaults filled in.

    ``overrides`` maps ``"section.key"`` to raw strings and is applied last.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    cp.optionxform = str
    problems = []
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([f"syntax: {exc}"]) from exc
    raw = {sec: dict(cp[sec]) for sec in cp.sections()}
    for dotted, value in (overrides or {}).items():
        sec, _, key = dotted.partition(".")
        raw.setdefault(sec, {})[key] = str(value)
    values = defaults()
    for sec, items in raw.items():
        if sec not in SCHEMA:
            problems.append(f"[{sec}]: unknown section (expected one of {', '.join(SCHEMA)})")
            continue
        for key, text_value in items.items():
            entry = SCHEMA[sec].get(key)
            if entry is None:
                problems.append(f"{sec}.{key}: unknown key")
                continue
            try:
                value = _parse(entry.kind, text_value)
            except ValueError:
                problems.append(f"{sec}.{key}: cannot read {text_value!r} as {entry.kind}")
                continue
            if entry.choices and value is not None and value not in entry.choices:
                problems.append(f"{sec}.{key}: {value!r} is not one of {', '.join(entry.choices)}")
                continue
            values[sec][key] = value
    problems += _resolve(values)
    if problems:
        raise ConfigError(problems)
    return values


def _resolve(v):
    """Fill scenario-dependent defaults in place and return cross-key problems."""
    p = []
    g, a, s, m, sc = v["grid"], v["acquisition"], v["solver"], v["method"], v["scenario"]
    if g["nx"] < 8 or g["nz"] < 8:
        p.append("grid.nx/grid.nz: must be >= 8")
    if g["dx"] <= 0 or g["dz"] <= 0:
        p.append("grid.dx/grid.dz: must be positive")
    if g["benchmark"] == "file" and not g["truth_path"]:
        p.append("grid.truth_path: required when benchmark = file")
    if g["benchmark"] == "none" and not (a["d_obs_path"] and sc["initial_path"]):
        p.append("grid.benchmark: 'none' needs acquisition.d_obs_path and scenario.initial_path")
    if a["n_shots"] < 1 or a["n_receivers"] < 1:
        p.append("acquisition.n_shots/n_receivers: must be >= 1")
    if a["f0"] <= 0:
        p.append("acquisition.f0: must be positive")
    if s["dt"] <= 0 or s["nt"] < 2:
        p.append("solver.dt/solver.nt: need dt > 0 and nt >= 2")
    if s["pml_width"] < 8:
        p.append("solver.pml_width: must be >= 8")
    if not 0 < s["cfl_safety"] <= 1:
        p.append("solver.cfl_safety: must lie in (0, 1]")
    try:
        mult = tuple(int(x) for x in str(m["channel_mult"]).split(","))
        if not mult or min(mult) < 1:
            raise ValueError
    except ValueError:
        p.append(f"method.channel_mult: expected comma-separated positive ints, got {m['channel_mult']!r}")
    if m["c_min"] <= 0 or (m["c_max"] is not None and m["c_max"] <= m["c_min"]):
        p.append("method.c_min/c_max: need 0 < c_min < c_max")
    for key in ("lr_model", "lr_net"):
        if m[key] <= 0:
            p.append(f"method.{key}: must be positive")
    if m["record_every"] < 1:
        p.append("method.record_every: must be >= 1")

    name = sc["name"]
    if sc["init_kind"] is None:
        sc["init_kind"] = "linear" if name == "poor_init" else "smoothed"
    elif sc["init_kind"] not in ("smoothed", "linear"):
        p.append(f"scenario.init_kind: {sc['init_kind']!r} is not one of smoothed, linear")
    if name == "noisy" and sc["snr_db"] is None:
        sc["snr_db"] = 3.5
    if name == "sparse_shots" and sc["n_keep_shots"] is None:
        sc["n_keep_shots"] = 5
    if sc["n_keep_shots"] is not None and not 1 <= sc["n_keep_shots"] <= a["n_shots"]:
        p.append(f"scenario.n_keep_shots: must lie in [1, {a['n_shots']}]")

    if m["name"] == "SFM":
        if m["T"] is None and m["K"] is None and m["total_physics_steps"] is None:
            m["T"], m["K"] = (30, 50) if name == "noisy" else (30, 100)
        elif m["T"] is None or m["K"] is None:
            total = m["total_physics_steps"]
            if m["T"] is None and m["K"] and total:
                m["T"] = total // m["K"]
            elif m["K"] is None and m["T"] and total:
                m["K"] = total // m["T"]
            else:
                p.append("method.T/method.K: give both, or one of them plus total_physics_steps")
        if m["T"] is not None and m["K"] is not None:
            if m["T"] < 2 or m["K"] < 1:
                p.append("method.T/method.K: need T >= 2 and K >= 1")
            if m["total_physics_steps"] is None:
                m["total_physics_steps"] = m["T"] * m["K"]
            elif m["T"] * m["K"] != m["total_physics_steps"]:
                p.append(f"method.T/method.K: T*K = {m['T'] * m['K']} differs from "
                         f"total_physics_steps = {m['total_physics_steps']}")
    elif m["total_physics_steps"] is None:
        m["total_physics_steps"] = 300
    if m["total_physics_steps"] is not None and m["total_physics_steps"] < 1:
        p.append("method.total_physics_steps: must be >= 1")
    out = v["output"]
    if out["snapshot_every"] is None:
        out["snapshot_every"] = m["record_every"]
    return p


def load_config(path, overrides=None):
    with open(path) as fh:
        return parse_config_text(fh.read(), overrides)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def echo_config(values):
    """Resolved config as text; parsing the echo gives back the same values."""
    buf = io.StringIO()
    for sec, keys in SCHEMA.items():
        buf.write(f"[{sec}]\n")
        for key, entry in keys.items():
            buf.write(f"{key} = {_fmt(values[sec][key])}\n")
        buf.write("\n")
    return buf.getvalue()


def describe_schema():
    """Markdown table of every key, default and unit."""
    lines = ["| key | default | meaning |", "| --- | --- | --- |"]
    for sec, keys in SCHEMA.items():
        for key, entry in keys.items():
            lines.append(f"| `{sec}.{key}` | `{_fmt(entry.default)}` | {entry.doc} |")
    return "\n".join(lines)
