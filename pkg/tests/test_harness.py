import csv
import json
import os

import numpy as np
import pytest

from sfmfwi import cli
from sfmfwi.errors import ConfigError, DivergenceError, InvalidArgument
from sfmfwi.harness.compare import compare_runs
from sfmfwi.harness.config import SCHEMA, describe_schema, echo_config, load_config, parse_config_text
from sfmfwi.harness.experiment import build_setup, read_manifest, run_experiment
from sfmfwi.harness.svg import line_plot
from sfmfwi.io import load_field, load_gather, save_field
from sfmfwi.solver import measured_snr_db

TINY = """
[grid]
benchmark = two_layer
nx = 20
nz = 20
[acquisition]
n_shots = 3
n_receivers = 8
[solver]
nt = 300
pml_width = 8
pml_velocity = 3000
[method]
name = {method}
total_physics_steps = 6
record_every = 2
base_channels = 8
channel_mult = 1,2
num_res_blocks = 1
groups = 4
lr_net = 1e-3
[scenario]
name = {scenario}
smooth_sigma = 3
"""


def tiny(method="FWI", scenario="clean", **over):
    text = TINY.format(method=method, scenario=scenario)
    extra = {"method.T": "2", "method.K": "3"} if method == "SFM" else {}
    extra.update(over)
    return parse_config_text(text, extra)


def _run(tmp_path, name, **kw):
    out = tmp_path / name
    return out, run_experiment(tiny(**kw), str(out), deterministic=True)


def test_config_collects_every_problem():
    text = "[grid]\nnx = abc\ncolour = red\n[method]\nname = GAN\n[extra]\nx = 1\n"
    with pytest.raises(ConfigError) as exc:
        parse_config_text(text)
    problems = exc.value.problems
    assert len(problems) == 4
    joined = "\n".join(problems)
    for needle in ("grid.nx", "grid.colour", "method.name", "[extra]"):
        assert needle in joined


def test_config_cross_key_checks():
    with pytest.raises(ConfigError, match="T\\*K = 9 differs"):
        parse_config_text("[method]\nT = 3\nK = 3\ntotal_physics_steps = 10\n")
    with pytest.raises(ConfigError, match="c_min"):
        parse_config_text("[method]\nc_min = 5000\n")
    with pytest.raises(ConfigError, match="n_keep_shots"):
        parse_config_text("[scenario]\nname = sparse_shots\nn_keep_shots = 20\n")
    with pytest.raises(ConfigError, match="syntax"):
        parse_config_text("nx = 3\n")


def test_scenario_defaults():
    v = parse_config_text("")
    assert (v["method"]["T"], v["method"]["K"], v["method"]["total_physics_steps"]) == (30, 100, 3000)
    assert v["scenario"]["init_kind"] == "smoothed"
    v = parse_config_text("[scenario]\nname = noisy\n")
    assert v["scenario"]["snr_db"] == 3.5 and (v["method"]["T"], v["method"]["K"]) == (30, 50)
    assert parse_config_text("[scenario]\nname = poor_init\n")["scenario"]["init_kind"] == "linear"
    assert parse_config_text("[scenario]\nname = sparse_shots\n")["scenario"]["n_keep_shots"] == 5
    v = parse_config_text("[method]\nname = FWI\n")
    assert v["method"]["total_physics_steps"] == 300
    v = parse_config_text("[method]\nK = 30\ntotal_physics_steps = 300\n")
    assert v["method"]["T"] == 10
    assert v["output"]["snapshot_every"] == v["method"]["record_every"]


def test_echo_round_trip():
    v = tiny("SFM", "noisy", **{"acquisition.t0": "0.1", "method.reuse_last_proposal": "yes"})
    assert parse_config_text(echo_config(v)) == v
    table = describe_schema()
    assert table.count("\n") == 1 + sum(len(k) for k in SCHEMA.values())


def test_overrides_and_file(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text(TINY.format(method="FWI", scenario="clean"))
    v = load_config(str(p), {"solver.nt": "250"})
    assert v["solver"]["nt"] == 250 and v["grid"]["nx"] == 20


def test_setup_scenarios():
    s = build_setup(tiny(scenario="sparse_shots", **{"scenario.n_keep_shots": "2"}))
    assert s.geom.n_shots == 2 == s.d_obs.n_shots
    s = build_setup(tiny(scenario="poor_init"))
    col = s.model0.values[:, 0]
    assert col[0] == s.truth.vmin and col[-1] == s.truth.vmax
    s = build_setup(tiny(scenario="noisy"))
    assert measured_snr_db(s.d_clean, s.d_obs) == pytest.approx(3.5, abs=0.3)


def test_run_writes_complete_directory(tmp_path):
    out, manifest = _run(tmp_path, "fwi")
    assert manifest["evaluations"] == manifest["total_physics_steps"] == 6
    for name in ("config.echo", "manifest.json", "convergence.csv", "truth.sfwi", "initial.sfwi", "final.sfwi",
                 "gathers/d_obs.sgth"):
        assert (out / name).exists(), name
    assert not (out / "gathers" / "d_obs_clean.sgth").exists()
    assert sorted(os.listdir(out / "snaps")) == ["snap_1.sfwi", "snap_3.sfwi", "snap_5.sfwi", "snap_6.sfwi"]
    assert read_manifest(str(out))["summary"]["rank"] == manifest["summary"]["rank"]
    with open(out / "convergence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["step"] for r in rows] == ["1", "3", "5", "6"] and {r["seconds"] for r in rows} == {"0.0"}
    # the echo is itself a runnable config
    assert load_config(str(out / "config.echo")) == manifest["config"]


def test_read_manifest_missing(tmp_path):
    with pytest.raises(FileNotFoundError, match="incomplete"):
        read_manifest(str(tmp_path))


def test_tv_zero_lambda_matches_fwi_on_disk(tmp_path):
    a, _ = _run(tmp_path, "fwi")
    b, _ = _run(tmp_path, "tv", method="FWI_TV")
    assert (a / "final.sfwi").read_bytes() == (b / "final.sfwi").read_bytes()


def test_noisy_run_records_snr(tmp_path):
    out, manifest = _run(tmp_path, "noisy", method="SFM", scenario="noisy")
    clean = load_gather(str(out / "gathers" / "d_obs_clean.sgth"))
    noisy = load_gather(str(out / "gathers" / "d_obs.sgth"))
    assert measured_snr_db(clean, noisy) == pytest.approx(manifest["measured_snr_db"], abs=1e-3)
    assert manifest["sfm"] == {"T": 2, "K": 3}


def test_rerun_from_manifest_is_bit_identical(tmp_path):
    out, manifest = _run(tmp_path, "dip", method="DIP", **{"method.warm_start_steps": "3"})
    again = tmp_path / "again"
    run_experiment(manifest["config"], str(again), deterministic=True)
    assert (out / "convergence.csv").read_bytes() == (again / "convergence.csv").read_bytes()


def test_compare_four_methods(tmp_path):
    dirs = [str(_run(tmp_path, m, method=m)[0]) for m in ("FWI", "FWI_TV", "DIP", "SFM")]
    rows = compare_runs(dirs, str(tmp_path / "cmp"))
    assert [r["method"] for r in rows] == ["FWI", "FWI_TV", "DIP", "SFM"]
    with open(tmp_path / "cmp" / "comparison.csv") as fh:
        table = list(csv.DictReader(fh))
    assert list(table[0]) == ["method", "rel_l2", "ssim", "final_misfit", "rank"]
    assert all(float(r["rel_l2"]) > 0 and -1 <= float(r["ssim"]) <= 1 for r in table)
    for svg in ("convergence.svg", "rank.svg"):
        text = (tmp_path / "cmp" / svg).read_text()
        assert text.startswith("<svg") and text.count("<polyline") == 4


def test_compare_single_and_mismatched(tmp_path):
    a, _ = _run(tmp_path, "a")
    assert len(compare_runs([str(a)], str(tmp_path / "c1"))) == 1
    b, _ = _run(tmp_path, "b", **{"grid.benchmark": "three_layer"})
    with pytest.raises(InvalidArgument, match="different truth"):
        compare_runs([str(a), str(b)], str(tmp_path / "c2"))
    # no truth stored: quality columns stay empty
    os.remove(a / "truth.sfwi")
    manifest = json.loads((a / "manifest.json").read_text())
    manifest["truth_sha256"] = None
    (a / "manifest.json").write_text(json.dumps(manifest))
    row = compare_runs([str(a)], str(tmp_path / "c3"))[0]
    assert row["rel_l2"] == "" and row["ssim"] == ""


def test_line_plot_skips_bad_points(tmp_path):
    path = tmp_path / "p.svg"
    line_plot({"a": ([1, 2, 3], [1.0, float("nan"), 0.0]), "b": ([], [])}, str(path), log_y=True)
    text = path.read_text()
    assert text.count("<polyline") == 1 and "a</text>" in text


@pytest.fixture
def cfg_file(tmp_path):
    p = tmp_path / "tiny.ini"
    p.write_text(TINY.format(method="FWI", scenario="clean"))
    return str(p)


def test_cli_invert_and_metrics(tmp_path, cfg_file, capsys):
    out = str(tmp_path / "run")
    assert cli.main(["invert", "--config", cfg_file, "--out", out, "--deterministic"]) == 0
    assert "evaluations=6" in capsys.readouterr().out
    assert cli.main(["metrics", f"{out}/final.sfwi", f"{out}/truth.sfwi", "--out", str(tmp_path / "m.csv")]) == 0
    assert "rel_l2=" in capsys.readouterr().out
    assert cli.main(["deblur", f"{out}/initial.sfwi", f"{out}/initial.sfwi", "--band-hi", "0.05"]) == 0
    assert "r_band=1" in capsys.readouterr().out.lower()
    assert cli.main(["compare", out, "--out", str(tmp_path / "cmp")]) == 0
    assert cli.main(["forward", "--config", cfg_file, "--out", str(tmp_path / "fwd")]) == 0
    assert (tmp_path / "fwd" / "gathers" / "d_obs.sgth").exists()


def test_cli_gen_model_and_ablate(tmp_path, cfg_file, capsys):
    path = str(tmp_path / "lens.sfwi")
    assert cli.main(["gen-model", "--kind", "lens", "--nx", "32", "--nz", "24", "--out", path, "--seed", "2"]) == 0
    assert load_field(path).grid.shape == (24, 32)
    out = tmp_path / "abl"
    assert cli.main(["ablate", "--config", cfg_file, "--out", str(out), "--pairs", "2x3,3x2"]) == 0
    assert (out / "ablation.csv").read_text().count("\n") == 3
    assert cli.main(["ablate", "--config", cfg_file, "--out", str(out), "--pairs", "2x3,2x2"]) == 2
    assert "budget" in capsys.readouterr().err


def test_cli_exit_codes(tmp_path, cfg_file, monkeypatch, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[method]\nname = GAN\nlr_net = fast\n")
    assert cli.main(["invert", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    err = capsys.readouterr().err
    assert "method.name" in err and "method.lr_net" in err
    assert cli.main(["invert", "--config", cfg_file]) == 2
    assert cli.main(["invert", "--config", cfg_file, "--out", str(tmp_path / "y"), "--set", "nt=3"]) == 2
    assert cli.main(["forward", "--config", cfg_file, "--out", str(tmp_path / "z"),
                     "--set", "solver.dt=0.01"]) == 2
    assert "dt" in capsys.readouterr().err
    assert cli.main(["metrics", str(tmp_path / "none.sfwi"), str(tmp_path / "none.sfwi")]) == 4
    junk = tmp_path / "junk.sfwi"
    junk.write_bytes(b"not a model at all, just bytes....")
    assert cli.main(["metrics", str(junk), str(junk)]) == 4

    def boom(args):
        raise DivergenceError("wavefield blew up at step 12", 12)

    monkeypatch.setitem(cli.COMMANDS, "forward", boom)
    assert cli.main(["forward"]) == 3


def test_cli_seed_override(tmp_path, cfg_file):
    out = tmp_path / "s"
    assert cli.main(["invert", "--config", cfg_file, "--out", str(out), "--seed", "9"]) == 0
    assert read_manifest(str(out))["seed"] == 9


def test_initial_path_grid_mismatch(tmp_path):
    from sfmfwi.model import Grid2D, constant_model
    p = tmp_path / "m0.sfwi"
    save_field(constant_model(Grid2D(10, 10, 10.0, 10.0), 2000.0), str(p))
    with pytest.raises(ConfigError, match="differs from truth grid"):
        build_setup(tiny(**{"scenario.initial_path": str(p)}))
    assert np.isfinite(build_setup(tiny()).d_obs.traces).all()
