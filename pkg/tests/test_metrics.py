import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfmfwi.errors import InvalidArgument
from sfmfwi.metrics import SsimConfig, deblur_report, effective_rank, radial_spectrum, rel_l2, ssim
from sfmfwi.model import Grid2D, VelocityModel, gaussian_smooth


def _field(seed=0, shape=(32, 32)):
    return np.random.default_rng(seed).uniform(1500, 4000, shape)


def test_rel_l2_identities():
    m = _field()
    assert rel_l2(m, m) == 0.0
    assert rel_l2(2 * m, m) == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(InvalidArgument):
        rel_l2(m, np.zeros_like(m))


def test_rel_l2_brute_force():
    a, b = _field(1, (9, 7)), _field(2, (9, 7))
    num = den = 0.0
    for i in range(9):
        for j in range(7):
            num += (a[i, j] - b[i, j]) ** 2
            den += b[i, j] ** 2
    assert rel_l2(a, b) == pytest.approx(math.sqrt(num / den), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(alpha=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_rel_l2_homogeneous(alpha, seed):
    t = _field(seed, (8, 8))
    e = np.random.default_rng(seed + 1).normal(size=(8, 8))
    assert rel_l2(t + alpha * e, t) == pytest.approx(alpha * rel_l2(t + e, t), rel=1e-12)


def test_ssim_identity_and_symmetry():
    a, b = _field(3), _field(4)
    assert abs(ssim(a, a) - 1.0) < 1e-9
    assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 <= ssim(a, b) <= 1.0


def test_ssim_inverted_checkerboard():
    z, x = np.indices((32, 32))
    board = ((z // 4 + x // 4) % 2).astype(float)
    assert ssim(1.0 - board, board) < 0.5


def test_ssim_constant_vs_structured():
    z, x = np.indices((32, 32))
    truth = 2000.0 + 500.0 * np.sin(x / 3.0) * np.cos(z / 4.0)
    assert ssim(np.full_like(truth, truth.mean()), truth) < 0.3


def test_ssim_degenerate_range():
    c = np.full((16, 16), 2000.0)
    assert ssim(c, c) == 1.0
    with pytest.raises(InvalidArgument):
        ssim(np.ones((8, 8)), np.ones((8, 8)))
    with pytest.raises(InvalidArgument):
        SsimConfig(size=10)


def test_ssim_joint_normalisation_sees_bias():
    t = _field(5)
    assert ssim(t + 300.0, t) < ssim(t, t)


def test_effective_rank():
    assert effective_rank(np.full((20, 30), 2500.0)) == 1
    assert effective_rank(np.diag(np.arange(1.0, 13.0))) == 12
    rng = np.random.default_rng(0)
    for k in (1, 3, 7):
        m = sum(np.outer(rng.normal(size=40), rng.normal(size=25)) for _ in range(k))
        assert effective_rank(m) == k
    m = _field(6, (16, 24))
    assert effective_rank(m * 37.5) == effective_rank(m)
    with pytest.raises(InvalidArgument):
        effective_rank(np.zeros((0, 3)))


def test_radial_spectrum_axis():
    k, s = radial_spectrum(_field(7, (32, 24)), 10.0, 10.0)
    assert np.all(np.diff(k) > 0)
    assert k[0] == pytest.approx(1.0 / 320.0)
    assert np.all(s >= 0)


def test_deblur_identity_and_shift():
    g = Grid2D(48, 40, 5.0, 5.0)
    a, b = _field(8, g.shape), _field(9, g.shape)
    r = deblur_report(a, a, g)
    for v in r.ratios().values():
        assert abs(v - 1.0) < 1e-9
    r1 = deblur_report(a, b, g).ratios()
    r2 = deblur_report(a + 700.0, b + 700.0, g).ratios()
    for key in r1:
        assert r1[key] == pytest.approx(r2[key], rel=1e-9)


def test_deblur_smoothing_and_checkerboard():
    g = Grid2D(64, 64, 5.0, 5.0)
    base = VelocityModel(g, _field(10, g.shape))
    r = deblur_report(base.values, gaussian_smooth(base, 2.0).values, g)
    assert r.r_band < 1 and r.hf_gain < 1
    z, x = np.indices(g.shape)
    blurry = gaussian_smooth(base, 3.0).values
    board = 5.0 * (-1.0) ** (z + x)
    assert deblur_report(blurry, blurry + board, g).hf_gain > 1


def test_deblur_nyquist_guard():
    g = Grid2D(16, 16, 10.0, 10.0)
    with pytest.raises(InvalidArgument, match="Nyquist"):
        deblur_report(_field(0, g.shape), _field(1, g.shape), g, band_hi=0.2)


def test_deblur_csv(tmp_path):
    g = Grid2D(32, 32, 5.0, 5.0)
    r = deblur_report(_field(0, g.shape), _field(1, g.shape), g)
    r.write_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "k,S_corrupt,S_corrected"
    assert lines[-2] == "R_band,hf_gain,grad_energy_gain,p90_grad_gain"
    assert len(lines) == len(r.k) + 3
