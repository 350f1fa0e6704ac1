import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from sfmfwi.errors import InvalidArgument, NumericError
from sfmfwi.model import Grid2D, VelocityModel, constant_model
from sfmfwi.optim import AdamWState, Bounds, adamw_step, clamp, project_bounds, tv_array, tv_value_and_grad


def test_zero_grad_no_decay_is_identity():
    p = np.array([1.0, -2.0, 3.0])
    s = AdamWState(lr=0.1)
    adamw_step(s, [p], [np.zeros(3)])
    assert np.array_equal(p, [1.0, -2.0, 3.0])


def test_first_step_is_lr_times_sign():
    p = np.array([0.5])
    adamw_step(AdamWState(lr=2e-4), [p], [np.array([1.0])])
    assert abs((p[0] - 0.5) - (-2e-4)) < 1e-9


def test_decoupled_decay():
    p = np.array([3.0, -1.0])
    s = AdamWState(lr=2e-4, weight_decay=0.01)
    for _ in range(5):
        adamw_step(s, [p], [np.zeros(2)])
    np.testing.assert_allclose(p, np.array([3.0, -1.0]) * (1 - 2e-6) ** 5, rtol=1e-15)


def test_matches_reference_recurrence():
    rng = np.random.default_rng(0)
    p = rng.normal(size=5)
    ref = p.copy()
    s = AdamWState(lr=1e-2, weight_decay=0.1)
    m = v = np.zeros(5)
    for k in range(1, 8):
        g = rng.normal(size=5)
        adamw_step(s, [p], [g])
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        ref = ref * (1 - 1e-3) - 1e-2 * (m / (1 - 0.9**k)) / (np.sqrt(v / (1 - 0.999**k)) + 1e-8)
    np.testing.assert_allclose(p, ref, rtol=1e-13)


def test_torch_and_numpy_agree():
    rng = np.random.default_rng(1)
    p_np = rng.normal(size=(3, 4))
    p_t = torch.from_numpy(p_np.copy())
    s1, s2 = AdamWState(lr=0.05, weight_decay=0.01), AdamWState(lr=0.05, weight_decay=0.01)
    for _ in range(3):
        g = rng.normal(size=(3, 4))
        adamw_step(s1, [p_np], [g])
        adamw_step(s2, [p_t], [torch.from_numpy(g)])
    np.testing.assert_allclose(p_t.numpy(), p_np, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(scale=st.floats(1e-3, 1e6), seed=st.integers(0, 1000))
def test_step_bounded_by_lr(scale, seed):
    rng = np.random.default_rng(seed)
    g = rng.choice([-1.0, 1.0], size=6) * scale * rng.uniform(1, 2, size=6)
    p = np.zeros(6)
    adamw_step(AdamWState(lr=0.3, eps=1e-12), [p], [g])
    assert np.all(np.abs(p) <= 0.3 * (1 + 1e-6))


def test_errors_name_block():
    with pytest.raises(NumericError, match="velocity"):
        adamw_step(AdamWState(lr=1.0), [np.zeros(2)], [np.array([0.0, np.nan])], names=["velocity"])
    with pytest.raises(InvalidArgument):
        adamw_step(AdamWState(lr=1.0), [np.zeros(2)], [np.zeros(3)])
    with pytest.raises(InvalidArgument):
        AdamWState(lr=0.0)


def test_bounds():
    with pytest.raises(InvalidArgument):
        Bounds(0.0)
    with pytest.raises(InvalidArgument):
        Bounds(2000.0, 1000.0)
    g = Grid2D(8, 8, 1.0, 1.0)
    inside = constant_model(g, 2000.0)
    assert np.array_equal(project_bounds(inside, Bounds(1000.0)).values, inside.values)
    v = np.full(g.shape, 2000.0)
    v[0, 0] = 900.0
    out = project_bounds(VelocityModel(g, v), Bounds(1000.0))
    assert out.values[0, 0] == 1000.0
    assert np.array_equal(project_bounds(out, Bounds(1000.0)).values, out.values)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_clamp_is_nearest_feasible_point(seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 6000, size=20)
    b = Bounds(1000.0, 4500.0)
    y = clamp(x, b)
    grid = np.linspace(1000.0, 4500.0, 3501)
    brute = grid[np.argmin(np.abs(grid[None, :] - x[:, None]), axis=1)]
    np.testing.assert_allclose(y, brute, atol=0.5 + 1e-9)
    assert np.all((y >= 1000.0) & (y <= 4500.0))


def test_tv_constant():
    g = Grid2D(10, 12, 5.0, 5.0)
    val, grad = tv_value_and_grad(constant_model(g, 2500.0), epsilon=1e-3)
    assert val == pytest.approx(10 * 12 * 1e-3, rel=1e-12)
    assert not np.any(grad)


def test_tv_gradient_fd():
    rng = np.random.default_rng(2)
    g = Grid2D(16, 16, 10.0, 10.0)
    v = rng.uniform(1500, 3000, g.shape)
    _, grad = tv_value_and_grad(VelocityModel(g, v), epsilon=1e-3)
    h = 1e-4
    for z, x in rng.integers(0, 16, size=(20, 2)):
        vp, vm = v.copy(), v.copy()
        vp[z, x] += h
        vm[z, x] -= h
        fd = (tv_array(vp, 10.0, 10.0, 1e-3)[0] - tv_array(vm, 10.0, 10.0, 1e-3)[0]) / (2 * h)
        assert abs(fd - grad[z, x]) <= 1e-5 * max(abs(fd), 1e-12)


def test_tv_ramp_limit():
    nz, nx, s, dx = 10, 12, 3.0, 2.0
    v = np.tile(1000.0 + s * dx * np.arange(nx), (nz, 1))
    val, _ = tv_array(v, dx, dx, s * 1e-4)
    exact = nz * (nx - 1) * s
    assert abs(val - exact) < 0.01 * exact


@settings(max_examples=20, deadline=None)
@given(c=st.floats(-500, 500), seed=st.integers(0, 1000))
def test_tv_shift_invariance_and_zero_sum(c, seed):
    v = np.random.default_rng(seed).uniform(1500, 3000, (9, 11))
    a, ga = tv_array(v, 10.0, 10.0, 1e-3)
    b, _ = tv_array(v + c, 10.0, 10.0, 1e-3)
    assert a == pytest.approx(b, rel=1e-9)
    assert abs(ga.sum()) < 1e-8


def test_tv_rejects_bad_epsilon():
    with pytest.raises(InvalidArgument):
        tv_array(np.ones((8, 8)), 1.0, 1.0, 0.0)
