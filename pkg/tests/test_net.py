import numpy as np
import pytest
import torch

from fdcheck import PRIMITIVES, check_primitive, network_param_errors
from sfmfwi.errors import ArchitectureError, FormatError, InvalidArgument, StateError
from sfmfwi.net import (Architecture, FlowUNet, backprop_params, flow_matching_reference_loss, interpolate_path,
                        load_params, network_forward, save_params, time_embed, warm_start_loss_dip,
                        warm_start_loss_sfm)
from sfmfwi.optim import AdamWState, adamw_step

TINY = Architecture(base_channels=8, channel_mult=(1, 2), num_res_blocks=1, groups=4,
                    in_shift=2000.0, in_scale=500.0, out_scale=1.0)


def _rand(*shape, seed=0):
    return torch.randn(*shape, dtype=torch.float64, generator=torch.Generator().manual_seed(seed))


def _randomise_output(net, seed=1):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        net.out.weight.copy_(torch.rand(net.out.weight.shape, generator=g, dtype=net.dtype) - 0.5)
        net.out.bias.copy_(torch.rand(net.out.bias.shape, generator=g, dtype=net.dtype) - 0.5)


def test_time_embed():
    e = time_embed(0.0, 16)
    assert np.all(e[:8] == 0.0) and np.all(e[8:] == 1.0)
    for t in (0.1, 0.37, 0.9):
        e = time_embed(t, 64)
        np.testing.assert_allclose(e[:32] ** 2 + e[32:] ** 2, 1.0, atol=1e-12)
        assert np.all(np.abs(e) <= 1.0)
    assert np.linalg.norm(time_embed(0.3, 64) - time_embed(0.7, 64)) > 0.1
    with pytest.raises(InvalidArgument):
        time_embed(0.5, 7)


def test_architecture_validation():
    with pytest.raises(ArchitectureError):
        Architecture(base_channels=12, groups=8)
    with pytest.raises(ArchitectureError):
        Architecture(padding_mode="circular")
    assert Architecture().divisor == 4


def test_zero_initialised_output():
    net = FlowUNet(Architecture(), seed=3)
    m = torch.full((20, 28), 2500.0)
    out = network_forward(net, m, 0.4)
    assert out.shape == m.shape
    assert not torch.any(out)


def test_deterministic_forward_and_seeded_init():
    a, b = FlowUNet(TINY, seed=5, dtype=torch.float64), FlowUNet(TINY, seed=5, dtype=torch.float64)
    _randomise_output(a)
    _randomise_output(b)
    m = 2000.0 + 100 * _rand(12, 10)
    assert torch.equal(a(m, 0.2), a(m, 0.2))
    assert torch.equal(a(m, 0.2), b(m, 0.2))
    c = FlowUNet(TINY, seed=6, dtype=torch.float64)
    _randomise_output(c)
    assert not torch.equal(a(m, 0.2), c(m, 0.2))


def test_odd_sizes_are_padded_and_cropped():
    net = FlowUNet(Architecture(base_channels=8, groups=4), dtype=torch.float64)
    _randomise_output(net)
    for shape in ((9, 13), (17, 8), (16, 16)):
        assert net(2000.0 + _rand(*shape), 0.5).shape == shape
    with pytest.raises(InvalidArgument):
        network_forward(net, torch.zeros(1, 4, 4), 0.0)


def test_group_norm_removes_constant_shift():
    arch = Architecture(base_channels=8, channel_mult=(1, 2), num_res_blocks=1, groups=8,
                        padding_mode="replicate")
    net = FlowUNet(arch, dtype=torch.float64)
    m = 2000.0 + 300.0 * _rand(16, 16)
    a = net.first_norm_output(m)
    b = net.first_norm_output(m + 750.0)
    torch.testing.assert_close(a, b, rtol=0, atol=1e-9)


def test_backprop_requires_forward_and_zero_cotangent():
    net = FlowUNet(TINY, dtype=torch.float64)
    params = list(net.parameters())
    with pytest.raises(StateError):
        backprop_params(torch.zeros(4, 4, dtype=torch.float64), torch.ones(4, 4), params)
    out = net(2000.0 + _rand(8, 8), 0.1)
    grads = backprop_params(out, torch.zeros_like(out), params, retain_graph=True)
    assert all(not torch.any(g) for g in grads)
    g1 = backprop_params(out, torch.ones_like(out), params, retain_graph=True)
    g2 = backprop_params(out, torch.ones_like(out), params)
    assert all(torch.equal(a, b) for a, b in zip(g1, g2))


def test_unreachable_params_get_zero():
    net = FlowUNet(TINY, dtype=torch.float64)
    out = net(2000.0 + _rand(8, 8), 0.1)
    extra = torch.nn.Parameter(torch.ones(3, dtype=torch.float64))
    grads = backprop_params(out, torch.ones_like(out), [extra] + list(net.parameters()))
    assert torch.equal(grads[0], torch.zeros(3, dtype=torch.float64))


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    fn, shapes = PRIMITIVES[name]
    inputs = [_rand(*s, seed=i + 1) for i, s in enumerate(shapes)]
    assert check_primitive(fn, *inputs) < 1e-4


def test_network_parameter_gradients_subset():
    arch = Architecture(base_channels=4, channel_mult=(1, 2), num_res_blocks=1, groups=2,
                        in_shift=2000.0, in_scale=500.0, out_scale=1.0)
    net = FlowUNet(arch, seed=2, dtype=torch.float64)
    _randomise_output(net)
    m = 2000.0 + 400.0 * _rand(5, 5, seed=3)
    errs = network_param_errors(net, m, 0.3, _rand(5, 5, seed=4))
    assert max(errs.values()) < 1e-4


def test_warm_start_losses():
    net = FlowUNet(TINY, dtype=torch.float64)
    m0 = 2000.0 + 100.0 * _rand(8, 8)
    s = float((m0 * m0).sum())
    assert warm_start_loss_sfm(net, m0).item() == pytest.approx(s, rel=1e-14)
    assert warm_start_loss_dip(net, m0, m0).item() == pytest.approx(s, rel=1e-14)
    assert warm_start_loss_sfm(net, m0, target=torch.zeros_like(m0)).item() == 0.0
    with pytest.raises(InvalidArgument):
        warm_start_loss_dip(net, m0, m0[:4])


class _Bypass(torch.nn.Module):
    """Returns its input (a residual bypass), so the SFM warm loss vanishes."""

    def forward(self, m, t):
        return m


class _Oracle(torch.nn.Module):
    def __init__(self, v):
        super().__init__()
        self.v = v

    def forward(self, m, t):
        return self.v


def test_losses_with_fixture_networks():
    m0 = 2000.0 + _rand(8, 8)
    assert float(warm_start_loss_sfm(_Bypass(), m0)) == 0.0
    x0, x1 = _rand(6, 6, seed=1), _rand(6, 6, seed=2)
    for t in (0.0, 0.25, 1.0):
        assert float(flow_matching_reference_loss(_Oracle(x1 - x0), x0, x1, t)) == 0.0
    zero = FlowUNet(TINY, dtype=torch.float64)
    assert flow_matching_reference_loss(zero, x0, x0, 0.6).item() == 0.0
    with pytest.raises(InvalidArgument):
        flow_matching_reference_loss(zero, x0, x1[:3], 0.5)


def test_path_endpoints_and_velocity():
    x0, x1 = 2000.0 + _rand(6, 6, seed=5), 2500.0 + _rand(6, 6, seed=6)
    assert torch.equal(interpolate_path(x0, x1, 0.0), x0)
    assert torch.equal(interpolate_path(x0, x1, 1.0), x1)
    h = 1e-3
    vel = (interpolate_path(x0, x1, 0.5 + h) - interpolate_path(x0, x1, 0.5 - h)) / (2 * h)
    torch.testing.assert_close(vel, x1 - x0, rtol=1e-9, atol=1e-9)


def test_warm_training_reduces_dip_loss():
    m0 = np.tile(np.linspace(1800.0, 3200.0, 32)[:, None], (1, 32))
    net = FlowUNet(Architecture(base_channels=8, groups=4, in_shift=m0.mean(), out_shift=m0.mean()), seed=0)
    z = torch.from_numpy(m0)
    opt = AdamWState(lr=1e-3)
    params = list(net.parameters())
    first = last = None
    for _ in range(200):
        loss = warm_start_loss_dip(net, z, m0)
        grads = backprop_params(loss, torch.ones_like(loss), params)
        with torch.no_grad():
            adamw_step(opt, [p.data for p in params], grads)
        first = loss.item() if first is None else first
        last = loss.item()
    assert last < first / 10


def test_param_file_round_trip(tmp_path):
    net = FlowUNet(TINY, seed=9)
    _randomise_output(net)
    save_params(net, tmp_path / "p.sfnp")
    back = load_params(tmp_path / "p.sfnp")
    assert back.arch == net.arch
    for a, b in zip(net.parameters(), back.parameters()):
        assert torch.equal(a, b)
    raw = (tmp_path / "p.sfnp").read_bytes()
    (tmp_path / "bad").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(FormatError):
        load_params(tmp_path / "bad")
    (tmp_path / "short").write_bytes(raw[:-4])
    with pytest.raises(FormatError):
        load_params(tmp_path / "short")
