"""Time-conditioned convolutional flow network and its losses.

Reverse-mode differentiation is provided by torch autograd; ``backprop_params``
is the only entry point the drivers use to pull parameter gradients back from a
model-space cotangent (the solver's velocity gradient).
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ArchitectureError, FormatError, InvalidArgument, StateError


@dataclass(frozen=True)
class Architecture:
    """Everything needed to rebuild the network's parameter shapes and I/O scaling.

    ``in_shift``/``in_scale`` normalise the incoming velocity (m/s) and
    ``out_scale``/``out_shift`` map the raw output back to m/s.
    """

    base_channels: int = 16
    channel_mult: tuple = (1, 2, 2)
    num_res_blocks: int = 2
    groups: int = 8
    time_multiplier: float = 1000.0
    in_shift: float = 0.0
    in_scale: float = 1000.0
    out_scale: float = 1000.0
    out_shift: float = 0.0
    # padding of the 3x3 convolutions: "zeros" or "replicate"
    padding_mode: str = "zeros"

    def __post_init__(self):
        object.__setattr__(self, "channel_mult", tuple(int(c) for c in self.channel_mult))
        problems = []
        if self.base_channels < 1 or self.num_res_blocks < 1 or not self.channel_mult:
            problems.append("base_channels, num_res_blocks and channel_mult must be positive/non-empty")
        for c in self.channel_mult:
            if (self.base_channels * c) % self.groups:
                problems.append(f"groups={self.groups} does not divide {self.base_channels * c} channels")
        if self.padding_mode not in ("zeros", "replicate"):
            problems.append(f"padding_mode must be 'zeros' or 'replicate', got {self.padding_mode!r}")
        if self.base_channels % 2:
            problems.append("base_channels must be even (it sets the sinusoidal embedding width)")
        if problems:
            raise ArchitectureError("; ".join(problems))

    @property
    def levels(self):
        return len(self.channel_mult)

    @property
    def divisor(self):
        return 2 ** (self.levels - 1)


def time_embed(t, dim, multiplier=1000.0):
    """Sinusoidal embedding: ``sin(t*M*w_i)`` then ``cos(t*M*w_i)``, ``w_i = 10000^(-2i/dim)``."""
    if dim < 2 or dim % 2:
        raise InvalidArgument(f"embedding dim must be even and >= 2, got {dim}")
    half = dim // 2
    freqs = 10000.0 ** (-2.0 * np.arange(half) / dim)
    arg = t * multiplier * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)])


def _torch_time_embed(t, dim, multiplier, dtype):
    half = dim // 2
    freqs = 10000.0 ** (-2.0 * torch.arange(half, dtype=torch.float64) / dim)
    arg = float(t) * multiplier * freqs
    return torch.cat([torch.sin(arg), torch.cos(arg)]).to(dtype)[None, :]


def _conv(cin, cout, padding_mode, stride=1):
    return nn.Conv2d(cin, cout, 3, stride=stride, padding=1, padding_mode=padding_mode)


class ResBlock(nn.Module):
    """norm -> SiLU -> conv, add projected time feature, norm -> SiLU -> conv, plus skip."""

    def __init__(self, cin, cout, emb_dim, groups, padding_mode):
        super().__init__()
        self.norm1 = nn.GroupNorm(groups, cin)
        self.conv1 = _conv(cin, cout, padding_mode)
        self.emb = nn.Linear(emb_dim, cout)
        self.norm2 = nn.GroupNorm(groups, cout)
        self.conv2 = _conv(cout, cout, padding_mode)
        self.skip = nn.Conv2d(cin, cout, 1) if cin != cout else nn.Identity()

    def forward(self, x, emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.emb(F.silu(emb))[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return self.skip(x) + h


class FlowUNet(nn.Module):
    """U-Net ``v(m, t)`` mapping a velocity field and a time in [0, 1] to an update in m/s."""

    def __init__(self, arch: Architecture = Architecture(), seed=0, dtype=torch.float32):
        super().__init__()
        self.arch = arch
        ch = arch.base_channels
        emb_dim = 4 * ch
        g = arch.groups
        pm = arch.padding_mode
        self.time_mlp = nn.Sequential(nn.Linear(ch, emb_dim), nn.SiLU(), nn.Linear(emb_dim, emb_dim))
        self.inp = _conv(1, ch, pm)
        self.down = nn.ModuleList()
        skips = [ch]
        cur = ch
        for level, mult in enumerate(arch.channel_mult):
            out = ch * mult
            for _ in range(arch.num_res_blocks):
                self.down.append(ResBlock(cur, out, emb_dim, g, pm))
                cur = out
                skips.append(cur)
            if level < arch.levels - 1:
                self.down.append(_conv(cur, cur, pm, stride=2))
                skips.append(cur)
        self.mid = nn.ModuleList([ResBlock(cur, cur, emb_dim, g, pm), ResBlock(cur, cur, emb_dim, g, pm)])
        self.up = nn.ModuleList()
        for level, mult in reversed(list(enumerate(arch.channel_mult))):
            out = ch * mult
            for i in range(arch.num_res_blocks + 1):
                self.up.append(ResBlock(cur + skips.pop(), out, emb_dim, g, pm))
                cur = out
            if level > 0:
                self.up.append(_conv(cur, cur, pm))
        self.out_norm = nn.GroupNorm(g, cur)
        self.out = _conv(cur, 1, pm)
        self.to(dtype)
        self.reset_parameters(seed)

    @property
    def dtype(self):
        return self.inp.weight.dtype

    def reset_parameters(self, seed):
        """Fan-in scaled uniform init from ``seed``; unit/zero norms; zero final layer."""
        gen = torch.Generator().manual_seed(int(seed))
        with torch.no_grad():
            for mod in self.modules():
                if isinstance(mod, (nn.Conv2d, nn.Linear)):
                    fan_in = mod.weight[0].numel()
                    bound = 1.0 / math.sqrt(fan_in)
                    mod.weight.copy_(torch.rand(mod.weight.shape, generator=gen, dtype=torch.float64)
                                     .mul(2 * bound).sub(bound))
                    mod.bias.copy_(torch.rand(mod.bias.shape, generator=gen, dtype=torch.float64)
                                   .mul(2 * bound).sub(bound))
                elif isinstance(mod, nn.GroupNorm):
                    mod.weight.fill_(1.0)
                    mod.bias.fill_(0.0)
            self.out.weight.zero_()
            self.out.bias.zero_()

    def _pad(self, x):
        d = self.arch.divisor
        nz, nx = x.shape[-2:]
        pz, px = (-nz) % d, (-nx) % d
        pads = (px // 2, px - px // 2, pz // 2, pz - pz // 2)
        return F.pad(x, pads), pads

    def forward(self, m, t):
        """``m``: (nz, nx) or (B, 1, nz, nx) velocity in m/s; returns the same shape in m/s."""
        squeeze = m.dim() == 2
        x = m[None, None] if squeeze else m
        x = ((x - self.arch.in_shift) / self.arch.in_scale).to(self.dtype)
        x, (pl, pr, pt, pb) = self._pad(x)
        emb = self.time_mlp(_torch_time_embed(t, self.arch.base_channels, self.arch.time_multiplier, self.dtype))
        h = self.inp(x)
        hs = [h]
        for mod in self.down:
            h = mod(h, emb) if isinstance(mod, ResBlock) else mod(h)
            hs.append(h)
        for mod in self.mid:
            h = mod(h, emb)
        for mod in self.up:
            if isinstance(mod, ResBlock):
                h = mod(torch.cat([h, hs.pop()], dim=1), emb)
            else:
                h = mod(F.interpolate(h, scale_factor=2, mode="nearest"))
        h = self.out(F.silu(self.out_norm(h)))
        h = h[..., pt:h.shape[-2] - pb, pl:h.shape[-1] - pr]
        y = h * self.arch.out_scale + self.arch.out_shift
        return y[0, 0] if squeeze else y

    def first_norm_output(self, m):
        """Output of the first GroupNorm layer (diagnostic for shift invariance)."""
        x = ((m[None, None] - self.arch.in_shift) / self.arch.in_scale).to(self.dtype)
        x, _ = self._pad(x)
        return self.down[0].norm1(self.inp(x))


def network_forward(net: FlowUNet, m_t, t):
    """Evaluate ``v(m_t, t)``; accepts numpy or torch input and returns a torch tensor."""
    if isinstance(m_t, np.ndarray):
        m_t = torch.from_numpy(np.array(m_t, copy=True))
    if m_t.dim() != 2:
        raise InvalidArgument(f"expected a (nz, nx) field, got shape {tuple(m_t.shape)}")
    return net(m_t, t)


def backprop_params(output, cotangent, params, retain_graph=False):
    """Vector-Jacobian product: gradients of ``<output, cotangent>`` w.r.t. ``params``.

    Parameters not reachable from ``output`` receive zeros.
    """
    if not isinstance(output, torch.Tensor) or output.grad_fn is None:
        raise StateError("no recorded forward pass: output has no autograd history")
    if isinstance(cotangent, np.ndarray):
        cotangent = torch.from_numpy(np.array(cotangent, copy=True))
    cotangent = cotangent.to(output.dtype)
    if cotangent.shape != output.shape:
        raise InvalidArgument(f"cotangent shape {tuple(cotangent.shape)} vs output {tuple(output.shape)}")
    params = list(params)
    grads = torch.autograd.grad(output, params, grad_outputs=cotangent, retain_graph=retain_graph,
                                allow_unused=True)
    return [torch.zeros_like(p) if g is None else g for p, g in zip(params, grads)]


def _as_tensor(x, like=None):
    if isinstance(x, np.ndarray):
        x = torch.from_numpy(np.array(x, copy=True))
    if like is not None:
        x = x.to(like.dtype)
    return x


def _sq_err(a, b):
    if a.shape != b.shape:
        raise InvalidArgument(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")
    d = a - b
    return (d * d).sum()


def warm_start_loss_sfm(net: FlowUNet, m0, target=None):
    """``||v(m0, 0) - target||^2`` with ``target = m0`` unless given (e.g. zeros for a zero-flow start)."""
    m0 = _as_tensor(m0)
    out = net(m0, 0.0)
    ref = m0 if target is None else _as_tensor(target)
    return _sq_err(out, ref.to(out.dtype))


def warm_start_loss_dip(net: FlowUNet, z, m0):
    """``||g(z) - m0||^2`` for the fixed-input reparameterisation."""
    z, m0 = _as_tensor(z), _as_tensor(m0)
    out = net(z, 0.0)
    return _sq_err(out, m0.to(out.dtype))


def interpolate_path(x0, x1, t):
    """Linear path ``(1-t) x0 + t x1``; exact at both endpoints."""
    if t == 0:
        return x0.clone() if isinstance(x0, torch.Tensor) else np.array(x0, copy=True)
    if t == 1:
        return x1.clone() if isinstance(x1, torch.Tensor) else np.array(x1, copy=True)
    return (1.0 - t) * x0 + t * x1


def flow_matching_reference_loss(net, x0, x1, t):
    """Regression of ``v(x_t, t)`` onto the path velocity ``x1 - x0`` (unit-test reference only)."""
    x0, x1 = _as_tensor(x0), _as_tensor(x1)
    if x0.shape != x1.shape:
        raise InvalidArgument(f"shape mismatch {tuple(x0.shape)} vs {tuple(x1.shape)}")
    if not 0.0 <= t <= 1.0:
        raise InvalidArgument(f"t must lie in [0, 1], got {t}")
    xt = interpolate_path(x0, x1, t)
    v = net(xt, t)
    return _sq_err(v, (x1 - x0).to(v.dtype))


_MAGIC = b"SFNP"
_VERSION = 1


def save_params(net: FlowUNet, path):
    """``SFNP`` | u32 version | u32 len | architecture JSON | u32 count | f32 payload."""
    desc = json.dumps(asdict(net.arch), sort_keys=True).encode()
    flat = torch.cat([p.detach().reshape(-1).to(torch.float32) for p in net.state_dict().values()]).numpy()
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<II", _VERSION, len(desc)) + desc)
        fh.write(struct.pack("<I", flat.size))
        fh.write(flat.astype("<f4").tobytes())


def load_params(path, dtype=torch.float32):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {_MAGIC!r}", 0)
    if len(data) < 12:
        raise FormatError("truncated header", len(data))
    version, n = struct.unpack_from("<II", data, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if len(data) < 12 + n + 4:
        raise FormatError("truncated architecture descriptor", len(data))
    arch = Architecture(**json.loads(data[12:12 + n]))
    (count,) = struct.unpack_from("<I", data, 12 + n)
    off = 16 + n
    if len(data) - off != 4 * count:
        raise FormatError(f"payload holds {len(data) - off} bytes, header promises {4 * count}", off)
    flat = torch.from_numpy(np.frombuffer(data, dtype="<f4", offset=off).astype(np.float32))
    net = FlowUNet(arch, seed=0, dtype=torch.float32)
    state = net.state_dict()
    expected = sum(v.numel() for v in state.values())
    if expected != count:
        raise FormatError(f"architecture needs {expected} parameters, file has {count}", off)
    i = 0
    for k, v in state.items():
        state[k] = flat[i:i + v.numel()].reshape(v.shape)
        i += v.numel()
    net.load_state_dict(state)
    return net.to(dtype)
