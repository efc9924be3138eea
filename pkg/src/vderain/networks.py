"""Network definitions: the derainer and the dynamical rain generator.

The derainer maps a rainy video tensor (B, c, n, h, w) to a background
prediction of the same shape.  The rain generator unrolls a learned
state-space model: a two-layer tanh transition advances a hidden state
from per-frame noise plus a per-clip appearance code, and a sub-pixel
convolutional emission decodes each state into one rain frame.
"""

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .tensors import as_video_tensor, tensor_to_clip


@dataclass(frozen=True)
class DerainerConfig:
    shuffle: int = 2          # spatial sub-pixel factor r
    width: int = 32           # channels in the residual trunk
    blocks: int = 4           # residual block count
    kernel: int = 3           # cubic conv extent, odd
    channels: int = 3         # expected input channel count (1 or 3)
    temporal_pad: str = "zero"   # "zero" | "replicate"
    global_skip: bool = True

    def __post_init__(self):
        if self.shuffle < 1 or self.width < 1 or self.blocks < 0:
            raise ValueError("shuffle and width must be >= 1, blocks >= 0")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError("kernel extent must be odd and >= 1")
        if self.channels not in (1, 3):
            raise ValueError("channels must be 1 or 3")
        if self.temporal_pad not in ("zero", "replicate"):
            raise ValueError("temporal_pad must be 'zero' or 'replicate'")


@dataclass(frozen=True)
class TransitionConfig:
    state_dim: int = 64       # d_s
    noise_dim: int = 32       # d_z
    appearance_dim: int = 64  # d_m
    hidden: int = 128

    def __post_init__(self):
        if min(self.state_dim, self.noise_dim, self.appearance_dim, self.hidden) < 1:
            raise ValueError("all transition dims must be >= 1")


@dataclass(frozen=True)
class EmissionConfig:
    seed_size: int = 8        # spatial side of the decoded seed map
    seed_channels: int = 64
    stages: int = 3           # sub-pixel x2 upsampling stages
    out_channels: int = 1
    target_size: int = 64     # output frame side

    def __post_init__(self):
        if min(self.seed_size, self.seed_channels, self.out_channels) < 1 or self.stages < 0:
            raise ValueError("emission dims must be positive")
        if self.seed_size * 2 ** self.stages != self.target_size:
            raise ValueError(
                f"seed_size {self.seed_size} x 2^{self.stages} must equal "
                f"target_size {self.target_size}"
            )


def _spatial_unshuffle(x, r):
    # (B, c, n, h, w) -> (B, c*r*r, n, h/r, w/r)
    b, c, n, h, w = x.shape
    y = x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)
    y = F.pixel_unshuffle(y, r)
    return y.reshape(b, n, c * r * r, h // r, w // r).permute(0, 2, 1, 3, 4)


def _spatial_shuffle(x, r):
    b, c, n, h, w = x.shape
    y = x.permute(0, 2, 1, 3, 4).reshape(b * n, c, h, w)
    y = F.pixel_shuffle(y, r)
    return y.reshape(b, n, c // (r * r), h * r, w * r).permute(0, 2, 1, 3, 4)


class _Conv3dPad(nn.Module):
    """Shape-preserving 3-D conv; temporal padding zero or replicate."""

    def __init__(self, c_in, c_out, k, temporal_pad):
        super().__init__()
        self.k = k
        self.temporal_pad = temporal_pad
        if temporal_pad == "zero":
            self.conv = nn.Conv3d(c_in, c_out, k, padding=k // 2)
        else:
            self.conv = nn.Conv3d(c_in, c_out, k, padding=(0, k // 2, k // 2))

    def forward(self, x):
        if self.temporal_pad == "replicate":
            p = self.k // 2
            x = F.pad(x, (0, 0, 0, 0, p, p), mode="replicate")
        return self.conv(x)


class _ResBlock3d(nn.Module):
    def __init__(self, width, k, temporal_pad):
        super().__init__()
        self.c1 = _Conv3dPad(width, width, k, temporal_pad)
        self.c2 = _Conv3dPad(width, width, k, temporal_pad)

    def forward(self, x):
        h = self.c1(F.relu(x))
        h = self.c2(F.relu(h))
        return x + h


class Derainer(nn.Module):
    def __init__(self, cfg: DerainerConfig):
        super().__init__()
        self.cfg = cfg
        c_in = cfg.channels * cfg.shuffle ** 2
        self.head = _Conv3dPad(c_in, cfg.width, cfg.kernel, cfg.temporal_pad)
        self.blocks = nn.ModuleList(
            _ResBlock3d(cfg.width, cfg.kernel, cfg.temporal_pad) for _ in range(cfg.blocks)
        )
        self.tail = _Conv3dPad(cfg.width, c_in, cfg.kernel, cfg.temporal_pad)

    def forward(self, x):
        cfg = self.cfg
        if x.dim() != 5 or x.shape[1] != cfg.channels:
            raise ValueError(f"expected (B, {cfg.channels}, n, h, w), got {tuple(x.shape)}")
        if x.shape[-2] % cfg.shuffle or x.shape[-1] % cfg.shuffle:
            raise ValueError(
                f"spatial dims {tuple(x.shape[-2:])} not divisible by shuffle {cfg.shuffle}"
            )
        h = _spatial_unshuffle(x, cfg.shuffle)
        h = self.head(h)
        for blk in self.blocks:
            h = blk(h)
        h = self.tail(h)
        h = _spatial_shuffle(h, cfg.shuffle)
        out = x + h if cfg.global_skip else h
        if not torch.isfinite(out).all():
            raise FloatingPointError("derainer produced non-finite activations")
        return out


class Transition(nn.Module):
    """s_t = tanh(FC2(tanh(FC1([s_prev; z_t; m]))))"""

    def __init__(self, cfg: TransitionConfig):
        super().__init__()
        self.cfg = cfg
        d_in = cfg.state_dim + cfg.noise_dim + cfg.appearance_dim
        self.fc1 = nn.Linear(d_in, cfg.hidden)
        self.fc2 = nn.Linear(cfg.hidden, cfg.state_dim)

    def forward(self, s_prev, z_t, m):
        cfg = self.cfg
        if s_prev.shape[-1] != cfg.state_dim or z_t.shape[-1] != cfg.noise_dim \
                or m.shape[-1] != cfg.appearance_dim:
            raise ValueError(
                f"latent dims {s_prev.shape[-1]}/{z_t.shape[-1]}/{m.shape[-1]} do not "
                f"match config {cfg.state_dim}/{cfg.noise_dim}/{cfg.appearance_dim}"
            )
        h = torch.tanh(self.fc1(torch.cat([s_prev, z_t, m], dim=-1)))
        return torch.tanh(self.fc2(h))


class Emission(nn.Module):
    """State vector -> rain frame in [0,1] via sub-pixel upsampling stages.

    fc -> (seed_channels, seed, seed) map, then per stage a 3x3 conv into
    4x the next width followed by PixelShuffle(2) and relu; a final conv
    plus tanh lands in (-1,1), remapped affinely to [0,1].
    """

    def __init__(self, cfg: EmissionConfig, state_dim):
        super().__init__()
        self.cfg = cfg
        chans = [cfg.seed_channels]
        for _ in range(cfg.stages):
            chans.append(max(chans[-1] // 2, 2))
        self.fc = nn.Linear(state_dim, cfg.seed_channels * cfg.seed_size ** 2)
        self.convs = nn.ModuleList(
            nn.Conv2d(chans[k], 4 * chans[k + 1], 3, padding=1) for k in range(cfg.stages)
        )
        self.final = nn.Conv2d(chans[-1], cfg.out_channels, 3, padding=1)

    def forward(self, s_t):
        cfg = self.cfg
        if s_t.shape[-1] != self.fc.in_features:
            raise ValueError(f"state dim {s_t.shape[-1]} != {self.fc.in_features}")
        h = self.fc(s_t)
        h = h.reshape(-1, cfg.seed_channels, cfg.seed_size, cfg.seed_size)
        for conv in self.convs:
            h = F.relu(F.pixel_shuffle(conv(h), 2))
        h = torch.tanh(self.final(h))
        return (h + 1.0) / 2.0


class RainGenerator(nn.Module):
    """Transition + emission, unrolled over a noise sequence."""

    def __init__(self, tcfg: TransitionConfig, ecfg: EmissionConfig):
        super().__init__()
        self.tcfg = tcfg
        self.ecfg = ecfg
        self.transition = Transition(tcfg)
        self.emission = Emission(ecfg, tcfg.state_dim)

    def generate(self, s0, z, m):
        """s0 (B, d_s), z (B, n, d_z), m (B, d_m) -> rain (B, out_c, n, H, W)."""
        if z.dim() != 3:
            raise ValueError(f"z must be (B, n, d_z), got {tuple(z.shape)}")
        n = z.shape[1]
        if n < 1:
            raise ValueError("need at least one frame of noise")
        s = s0
        frames = []
        for t in range(n):
            s = self.transition(s, z[:, t], m)
            frames.append(self.emission(s))
        return torch.stack(frames, dim=2)

    forward = generate


# ---------------------------------------------------------------------------
# initialization

def _orthogonal_init_(module, seed):
    """Orthogonal weights (kernels flattened to 2-D), zero biases.

    One torch.Generator drives every draw in named_parameters order, so a
    seed pins all parameters bitwise.
    """
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for name, p in module.named_parameters():
            if name.endswith("bias"):
                p.zero_()
            elif p.dim() >= 2:
                nn.init.orthogonal_(p, generator=gen)
            else:
                p.zero_()
    return module


def make_derainer(cfg: DerainerConfig, seed=0):
    return _orthogonal_init_(Derainer(cfg), seed)


def make_generator(tcfg: TransitionConfig, ecfg: EmissionConfig, seed=0):
    return _orthogonal_init_(RainGenerator(tcfg, ecfg), seed)


# ---------------------------------------------------------------------------
# clip-level wrappers

def derainer_forward(clip, net):
    """Inference-path derainer on one VideoClip: no grad, output clamped.

    Training works on raw tensors through the module itself, unclamped.
    """
    with torch.no_grad():
        out = net(as_video_tensor(clip, dtype=next(net.parameters()).dtype))
    return tensor_to_clip(out, clamp=True)


def transition_step(s_prev, z_t, m, net):
    return net.transition(s_prev, z_t, m) if isinstance(net, RainGenerator) else net(s_prev, z_t, m)


def emit_frame(s_t, net):
    emission = net.emission if isinstance(net, RainGenerator) else net
    return emission(s_t)


def generate_rain(s0, z, m, net):
    """Latents (no batch dim: s0 (d_s,), z (n, d_z), m (d_m,)) -> 1-ch VideoClip."""
    dtype = next(net.parameters()).dtype
    with torch.no_grad():
        r = net.generate(
            torch.as_tensor(s0, dtype=dtype).unsqueeze(0),
            torch.as_tensor(z, dtype=dtype).unsqueeze(0),
            torch.as_tensor(m, dtype=dtype).unsqueeze(0),
        )
    return tensor_to_clip(r.clamp(0.0, 1.0), clamp=False)
