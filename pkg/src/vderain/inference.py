"""The E-step: persistent latent chains and Langevin posterior sampling.

For a clip Y with precomputed background f(Y; W_old), the latents
u = (s0, z, m) of that clip's rain generator are sampled from the
posterior via u <- u - (delta^2/2) grad g(u) + delta xi, where g is the
mean-reduced Gaussian likelihood of the residual Y - background - G(u)
plus the standard-normal prior on u (also mean-reduced over latent
coordinates).
"""

from dataclasses import dataclass

import numpy as np
import torch

from .tensors import as_video_tensor


@dataclass(frozen=True)
class LangevinConfig:
    delta: float = 0.01       # step size
    steps: int = 5            # Langevin steps per EM iteration
    sigma: float = 0.05       # residual noise std, pixel units
    noise_enabled: bool = True

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be > 0")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be > 0")


class LangevinDivergenceError(RuntimeError):
    def __init__(self, clip_id, energy, initial):
        super().__init__(
            f"Langevin diverged on clip '{clip_id}': energy {energy:.3e} "
            f"exceeds 1e6 x initial {initial:.3e}"
        )
        self.clip_id = clip_id


@dataclass
class LatentChain:
    """Per-clip latent state, warm-started across EM iterations."""

    clip_id: str
    s0: np.ndarray    # (d_s,)
    z: np.ndarray     # (n, d_z)
    m: np.ndarray     # (d_m,)

    def __post_init__(self):
        if self.s0.ndim != 1 or self.z.ndim != 2 or self.m.ndim != 1:
            raise ValueError(
                f"chain '{self.clip_id}': bad shapes s0 {self.s0.shape}, "
                f"z {self.z.shape}, m {self.m.shape}"
            )
        for name, a in (("s0", self.s0), ("z", self.z), ("m", self.m)):
            if not np.all(np.isfinite(a)):
                raise ValueError(f"chain '{self.clip_id}': non-finite {name}")

    @property
    def latent_count(self):
        return self.s0.size + self.z.size + self.m.size


def init_chain(clip_id, n, dims, seed):
    """Standard-normal chain; dims = (d_s, d_z, d_m)."""
    d_s, d_z, d_m = dims
    rng = np.random.Generator(np.random.PCG64(seed))
    return LatentChain(
        clip_id=clip_id,
        s0=rng.standard_normal(d_s).astype(np.float32),
        z=rng.standard_normal((n, d_z)).astype(np.float32),
        m=rng.standard_normal(d_m).astype(np.float32),
    )


def _chain_tensors(chain, dtype, requires_grad):
    s0 = torch.as_tensor(chain.s0, dtype=dtype).unsqueeze(0).requires_grad_(requires_grad)
    z = torch.as_tensor(chain.z, dtype=dtype).unsqueeze(0).requires_grad_(requires_grad)
    m = torch.as_tensor(chain.m, dtype=dtype).unsqueeze(0).requires_grad_(requires_grad)
    return s0, z, m


def _energy_batch(s0, z, m, y, background, generator, sigma):
    """Per-clip energies, shape (B,).  Generator params are constants."""
    rain = generator.generate(s0, z, m)
    resid = y - background - rain
    like = resid.flatten(1).pow(2).mean(dim=1) / (2.0 * sigma * sigma)
    latent_count = s0.shape[1] + z.shape[1] * z.shape[2] + m.shape[1]
    prior = 0.5 * (
        s0.pow(2).sum(dim=1) + z.pow(2).flatten(1).sum(dim=1) + m.pow(2).sum(dim=1)
    ) / latent_count
    return like + prior


def latent_energy(chain, y, background, generator, sigma):
    """Energy of one chain plus its exact gradient w.r.t. (s0, z, m).

    y and background may be VideoClips or already laid-out video tensors;
    dtype follows the generator parameters, so a double() generator gives
    a 64-bit energy surface.
    """
    dtype = next(generator.parameters()).dtype
    yt = as_video_tensor(y, dtype=dtype)
    bt = as_video_tensor(background, dtype=dtype)
    if yt.shape != bt.shape:
        raise ValueError(f"shape mismatch {tuple(yt.shape)} vs {tuple(bt.shape)}")
    s0, z, m = _chain_tensors(chain, dtype, requires_grad=True)
    e = _energy_batch(s0, z, m, yt, bt, generator, sigma)[0]
    if not torch.isfinite(e):
        raise FloatingPointError(f"non-finite latent energy on clip '{chain.clip_id}'")
    gs, gz, gm = torch.autograd.grad(e, (s0, z, m))
    grad = LatentChain(
        clip_id=chain.clip_id,
        s0=gs[0].numpy().astype(chain.s0.dtype),
        z=gz[0].numpy().astype(chain.z.dtype),
        m=gm[0].numpy().astype(chain.m.dtype),
    )
    return float(e.detach()), grad


def langevin_step(chain, grad, delta, rng=None):
    """One update u <- u - (delta^2/2) grad + delta xi; rng None means no noise."""
    for name, g in (("s0", grad.s0), ("z", grad.z), ("m", grad.m)):
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient component {name}")
    half = 0.5 * delta * delta

    def upd(u, g):
        u = u - half * g
        if rng is not None:
            u = u + delta * rng.standard_normal(u.shape)
        return u.astype(chain.s0.dtype if u.dtype.kind == "f" else u.dtype)

    return LatentChain(
        clip_id=chain.clip_id,
        s0=upd(chain.s0.astype(np.float64), grad.s0),
        z=upd(chain.z.astype(np.float64), grad.z),
        m=upd(chain.m.astype(np.float64), grad.m),
    )


def run_langevin(chain, y, background, generator, cfg, rng=None, clip_id=None):
    """cfg.steps sequential Langevin updates; returns the advanced chain.

    The caller must store the result back as the clip's chain (warm-start
    contract).  If the energy ever exceeds 1e6 x its initial value the run
    aborts with LangevinDivergenceError.
    """
    out = run_langevin_batch([chain], y, background, generator, cfg,
                             [rng] if rng is not None else None)
    return out[0]


def run_langevin_batch(chains, y, background, generator, cfg, rngs=None):
    """Vectorized run_langevin over the chains of one mini-batch.

    y/background: (B, c, n, h, w) tensors or single clips when B = 1.
    Each chain gets its own RNG stream; rngs None disables noise, as does
    cfg.noise_enabled = False.
    """
    dtype = next(generator.parameters()).dtype
    yt = as_video_tensor(y, dtype=dtype)
    bt = as_video_tensor(background, dtype=dtype)
    b = len(chains)
    if yt.shape[0] != b:
        raise ValueError(f"{b} chains but batch size {yt.shape[0]}")
    if cfg.noise_enabled and rngs is not None and len(rngs) != b:
        raise ValueError("need one RNG stream per chain")
    use_noise = cfg.noise_enabled and rngs is not None

    s0 = torch.stack([torch.as_tensor(c.s0, dtype=dtype) for c in chains]).requires_grad_(True)
    z = torch.stack([torch.as_tensor(c.z, dtype=dtype) for c in chains]).requires_grad_(True)
    m = torch.stack([torch.as_tensor(c.m, dtype=dtype) for c in chains]).requires_grad_(True)

    half = 0.5 * cfg.delta * cfg.delta
    e0 = None
    for _ in range(cfg.steps):
        e_vec = _energy_batch(s0, z, m, yt, bt, generator, cfg.sigma)
        if not torch.isfinite(e_vec).all():
            bad = int(torch.nonzero(~torch.isfinite(e_vec))[0])
            raise FloatingPointError(f"non-finite latent energy on clip '{chains[bad].clip_id}'")
        if e0 is None:
            e0 = e_vec.detach().clone()
        _check_divergence(e_vec.detach(), e0, chains)
        gs, gz, gm = torch.autograd.grad(e_vec.sum(), (s0, z, m))
        with torch.no_grad():
            for u, g in ((s0, gs), (z, gz), (m, gm)):
                u -= half * g
                if use_noise:
                    noise = np.stack([rngs[i].standard_normal(u.shape[1:]) for i in range(b)])
                    u += cfg.delta * torch.as_tensor(noise, dtype=dtype)
    with torch.no_grad():
        e_final = _energy_batch(s0, z, m, yt, bt, generator, cfg.sigma)
    _check_divergence(e_final, e0, chains)

    out = []
    for i, c in enumerate(chains):
        out.append(LatentChain(
            clip_id=c.clip_id,
            s0=s0[i].detach().numpy().astype(c.s0.dtype),
            z=z[i].detach().numpy().astype(c.z.dtype),
            m=m[i].detach().numpy().astype(c.m.dtype),
        ))
    return out


def _check_divergence(e_vec, e0, chains):
    limit = 1e6 * np.maximum(e0.numpy(), 1e-8)
    bad = np.nonzero(e_vec.numpy() > limit)[0]
    if bad.size:
        i = int(bad[0])
        raise LangevinDivergenceError(chains[i].clip_id, float(e_vec[i]), float(e0[i]))
