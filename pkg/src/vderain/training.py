"""Monte Carlo EM training: M-step loss, the epoch loop, and ablation modes.

Each registered mini-batch owns one rain generator and one latent chain
per member clip.  An epoch visits batches in fixed index order; for each,
the E-step advances the chains by Langevin sampling under the current
parameters, then the M-step takes one Adam step on the derainer and that
batch's generator.

Modes: "semi" trains on labeled + unlabeled batches with the full loss;
"baseline1" is plain supervised MSE (generators never constructed);
"baseline2"/"baseline3" use the full loss on labeled batches only with
the MRF strength forced to 0 and 0.5 respectively.
"""

import csv
import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
import torch

from . import checkpoint as ckpt_io
from .inference import LangevinConfig, init_chain, run_langevin_batch
from .metrics import psnr_luminance, ssim_luminance
from .networks import (DerainerConfig, EmissionConfig, TransitionConfig,
                       derainer_forward, make_derainer, make_generator)
from .priors import PriorConfig, mrf_energy
from .rng import derive_seed
from .tensors import as_video_tensor, clips_to_batch, tensor_to_clip

MODES = ("semi", "baseline1", "baseline2", "baseline3")

LOG_COLUMNS = ("epoch", "batch_kind", "mean_loss", "val_psnr", "val_ssim",
               "lr_derainer", "lr_transition", "lr_emission", "wall_seconds")


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class BatchEntry:
    index: int            # 1-based; labeled batches first
    labeled: bool
    clip_ids: list


@dataclass
class BatchRegistry:
    """Fixed mini-batch memberships plus their generators and chains.

    build_dataset returns the bare skeleton (batches only); em_train
    installs generators and chains and mutates chains in place as
    training advances.
    """

    batches: list
    generators: dict = field(default_factory=dict)   # batch index -> RainGenerator
    chains: dict = field(default_factory=dict)       # clip_id -> LatentChain

    def labeled_count(self):
        return sum(1 for b in self.batches if b.labeled)


@dataclass(frozen=True)
class TrainConfig:
    prior: PriorConfig = field(default_factory=PriorConfig)
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    lr_transition: float = 1e-3
    lr_emission: float = 1e-4
    lr_derainer: float = 2e-4
    lr_decay_epoch: int = 30      # halve every rate once after this epoch
    lr_decay_factor: float = 0.5
    pretrain_epochs: int = 5      # derainer-only epochs, no E-step
    epochs: int = 60
    mode: str = "semi"
    grad_clip: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if min(self.lr_transition, self.lr_emission, self.lr_derainer) <= 0:
            raise ValueError("learning rates must be > 0")
        if not 0 <= self.pretrain_epochs < self.epochs:
            raise ValueError("need 0 <= pretrain_epochs < epochs")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got '{self.mode}'")
        if self.grad_clip <= 0:
            raise ValueError("grad_clip must be > 0")


@dataclass(frozen=True)
class NetworkConfigs:
    derainer: DerainerConfig = field(default_factory=DerainerConfig)
    transition: TransitionConfig = field(default_factory=TransitionConfig)
    emission: EmissionConfig = field(default_factory=EmissionConfig)


def effective_prior(cfg):
    """PriorConfig after the mode's MRF override."""
    if cfg.mode == "baseline2":
        return dataclasses.replace(cfg.prior, rho=0.0)
    if cfg.mode == "baseline3":
        return dataclasses.replace(cfg.prior, rho=0.5)
    return cfg.prior


def m_step_loss(y, x, f_out, rain_out, cfg):
    """Training loss for one mini-batch (all reductions are means).

    y: rainy input, x: clean ground truth or None, f_out: derainer output,
    rain_out: generator output at the sampled latents (None in baseline1).
    """
    labeled = x is not None
    if cfg.mode != "semi" and not labeled:
        raise ValueError(f"mode '{cfg.mode}' trains on labeled data only")
    f = f_out if torch.is_tensor(f_out) else as_video_tensor(f_out)
    if cfg.mode == "baseline1":
        xt = as_video_tensor(x, dtype=f.dtype)
        return ((f - xt) ** 2).mean()

    yt = as_video_tensor(y, dtype=f.dtype)
    rt = rain_out if torch.is_tensor(rain_out) else as_video_tensor(rain_out, dtype=f.dtype)
    if yt.shape != f.shape:
        raise ValueError(f"shape mismatch y {tuple(yt.shape)} vs f_out {tuple(f.shape)}")
    prior = effective_prior(cfg)
    sigma = cfg.langevin.sigma
    resid = yt - f - rt
    loss = (resid ** 2).mean() / (2.0 * sigma * sigma) + mrf_energy(f, prior)
    if labeled:
        xt = as_video_tensor(x, dtype=f.dtype)
        if xt.shape != f.shape:
            raise ValueError(f"shape mismatch x {tuple(xt.shape)} vs f_out {tuple(f.shape)}")
        loss = loss + ((f - xt) ** 2).mean() / prior.epsilon0_sq
    return loss


# ---------------------------------------------------------------------------
# training state

@dataclass
class _TrainState:
    derainer: object
    opt_derainer: object
    opt_generators: dict
    registry: object
    epoch: int = 0


def _make_optimizer_for_generator(gen, cfg):
    return torch.optim.Adam([
        {"params": list(gen.transition.parameters()), "lr": cfg.lr_transition},
        {"params": list(gen.emission.parameters()), "lr": cfg.lr_emission},
    ])


def _working_batches(registry, mode):
    if mode == "semi":
        return list(registry.batches)
    return [b for b in registry.batches if b.labeled]


def _init_state(samples, registry, cfg, nets):
    by_id = {s.clip_id: s for s in samples}
    derainer = make_derainer(nets.derainer, derive_seed(cfg.seed, "derainer"))
    opt_d = torch.optim.Adam(derainer.parameters(), lr=cfg.lr_derainer)
    opt_g = {}
    work = _working_batches(registry, cfg.mode)
    if not any(b.labeled for b in work):
        raise ValueError("registry holds no labeled batches")
    if cfg.mode != "baseline1":
        dims = (nets.transition.state_dim, nets.transition.noise_dim,
                nets.transition.appearance_dim)
        for b in work:
            gen = make_generator(nets.transition, nets.emission,
                                 derive_seed(cfg.seed, "generator", b.index))
            registry.generators[b.index] = gen
            opt_g[b.index] = _make_optimizer_for_generator(gen, cfg)
            for cid in b.clip_ids:
                n = by_id[cid].rainy.frames
                registry.chains[cid] = init_chain(cid, n, dims,
                                                  derive_seed(cfg.seed, "chain", cid))
    return _TrainState(derainer, opt_d, opt_g, registry)


def _set_learning_rates(state, cfg, epoch):
    scale = cfg.lr_decay_factor if epoch > cfg.lr_decay_epoch else 1.0
    for group in state.opt_derainer.param_groups:
        group["lr"] = cfg.lr_derainer * scale
    for opt in state.opt_generators.values():
        opt.param_groups[0]["lr"] = cfg.lr_transition * scale
        opt.param_groups[1]["lr"] = cfg.lr_emission * scale
    return (cfg.lr_derainer * scale, cfg.lr_transition * scale, cfg.lr_emission * scale)


def _validate(derainer, val_samples):
    if not val_samples:
        return None, None
    psnrs, ssims = [], []
    for s in val_samples:
        derained = derainer_forward(s.rainy, derainer)
        psnrs.append(psnr_luminance(derained, s.clean))
        ssims.append(ssim_luminance(derained, s.clean))
    return float(np.mean(psnrs)), float(np.mean(ssims))


def em_train(samples, registry, cfg, nets=None, val_samples=(), log_csv=None,
             checkpoint_path=None, checkpoint_every=0, resume=None):
    """Run Algorithm-style EM training; returns (derainer, log rows).

    registry is mutated: generators/chains installed and advanced.  With
    checkpoint_path set, a resumable checkpoint is written at the end and
    every checkpoint_every epochs.  resume takes a Checkpoint object and
    continues bitwise as if the run had never stopped.
    """
    nets = nets or NetworkConfigs()
    by_id = {s.clip_id: s for s in samples}
    work = _working_batches(registry, cfg.mode)
    state = _init_state(samples, registry, cfg, nets)
    if resume is not None:
        ckpt_io.install_checkpoint(resume, state, cfg, nets)

    batch_tensors = {}
    for b in work:
        members = [by_id[cid] for cid in b.clip_ids]
        y = clips_to_batch([s.rainy for s in members])
        x = clips_to_batch([s.clean for s in members]) if b.labeled else None
        batch_tensors[b.index] = (y, x)

    rows = []
    t0 = time.monotonic()
    for epoch in range(state.epoch + 1, cfg.epochs + 1):
        lr_d, lr_t, lr_e = _set_learning_rates(state, cfg, epoch)
        kind_losses = {"labeled": [], "unlabeled": []}
        for b in work:
            y, x = batch_tensors[b.index]
            loss = _train_batch(state, b, y, x, cfg, epoch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch {b.index}"
                )
            kind_losses["labeled" if b.labeled else "unlabeled"].append(loss)
        state.epoch = epoch

        val_psnr, val_ssim = _validate(state.derainer, val_samples)
        wall = time.monotonic() - t0
        for kind in ("labeled", "unlabeled"):
            if kind_losses[kind]:
                rows.append({
                    "epoch": epoch, "batch_kind": kind,
                    "mean_loss": float(np.mean(kind_losses[kind])),
                    "val_psnr": val_psnr, "val_ssim": val_ssim,
                    "lr_derainer": lr_d, "lr_transition": lr_t, "lr_emission": lr_e,
                    "wall_seconds": wall,
                })
        if checkpoint_path and checkpoint_every and epoch % checkpoint_every == 0 \
                and epoch < cfg.epochs:
            ckpt_io.save_checkpoint(checkpoint_path,
                                    ckpt_io.collect_checkpoint(state, cfg, nets))
    if checkpoint_path:
        ckpt_io.save_checkpoint(checkpoint_path,
                                ckpt_io.collect_checkpoint(state, cfg, nets))
    if log_csv:
        write_log_csv(log_csv, rows)
    return state.derainer, rows


def _train_batch(state, b, y, x, cfg, epoch):
    pretrain = epoch <= cfg.pretrain_epochs
    use_generator = cfg.mode != "baseline1"
    update_theta = use_generator and not pretrain

    if update_theta:
        # E-step: advance this batch's chains under frozen (W, theta)
        gen = state.registry.generators[b.index]
        with torch.no_grad():
            bg = state.derainer(y)
        chains = [state.registry.chains[cid] for cid in b.clip_ids]
        rngs = [np.random.Generator(np.random.PCG64(
            derive_seed(cfg.seed, "langevin", cid, epoch))) for cid in b.clip_ids]
        advanced = run_langevin_batch(chains, y, bg, gen, cfg.langevin, rngs)
        for cid, chain in zip(b.clip_ids, advanced):
            state.registry.chains[cid] = chain

    f_out = state.derainer(y)
    rain_out = None
    if use_generator:
        gen = state.registry.generators[b.index]
        chains = [state.registry.chains[cid] for cid in b.clip_ids]
        s0 = torch.stack([torch.as_tensor(c.s0) for c in chains])
        z = torch.stack([torch.as_tensor(c.z) for c in chains])
        m = torch.stack([torch.as_tensor(c.m) for c in chains])
        rain_out = gen.generate(s0, z, m)
        if not update_theta:
            # pretrain: theta frozen, keep its graph (and moments) untouched
            rain_out = rain_out.detach()

    loss = m_step_loss(y, x, f_out, rain_out, cfg)
    state.opt_derainer.zero_grad(set_to_none=True)
    if update_theta:
        state.opt_generators[b.index].zero_grad(set_to_none=True)
    loss.backward()
    torch.nn.utils.clip_grad_norm_(state.derainer.parameters(), cfg.grad_clip)
    if update_theta:
        gen = state.registry.generators[b.index]
        torch.nn.utils.clip_grad_norm_(gen.transition.parameters(), cfg.grad_clip)
        torch.nn.utils.clip_grad_norm_(gen.emission.parameters(), cfg.grad_clip)
    state.opt_derainer.step()
    if update_theta:
        state.opt_generators[b.index].step()
    return float(loss.detach())


def write_log_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else r[c] for c in LOG_COLUMNS])


# ---------------------------------------------------------------------------
# generator mimicry: fit one generator to a bare rain clip

@dataclass
class GeneratorFit:
    generator: object
    chain: object
    reconstruction: object     # VideoClip
    losses: list


def fit_generator(rain_clip, cfg, nets=None, iterations=2000):
    """Alternate Langevin E-steps and generator-only M-steps on one clip.

    The target is a bare rain layer: the likelihood residual is
    rain_clip - G(s0, z, m) with a zero background.  Returns the fitted
    generator, final chain, its reconstruction, and the per-iteration
    energy (likelihood + latent prior) sequence.
    """
    nets = nets or NetworkConfigs()
    if rain_clip.channels != nets.emission.out_channels:
        raise ValueError(
            f"rain clip has {rain_clip.channels} channels, emission outputs "
            f"{nets.emission.out_channels}"
        )
    if rain_clip.height != nets.emission.target_size or \
            rain_clip.width != nets.emission.target_size:
        raise ValueError(
            f"rain clip {rain_clip.height}x{rain_clip.width} does not match "
            f"emission target {nets.emission.target_size}"
        )
    gen = make_generator(nets.transition, nets.emission,
                         derive_seed(cfg.seed, "fit-generator"))
    opt = _make_optimizer_for_generator(gen, cfg)
    dims = (nets.transition.state_dim, nets.transition.noise_dim,
            nets.transition.appearance_dim)
    chain = init_chain("fit-target", rain_clip.frames, dims,
                       derive_seed(cfg.seed, "fit-chain"))
    y = as_video_tensor(rain_clip)
    bg = torch.zeros_like(y)
    sigma = cfg.langevin.sigma

    losses = []
    for it in range(1, iterations + 1):
        rng = np.random.Generator(np.random.PCG64(
            derive_seed(cfg.seed, "fit-langevin", it)))
        chain = run_langevin_batch([chain], y, bg, gen, cfg.langevin, [rng])[0]

        s0 = torch.as_tensor(chain.s0).unsqueeze(0)
        z = torch.as_tensor(chain.z).unsqueeze(0)
        m = torch.as_tensor(chain.m).unsqueeze(0)
        rain = gen.generate(s0, z, m)
        like = ((y - rain) ** 2).mean() / (2.0 * sigma * sigma)
        prior = 0.5 * float(
            np.sum(chain.s0.astype(np.float64) ** 2)
            + np.sum(chain.z.astype(np.float64) ** 2)
            + np.sum(chain.m.astype(np.float64) ** 2)
        ) / chain.latent_count
        if not torch.isfinite(like):
            raise TrainingDivergedError(f"non-finite fit loss at iteration {it}")
        opt.zero_grad(set_to_none=True)
        like.backward()
        torch.nn.utils.clip_grad_norm_(gen.transition.parameters(), cfg.grad_clip)
        torch.nn.utils.clip_grad_norm_(gen.emission.parameters(), cfg.grad_clip)
        opt.step()
        losses.append(float(like.detach()) + prior)

    with torch.no_grad():
        s0 = torch.as_tensor(chain.s0).unsqueeze(0)
        z = torch.as_tensor(chain.z).unsqueeze(0)
        m = torch.as_tensor(chain.m).unsqueeze(0)
        recon = gen.generate(s0, z, m).clamp(0.0, 1.0)
    return GeneratorFit(gen, chain, tensor_to_clip(recon), losses)
