"""Smoothness and ground-truth prior energies on the derained background.

Both energies are mean-reduced: sums are divided by the total element
count of the input video so their scale does not depend on clip size.
All functions accept a VideoClip or a torch video tensor laid out
(..., c, n, h, w) and return a 0-dim torch tensor (differentiable when
the input is a tensor with requires_grad).
"""

from dataclasses import dataclass, field

import torch

from .tensors import as_video_tensor


@dataclass(frozen=True)
class PriorConfig:
    rho: float = 0.5                      # MRF strength
    gamma: tuple = (1.0, 1.0, 2.0)        # weights: height, width, time diffs
    epsilon0_sq: float = 1e-6             # ground-truth MSE denominator
    charbonnier_eps: float = 1e-3

    def __post_init__(self):
        if self.rho < 0:
            raise ValueError("rho must be >= 0")
        g = tuple(float(v) for v in self.gamma)
        if len(g) != 3 or any(v < 0 for v in g):
            raise ValueError("gamma must be three non-negative weights")
        object.__setattr__(self, "gamma", g)
        if self.epsilon0_sq <= 0:
            raise ValueError("epsilon0_sq must be > 0")
        if self.charbonnier_eps <= 0:
            raise ValueError("charbonnier_eps must be > 0")


def charbonnier_abs(x, eps=1e-3):
    """Smooth absolute value sqrt(x^2 + eps^2); works on floats and tensors."""
    return (x * x + eps * eps) ** 0.5


def _check_finite(x, what):
    if not torch.isfinite(x).all():
        raise ValueError(f"{what} contains non-finite values")


def mrf_energy(f_out, cfg):
    """Weighted charbonnier forward-difference energy, mean over elements.

    Directions are height, width, time with weights cfg.gamma; differences
    at the last index of a dimension are omitted.  The returned value
    already carries the cfg.rho factor.
    """
    x = as_video_tensor(f_out)
    _check_finite(x, "mrf_energy input")
    eps = cfg.charbonnier_eps
    g1, g2, g3 = cfg.gamma
    total = x.new_zeros(())
    if x.shape[-2] > 1:
        total = total + g1 * charbonnier_abs(x[..., 1:, :] - x[..., :-1, :], eps).sum()
    if x.shape[-1] > 1:
        total = total + g2 * charbonnier_abs(x[..., 1:] - x[..., :-1], eps).sum()
    if x.shape[-3] > 1:
        total = total + g3 * charbonnier_abs(x[..., 1:, :, :] - x[..., :-1, :, :], eps).sum()
    return cfg.rho * total / x.numel()


def labeled_prior_energy(f_out, x_clean, cfg):
    """Ground-truth anchoring plus smoothness: MSE/eps0^2 + mrf_energy."""
    f = as_video_tensor(f_out)
    x = as_video_tensor(x_clean, dtype=f.dtype)
    if f.shape != x.shape:
        raise ValueError(f"shape mismatch {tuple(f.shape)} vs {tuple(x.shape)}")
    mse = ((f - x) ** 2).mean()
    return mse / cfg.epsilon0_sq + mrf_energy(f, cfg)
