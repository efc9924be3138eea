"""Bridging between VideoClip arrays and torch video tensors.

Torch-side video layout is (batch, channels, frames, height, width), the
Conv3d convention.  VideoClip stays (frames, channels, height, width).
"""

import numpy as np
import torch

from .video import VideoClip


def clip_to_tensor(clip, dtype=torch.float32):
    """VideoClip -> (1, c, n, h, w) tensor."""
    t = torch.from_numpy(clip.data).permute(1, 0, 2, 3).unsqueeze(0)
    return t.to(dtype).contiguous()


def clips_to_batch(clips, dtype=torch.float32):
    """List of equally shaped VideoClips -> (B, c, n, h, w) tensor."""
    return torch.cat([clip_to_tensor(c, dtype) for c in clips], dim=0)


def tensor_to_clip(x, clamp=False):
    """(c, n, h, w) or (1, c, n, h, w) tensor -> VideoClip.

    clamp=True clips into [0,1] first; otherwise out-of-range values are a
    contract violation and raise.
    """
    if x.dim() == 5:
        if x.shape[0] != 1:
            raise ValueError(f"expected a single-clip tensor, got batch {x.shape[0]}")
        x = x[0]
    if x.dim() != 4:
        raise ValueError(f"expected 4-d or 5-d tensor, got {tuple(x.shape)}")
    if clamp:
        x = x.clamp(0.0, 1.0)
    arr = x.detach().permute(1, 0, 2, 3).cpu().numpy().astype(np.float32)
    return VideoClip(np.ascontiguousarray(arr))


def as_video_tensor(obj, dtype=None):
    """Accept a VideoClip or an already laid-out video tensor.

    Tensors pass through (optionally cast); clips are converted.  Returns a
    (B, c, n, h, w) tensor.
    """
    if isinstance(obj, VideoClip):
        t = clip_to_tensor(obj)
    elif torch.is_tensor(obj):
        t = obj if obj.dim() == 5 else obj.unsqueeze(0)
        if t.dim() != 5:
            raise ValueError(f"expected video tensor, got shape {tuple(obj.shape)}")
    else:
        raise TypeError(f"expected VideoClip or tensor, got {type(obj)!r}")
    if dtype is not None:
        t = t.to(dtype)
    return t
