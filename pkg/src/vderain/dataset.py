"""Dataset assembly: fixed crops, chunking, and the mini-batch partition.

Sources are whole videos (rainy, optionally clean).  build_dataset cuts
them once into fixed (chunk_len, patch, patch) samples and partitions the
samples into mini-batches of frozen membership: labeled batches first,
then unlabeled.  Crops and partition depend only on (sources, config,
seed) so persistent chains stay aligned with pixel content.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .rain import RainRecipe, procedural_rain
from .rng import derive_seed
from .training import BatchEntry, BatchRegistry
from .video import (VideoClip, chunk_video, composite_rainy, crop_fixed_patch,
                    load_frames_dir, read_clip)


@dataclass(frozen=True)
class ClipSource:
    name: str
    rainy: VideoClip
    clean: Optional[VideoClip] = None

    def __post_init__(self):
        if self.clean is not None and self.clean.shape != self.rainy.shape:
            raise ValueError(f"source '{self.name}': rainy and clean shapes differ")


@dataclass(frozen=True)
class ClipSample:
    rainy: VideoClip
    clean: Optional[VideoClip]
    labeled: bool
    clip_id: str

    def __post_init__(self):
        if self.labeled != (self.clean is not None):
            raise ValueError(f"sample '{self.clip_id}': labeled flag vs clean mismatch")
        if self.clean is not None and self.clean.shape != self.rainy.shape:
            raise ValueError(f"sample '{self.clip_id}': rainy and clean shapes differ")


def _cut_samples(sources, labeled, patch, chunk_len, seed):
    samples = []
    for src in sources:
        h, w = src.rainy.height, src.rainy.width
        if h < patch or w < patch:
            raise ValueError(f"source '{src.name}' smaller than patch {patch}")
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "crop", src.name)))
        top = int(rng.integers(0, h - patch + 1))
        left = int(rng.integers(0, w - patch + 1))
        rainy = crop_fixed_patch(src.rainy, top, left, patch)
        clean = crop_fixed_patch(src.clean, top, left, patch) if labeled else None
        r_chunks = chunk_video(rainy, chunk_len)
        c_chunks = chunk_video(clean, chunk_len) if labeled else [None] * len(r_chunks)
        for i, (rc, cc) in enumerate(zip(r_chunks, c_chunks)):
            samples.append(ClipSample(rc, cc, labeled, f"{src.name}#c{i:02d}"))
    return samples


def build_dataset(labeled_sources, unlabeled_sources, patch_size=64, chunk_len=20,
                  batch_size=12, seed=0):
    """Cut sources into samples and build the batch registry skeleton.

    Returns (samples, registry).  Labeled samples fill batches 1..B_l,
    unlabeled samples B_l+1..B_l+B_u; leftover samples that cannot form a
    full batch are dropped.  At least one full labeled batch is required,
    and one full unlabeled batch whenever unlabeled sources are given.
    """
    names = [s.name for s in list(labeled_sources) + list(unlabeled_sources)]
    if len(set(names)) != len(names):
        raise ValueError("source names must be unique")
    for src in labeled_sources:
        if src.clean is None:
            raise ValueError(f"labeled source '{src.name}' has no clean clip")

    lab = _cut_samples(labeled_sources, True, patch_size, chunk_len, seed)
    unl = _cut_samples(unlabeled_sources, False, patch_size, chunk_len, seed)

    def partition(samples, kind, start_index, labeled):
        rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "partition", kind)))
        order = [samples[i] for i in rng.permutation(len(samples))]
        n_batches = len(order) // batch_size
        batches, used = [], []
        for b in range(n_batches):
            members = order[b * batch_size : (b + 1) * batch_size]
            batches.append(BatchEntry(
                index=start_index + b, labeled=labeled,
                clip_ids=[s.clip_id for s in members],
            ))
            used.extend(members)
        return batches, used

    lab_batches, lab_used = partition(lab, "labeled", 1, True)
    if not lab_batches:
        raise ValueError(
            f"{len(lab)} labeled samples cannot fill one batch of {batch_size}"
        )
    unl_batches, unl_used = [], []
    if unlabeled_sources:
        unl_batches, unl_used = partition(unl, "unlabeled", len(lab_batches) + 1, False)
        if not unl_batches:
            raise ValueError(
                f"{len(unl)} unlabeled samples cannot fill one batch of {batch_size}"
            )
    registry = BatchRegistry(batches=lab_batches + unl_batches)
    return lab_used + unl_used, registry


# ---------------------------------------------------------------------------
# bundled desk-scale demo material

_DEMO_IMAGES = ("camera", "astronaut", "coffee", "chelsea",
                "grass", "brick", "moon", "gravel")


def _demo_base_image(name):
    from skimage import data as skdata
    img = getattr(skdata, name)()
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    return img.astype(np.float32) / 255.0


def _pan_clip(img, frames, patch, start, step):
    """Slide a patch window across a still image to fake a camera pan."""
    h, w, _ = img.shape
    out = np.empty((frames, 3, patch, patch), dtype=np.float32)
    for t in range(frames):
        top = int(round(start[0] + t * step[0]))
        left = int(round(start[1] + t * step[1]))
        top = max(0, min(h - patch, top))
        left = max(0, min(w - patch, left))
        out[t] = img[top : top + patch, left : left + patch].transpose(2, 0, 1)
    return VideoClip(out)


def make_demo_sources(seed=0, frames=20, patch=64):
    """6 labeled + 2 unlabeled + 2 validation sources, procedurally rained.

    Labeled and validation clips carry one rain family; the unlabeled pair
    uses a different direction/density family, standing in for the
    synthetic-to-real gap.
    """
    rng = np.random.Generator(np.random.PCG64(derive_seed(seed, "demo")))

    def pan(name, img):
        h, w, _ = img.shape
        start = (rng.integers(0, h - patch - 2 * frames),
                 rng.integers(0, w - patch - 2 * frames))
        step = (float(rng.uniform(0.5, 2.0)), float(rng.uniform(0.5, 2.0)))
        return _pan_clip(img, frames, patch, start, step)

    def rained(name, clean, direction, density, speed):
        recipe = RainRecipe(
            direction_deg=direction, speed=speed, density=density,
            length=float(rng.uniform(9.0, 13.0)), width=float(rng.uniform(1.3, 1.8)),
            intensity=float(rng.uniform(0.75, 0.95)),
            wind_jitter=0.0, seed=int(derive_seed(seed, "rain", name)) % (2 ** 31),
        )
        rain = procedural_rain(recipe, clean.frames, clean.height, clean.width)
        return composite_rainy(clean, rain)

    labeled, unlabeled, val = [], [], []
    for name in _DEMO_IMAGES[:6]:
        clean = pan(name, _demo_base_image(name))
        direction = float(rng.uniform(-15.0, 15.0))
        rainy = rained(name, clean, direction, density=9.0, speed=2.0)
        labeled.append(ClipSource(name, rainy, clean))
    for name in _DEMO_IMAGES[6:]:
        clean = pan(name, _demo_base_image(name))
        rainy = rained(name, clean, direction=22.0, density=20.0, speed=3.0)
        unlabeled.append(ClipSource(name, rainy, None))
    # validation reuses the textured stills so oversmoothing shows up in PSNR
    for name in _DEMO_IMAGES[4:6]:
        clean = pan(name + "-val", _demo_base_image(name))
        direction = float(rng.uniform(-15.0, 15.0))
        rainy = rained(name + "-val", clean, direction, density=9.0, speed=2.0)
        val.append(ClipSource(name + "-val", rainy, clean))
    return labeled, unlabeled, val


# ---------------------------------------------------------------------------
# on-disk source trees

def cut_validation_samples(sources, patch_size=64, chunk_len=20, seed=0):
    """Fixed-crop chunk samples from held-out labeled sources."""
    for src in sources:
        if src.clean is None:
            raise ValueError(f"validation source '{src.name}' has no clean clip")
    return _cut_samples(sources, True, patch_size, chunk_len, seed)


def _load_entry(root, stem):
    vt = os.path.join(root, stem + ".vt")
    if os.path.isfile(vt):
        return read_clip(vt)
    d = os.path.join(root, stem)
    if os.path.isdir(d):
        return load_frames_dir(d)
    return None


def load_sources(root, require_clean):
    """Each subdirectory of root holds rainy(.vt|/) and optionally clean."""
    if not os.path.isdir(root):
        raise ValueError(f"source directory not found: {root}")
    sources = []
    for name in sorted(os.listdir(root)):
        sub = os.path.join(root, name)
        if not os.path.isdir(sub):
            continue
        rainy = _load_entry(sub, "rainy")
        if rainy is None:
            raise ValueError(f"{sub}: no rainy.vt or rainy/ frames")
        clean = _load_entry(sub, "clean")
        if require_clean and clean is None:
            raise ValueError(f"{sub}: clean clip required but missing")
        sources.append(ClipSource(name, rainy, clean))
    if not sources:
        raise ValueError(f"no clip subdirectories under {root}")
    return sources
