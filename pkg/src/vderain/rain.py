"""Procedural rain-streak synthesis for building labeled training pairs."""

import math
from dataclasses import dataclass

import numpy as np

from .video import VideoClip


@dataclass(frozen=True)
class RainRecipe:
    """Knobs for one synthetic rain field.

    direction_deg   streak tilt from vertical, positive leans toward +x
    speed           fall speed in pixels per frame
    density         expected streaks per 1000 pixels of frame area
    length          streak length in pixels
    width           streak thickness in pixels
    intensity       additive brightness of a streak core, in (0, 1]
    wind_jitter     std-dev in degrees of a per-frame global angle wobble
    seed            RNG seed; equal recipes give bitwise-equal rain
    """

    direction_deg: float = 10.0
    speed: float = 2.0
    density: float = 4.0
    length: float = 9.0
    width: float = 1.2
    intensity: float = 0.8
    wind_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not -90.0 < self.direction_deg < 90.0:
            raise ValueError("direction_deg must lie strictly inside (-90, 90)")
        if self.speed < 0.0:
            raise ValueError("speed must be >= 0")
        if self.density <= 0.0:
            raise ValueError("density must be > 0")
        if self.length < 1.0:
            raise ValueError("length must be >= 1")
        if self.width <= 0.0:
            raise ValueError("width must be > 0")
        if not 0.0 < self.intensity <= 1.0:
            raise ValueError("intensity must be in (0, 1]")
        if self.wind_jitter < 0.0:
            raise ValueError("wind_jitter must be >= 0")


def procedural_rain(recipe, frames, height, width):
    """Render a (frames, 1, height, width) rain layer from a recipe.

    A fixed population of streaks falls along the recipe direction and
    wraps from the bottom of an extended track back to the top, so the
    streak count is constant over time.  Streaks are drawn as soft
    capsules: a linear intensity falloff of the distance to the streak
    segment, accumulated additively and clamped to [0, 1].
    """
    if frames < 1 or height < 1 or width < 1:
        raise ValueError("frames, height, width must all be >= 1")
    r = recipe
    rng = np.random.Generator(np.random.PCG64(r.seed))

    skirt = r.width / 2.0 + 0.5
    # vertical wrap period: visible rows, plus room for a whole streak and
    # its soft edge to leave the frame before reappearing on top
    period = height + r.length + r.speed + skirt + 1.0

    count = int(round(r.density * height * width / 1000.0))
    out = np.zeros((frames, 1, height, width), dtype=np.float32)
    if count == 0:
        return VideoClip(out)

    head_y = rng.uniform(0.0, period, size=count)
    head_x = rng.uniform(0.0, float(width), size=count)

    # one global wind angle per frame; the step into frame t uses theta[t]
    theta = np.deg2rad(r.direction_deg + r.wind_jitter * rng.standard_normal(frames))

    ys = np.arange(height, dtype=np.float64)
    xs = np.arange(width, dtype=np.float64)

    for t in range(frames):
        if t > 0:
            head_y = (head_y + r.speed * math.cos(theta[t])) % period
            head_x = (head_x + r.speed * math.sin(theta[t])) % width
        # tail offset from the head, fixed within a frame
        dx = -r.length * math.sin(theta[t])
        dy = -r.length * math.cos(theta[t])
        acc = np.zeros((height, width), dtype=np.float64)
        for k in range(count):
            _draw_capsule(acc, ys, xs, head_x[k], head_y[k], dx, dy,
                          skirt, r.intensity)
        out[t, 0] = np.clip(acc, 0.0, 1.0).astype(np.float32)
    return VideoClip(out)


def _draw_capsule(acc, ys, xs, hx, hy, dx, dy, skirt, intensity):
    """Add one soft capsule into acc: head at (hx, hy), tail at head + (dx, dy).

    All pixel offsets are taken relative to the head, so a pure vertical
    integer head shift reproduces the same ink values one row lower.
    """
    h, w = acc.shape
    y0 = max(0, int(math.floor(hy + min(dy, 0.0) - skirt)))
    y1 = min(h, int(math.ceil(hy + max(dy, 0.0) + skirt)) + 1)
    x0 = max(0, int(math.floor(hx + min(dx, 0.0) - skirt)))
    x1 = min(w, int(math.ceil(hx + max(dx, 0.0) + skirt)) + 1)
    if y0 >= y1 or x0 >= x1:
        return
    py = ys[y0:y1, None] - hy
    px = xs[None, x0:x1] - hx
    seg_sq = dx * dx + dy * dy
    if seg_sq == 0.0:
        ex, ey = px, py
    else:
        s = np.clip((px * dx + py * dy) / seg_sq, 0.0, 1.0)
        ex = px - s * dx
        ey = py - s * dy
    dist = np.sqrt(ex * ex + ey * ey)
    ink = intensity * np.clip(1.0 - dist / skirt, 0.0, 1.0)
    acc[y0:y1, x0:x1] += ink
