"""Video clips, the binary tensor container, and frame-directory I/O.

A clip is a float32 array shaped (frames, channels, height, width) with
values in [0, 1].  Two on-disk forms are supported: a directory of 8-bit
PNG frames, and a raw little-endian tensor container used for lossless
exchange of float data (rain layers, checkpoint arrays).
"""

import os
import re
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

MAGIC = b"S2VDTNSR"
CONTAINER_VERSION = 1
DTYPE_F32 = 0

# hard cap on element count accepted from a container header, guards
# against allocating from a corrupt or hostile dims block
_MAX_ELEMS = 1 << 40

_U32_MAX = 0xFFFFFFFF


class ContainerError(Exception):
    """Base class for tensor-container format failures."""


class BadMagicError(ContainerError):
    pass


class DimensionOverflowError(ContainerError):
    pass


class TruncatedFileError(ContainerError):
    pass


@dataclass(frozen=True)
class VideoClip:
    """A video as float32 (n, c, h, w) in [0, 1]; c is 1 or 3."""

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 4:
            raise ValueError("clip data must be a 4-d array (n, c, h, w)")
        if d.dtype != np.float32:
            raise ValueError(f"clip data must be float32, got {d.dtype}")
        n, c, h, w = d.shape
        if n < 1 or h < 1 or w < 1:
            raise ValueError(f"empty clip shape {d.shape}")
        if c not in (1, 3):
            raise ValueError(f"clip must have 1 or 3 channels, got {c}")
        if not np.all(np.isfinite(d)):
            raise ValueError("clip contains non-finite values")
        lo, hi = float(d.min()), float(d.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"clip values outside [0, 1]: min={lo}, max={hi}")

    @property
    def frames(self):
        return self.data.shape[0]

    @property
    def channels(self):
        return self.data.shape[1]

    @property
    def height(self):
        return self.data.shape[2]

    @property
    def width(self):
        return self.data.shape[3]

    @property
    def shape(self):
        return self.data.shape


def make_clip(arr):
    """Cast an array-like to float32 and wrap it; values must already be legal."""
    return VideoClip(np.ascontiguousarray(arr, dtype=np.float32))


# ---------------------------------------------------------------------------
# tensor container

def encode_array(arr):
    """Serialize a float32 ndarray to tensor-container bytes."""
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    for d in arr.shape:
        if d > _U32_MAX:
            raise DimensionOverflowError(f"dimension {d} does not fit in u32")
    header = MAGIC + struct.pack("<II", CONTAINER_VERSION, arr.ndim)
    header += struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    header += struct.pack("<I", DTYPE_F32)
    return header + arr.astype("<f4", copy=False).tobytes()


def write_array(path, arr):
    """Write a float32 ndarray as a tensor container file."""
    with open(path, "wb") as fh:
        fh.write(encode_array(arr))


def read_array(path):
    """Read a tensor container file back into a float32 ndarray."""
    with open(path, "rb") as fh:
        raw = fh.read()
    return decode_array(raw, name=str(path))


def decode_array(raw, name="<bytes>"):
    if len(raw) < len(MAGIC):
        raise TruncatedFileError(f"{name}: shorter than the magic prefix")
    if raw[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"{name}: bad magic {raw[:len(MAGIC)]!r}")
    off = len(MAGIC)

    def take(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(raw):
            raise TruncatedFileError(f"{name}: truncated header")
        vals = struct.unpack_from(fmt, raw, off)
        off += size
        return vals

    version, ndim = take("<II")
    if version != CONTAINER_VERSION:
        raise ContainerError(f"{name}: unsupported container version {version}")
    if ndim > 32:
        raise DimensionOverflowError(f"{name}: ndim {ndim} unreasonably large")
    dims = take(f"<{ndim}I") if ndim else ()
    nelem = 1
    for d in dims:
        nelem *= d
        if nelem > _MAX_ELEMS:
            raise DimensionOverflowError(f"{name}: dims {dims} overflow element cap")
    (dtype_code,) = take("<I")
    if dtype_code != DTYPE_F32:
        raise ContainerError(f"{name}: unknown dtype code {dtype_code}")
    need = nelem * 4
    body = raw[off:]
    if len(body) < need:
        raise TruncatedFileError(
            f"{name}: payload holds {len(body)} bytes, header promises {need}"
        )
    if len(body) > need:
        raise ContainerError(f"{name}: {len(body) - need} trailing bytes after payload")
    arr = np.frombuffer(body, dtype="<f4", count=nelem).reshape(dims)
    return arr.astype(np.float32, copy=True)


def write_clip(path, clip):
    write_array(path, clip.data)


def read_clip(path):
    arr = read_array(path)
    if arr.ndim != 4:
        raise ContainerError(f"{path}: expected a 4-d clip, got ndim {arr.ndim}")
    return VideoClip(arr)


# ---------------------------------------------------------------------------
# frame directories

_FRAME_FMT = "frame_%05d.png"


def save_frames_dir(path, clip):
    """Write a clip as 8-bit PNGs frame_00000.png, frame_00001.png, ..."""
    os.makedirs(path, exist_ok=True)
    q = np.rint(clip.data * 255.0).astype(np.uint8)
    for t in range(clip.frames):
        frame = q[t]
        if clip.channels == 1:
            img = Image.fromarray(frame[0], mode="L")
        else:
            img = Image.fromarray(frame.transpose(1, 2, 0), mode="RGB")
        img.save(os.path.join(path, _FRAME_FMT % t))


def load_frames_dir(path):
    """Load a lexicographically sorted directory of PNG frames as a clip.

    All frames must share one size and one channel layout; 8-bit gray maps
    to c=1, 8-bit RGB to c=3.
    """
    names = sorted(f for f in os.listdir(path) if f.lower().endswith(".png"))
    if not names:
        raise ValueError(f"no png frames found in {path}")
    frames = []
    shape = None
    for name in names:
        with Image.open(os.path.join(path, name)) as img:
            if img.mode == "L":
                arr = np.asarray(img, dtype=np.uint8)[None]
            elif img.mode == "RGB":
                arr = np.asarray(img, dtype=np.uint8).transpose(2, 0, 1)
            else:
                raise ValueError(f"{name}: unsupported image mode {img.mode}")
        if shape is None:
            shape = arr.shape
        elif arr.shape != shape:
            raise ValueError(
                f"{name}: frame shape {arr.shape} differs from first frame {shape}"
            )
        frames.append(arr)
    stack = np.stack(frames).astype(np.float32) / 255.0
    return VideoClip(stack)


def sorted_frame_paths(path):
    pat = re.compile(r"frame_\d{5}\.png$")
    return [os.path.join(path, f) for f in sorted(os.listdir(path)) if pat.match(f)]


# ---------------------------------------------------------------------------
# geometry and composition

def rgb_to_luminance(clip):
    """BT.601 luma: 0.299 R + 0.587 G + 0.114 B.  Identity for c=1 input."""
    if clip.channels == 1:
        return clip
    w = np.array([0.299, 0.587, 0.114], dtype=np.float32)
    lum = np.einsum("nchw,c->nhw", clip.data, w)[:, None]
    return VideoClip(np.clip(lum, 0.0, 1.0).astype(np.float32))


def crop_fixed_patch(clip, top, left, size):
    """Cut a size x size spatial patch at (top, left) from every frame."""
    n, c, h, w = clip.shape
    if top < 0 or left < 0 or top + size > h or left + size > w:
        raise ValueError(
            f"patch {size} at ({top}, {left}) leaves the {h}x{w} frame bounds"
        )
    return VideoClip(np.ascontiguousarray(clip.data[:, :, top : top + size, left : left + size]))


def chunk_video(clip, chunk_len):
    """Split into consecutive non-overlapping chunk_len-frame clips.

    A trailing remainder shorter than chunk_len is dropped.
    """
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    out = []
    for start in range(0, clip.frames - chunk_len + 1, chunk_len):
        out.append(VideoClip(np.ascontiguousarray(clip.data[start : start + chunk_len])))
    return out


def composite_rainy(clean, rain):
    """Overlay a rain layer on a clean clip: clamp(clean + rain, 0, 1).

    A single-channel rain layer broadcasts over the clean clip's channels.
    """
    if clean.frames != rain.frames or clean.height != rain.height or clean.width != rain.width:
        raise ValueError(f"clean {clean.shape} and rain {rain.shape} do not align")
    if rain.channels not in (1, clean.channels):
        raise ValueError(
            f"rain channels {rain.channels} incompatible with clean {clean.channels}"
        )
    mixed = np.clip(clean.data + rain.data, 0.0, 1.0)
    return VideoClip(mixed.astype(np.float32))
