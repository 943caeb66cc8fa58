"""Clip-to-token conversion.

A clip is cut into non-overlapping space-time cuboids (patch_size x
patch_size x tubelet_depth), each flattened in fixed (dt, dy, dx,
channel) order and linearly embedded, then spatial and temporal
positional tables are added:  token(t, s) = patch(t, s) @ W + e_s[s] + e_t[t].

Token addressing: s = row * grid_w + col, with patch centers at
(row + 0.5, col + 0.5) in patch-grid units.  Offsets produced elsewhere
live in the same units.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .numerics import Tensor

CLIP_MAGIC = b"DVTC"
CLIP_VERSION = 1


class ConfigError(ValueError):
    """Geometry or configuration constraint violated."""


@dataclass
class ClipTensor:
    """Raw frames (T, H, W, 3) with values in [0, 1]."""

    frames: np.ndarray
    frame_stride: int = 1  # source sampling stride; metadata only

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[-1] != 3:
            raise ConfigError(f"clip frames must be (T, H, W, 3); got {self.frames.shape}")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def height(self) -> int:
        return self.frames.shape[1]

    @property
    def width(self) -> int:
        return self.frames.shape[2]


@dataclass
class TokenGrid:
    """Embedded tokens (T', S, D) plus the spatial grid geometry."""

    tokens: Tensor
    grid_h: int
    grid_w: int

    def __post_init__(self):
        if self.tokens.ndim != 3 or self.tokens.shape[1] != self.grid_h * self.grid_w:
            raise ConfigError(
                f"token shape {self.tokens.shape} inconsistent with grid {self.grid_h}x{self.grid_w}")

    @property
    def num_frames(self) -> int:
        return self.tokens.shape[0]

    @property
    def num_sites(self) -> int:
        return self.tokens.shape[1]

    @property
    def dim(self) -> int:
        return self.tokens.shape[2]

    def site_address(self, s: int) -> tuple[int, int]:
        return divmod(s, self.grid_w)

    def site_index(self, row: int, col: int) -> int:
        return row * self.grid_w + col

    def centers(self, dtype=np.float64) -> np.ndarray:
        """(S, 2) array of (y, x) patch centers in patch-grid units."""
        rows, cols = np.divmod(np.arange(self.grid_h * self.grid_w), self.grid_w)
        return np.stack([rows + 0.5, cols + 0.5], axis=1).astype(dtype)


@dataclass
class PositionalTables:
    e_s: Tensor  # (S, D)
    e_t: Tensor  # (T', D)

    def check(self, grid_sites: int, grid_frames: int) -> None:
        if self.e_s.shape[0] != grid_sites or self.e_t.shape[0] != grid_frames:
            raise ConfigError(
                f"positional tables ({self.e_s.shape}, {self.e_t.shape}) do not match "
                f"grid (S={grid_sites}, T'={grid_frames})")


def patchify(clip: ClipTensor, patch_size: int, tubelet_depth: int = 1) -> Tensor:
    """Cut the clip into flattened cuboids: (T', S, P*P*3*tubelet_depth)."""
    t, h, w, _ = clip.frames.shape
    if h % patch_size or w % patch_size:
        raise ConfigError(f"frame size {h}x{w} not divisible by patch size {patch_size}")
    if t % tubelet_depth:
        raise ConfigError(f"clip length {t} not divisible by tubelet depth {tubelet_depth}")
    gh, gw = h // patch_size, w // patch_size
    tp = t // tubelet_depth
    x = clip.frames.reshape(tp, tubelet_depth, gh, patch_size, gw, patch_size, 3)
    x = x.transpose(0, 2, 4, 1, 3, 5, 6)  # (T', row, col, dt, dy, dx, c)
    return Tensor(x.reshape(tp, gh * gw, tubelet_depth * patch_size * patch_size * 3).copy())


def embed(patches: Tensor, w_embed: Tensor, pos: PositionalTables,
          grid_h: int, grid_w: int) -> TokenGrid:
    """Linear patch embedding plus additive positional encodings."""
    tp, s, k = patches.shape
    if w_embed.shape[0] != k:
        raise ConfigError(f"embedding matrix expects input {w_embed.shape[0]}, patches give {k}")
    pos.check(s, tp)
    tokens = patches @ w_embed
    tokens = tokens + pos.e_s.reshape(1, s, -1) + pos.e_t.reshape(tp, 1, -1)
    return TokenGrid(tokens=tokens, grid_h=grid_h, grid_w=grid_w)


# -- .dvt-clip container ------------------------------------------------------


def save_clip(path, clip: ClipTensor) -> None:
    t, h, w, _ = clip.frames.shape
    with open(path, "wb") as fh:
        fh.write(CLIP_MAGIC)
        fh.write(struct.pack("<IIII", CLIP_VERSION, t, h, w))
        fh.write(np.ascontiguousarray(clip.frames, dtype="<f4").tobytes())


def load_clip(path) -> ClipTensor:
    from .numerics.io import FormatError

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CLIP_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {CLIP_MAGIC!r}", 0)
        header = fh.read(16)
        if len(header) != 16:
            raise FormatError("truncated header", 4)
        version, t, h, w = struct.unpack("<IIII", header)
        if version != CLIP_VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        payload = fh.read(t * h * w * 3 * 4)
        if len(payload) != t * h * w * 3 * 4:
            raise FormatError("truncated payload", 20)
        frames = np.frombuffer(payload, dtype="<f4").reshape(t, h, w, 3).copy()
    return ClipTensor(frames=frames)
