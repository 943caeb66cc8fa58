"""Synthetic compressed-video layer: block-matching codec and motion cues.

The encoder emulates the I/P group-of-pictures structure of a real
codec: an explicit I-frame every ``gop_len`` frames, and in between
P-frames that store one integer motion displacement per block plus a
dense RGB residual.  Decoding re-warps the previous reconstruction by
the displacements and adds the residual back.

Cue builders turn that stored data (or plain RGB statistics) into
per-patch cue fields for a requested frame pair (t, t'), which a
learnable tokenizer then lifts to D-dimensional motion embeddings.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .numerics import Tensor
from .numerics.io import FormatError
from .tokenization import ClipTensor, ConfigError

GOP_MAGIC = b"DVTG"
GOP_VERSION = 1


class DomainError(ValueError):
    """Cue request outside the valid (t, t') domain."""


class CueKind(Enum):
    MD = "md"
    RGB_R = "rgb_r"
    RGB_D = "rgb_d"
    AVG_P_RGB = "avg_p_rgb"

    @property
    def channels(self) -> int:
        return 2 if self is CueKind.MD else 3


@dataclass
class PFrame:
    md: np.ndarray        # (H/block, W/block, 2) int16, (dy, dx)
    residual: np.ndarray  # (H, W, 3) float32, already dequantized
    scale: float = 0.0    # per-frame quantization scale (i8 mode only)


@dataclass
class GopClip:
    """Compressed clip: I-frames plus per-P-frame displacement/residual data."""

    gop_len: int
    block: int
    height: int
    width: int
    num_frames: int
    i_frames: list
    p_frames: list
    residual_mode: str = "f32"  # "f32" | "i8"

    def is_iframe(self, t: int) -> bool:
        return t % self.gop_len == 0

    def _p_index(self, t: int) -> int:
        if self.is_iframe(t):
            raise DomainError(f"frame {t} is an I-frame and stores no displacements")
        return t - (t // self.gop_len) - 1

    def md_field(self, t: int) -> np.ndarray:
        return self.p_frames[self._p_index(t)].md

    def residual(self, t: int) -> np.ndarray:
        """Residual image of frame t; I-frames contribute none (zeros)."""
        if self.is_iframe(t):
            return np.zeros((self.height, self.width, 3), dtype=np.float32)
        return self.p_frames[self._p_index(t)].residual


def _warp(prev: np.ndarray, md: np.ndarray, block: int) -> np.ndarray:
    """Shift each block of ``prev`` by its displacement (edge-clamped gather)."""
    h, w, _ = prev.shape
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dy = np.repeat(np.repeat(md[:, :, 0], block, axis=0), block, axis=1)
    dx = np.repeat(np.repeat(md[:, :, 1], block, axis=0), block, axis=1)
    ref_y = np.clip(ys - dy, 0, h - 1)
    ref_x = np.clip(xs - dx, 0, w - 1)
    return prev[ref_y, ref_x]


def _candidate_order(radius: int) -> list[tuple[int, int]]:
    # zero-motion first, then growing |d|: static content keeps md = (0, 0)
    cands = [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]
    cands.sort(key=lambda d: (abs(d[0]) + abs(d[1]), d[0], d[1]))
    return cands


def _match_frame(frame: np.ndarray, prev: np.ndarray, block: int, radius: int) -> np.ndarray:
    """Exhaustive SAD search per block; first strict minimum in candidate order wins."""
    h, w, _ = frame.shape
    bh, bw = h // block, w // block
    padded = np.pad(prev, ((radius, radius), (radius, radius), (0, 0)), mode="edge")
    best_sad = np.full((bh, bw), np.inf)
    best = np.zeros((bh, bw, 2), dtype=np.int16)
    for dy, dx in _candidate_order(radius):
        shifted = padded[radius - dy:radius - dy + h, radius - dx:radius - dx + w]
        diff = np.abs(frame - shifted).sum(axis=2)
        sad = diff.reshape(bh, block, bw, block).sum(axis=(1, 3))
        better = sad < best_sad
        best_sad[better] = sad[better]
        best[better] = (dy, dx)
    return best


def block_match_encode(clip: ClipTensor, block: int = 4, radius: int = 3,
                       gop_len: int = 8, residual_mode: str = "f32") -> GopClip:
    """Encode a clip into I-frames plus per-block displacements and residuals."""
    t, h, w, _ = clip.frames.shape
    if h % block or w % block:
        raise ConfigError(f"frame size {h}x{w} not divisible by block size {block}")
    if residual_mode not in ("f32", "i8"):
        raise ConfigError(f"unknown residual mode {residual_mode!r}")
    i_frames: list[np.ndarray] = []
    p_frames: list[PFrame] = []
    recon = None
    for k in range(t):
        frame = clip.frames[k].astype(np.float32)
        if k % gop_len == 0:
            i_frames.append(frame.copy())
            recon = frame.copy()
            continue
        md = _match_frame(frame, recon, block, radius)
        predicted = _warp(recon, md, block)
        residual = frame - predicted
        scale = 0.0
        if residual_mode == "i8":
            # scale stored as f32 in the container; quantize against that exact value
            scale = float(np.float32(max(float(np.abs(residual).max()) / 127.0, 1e-8)))
            residual = (np.round(residual / scale).astype(np.int8).astype(np.float32)
                        * np.float32(scale))
        p_frames.append(PFrame(md=md, residual=residual.astype(np.float32), scale=scale))
        recon = predicted + residual
    return GopClip(gop_len=gop_len, block=block, height=h, width=w, num_frames=t,
                   i_frames=i_frames, p_frames=p_frames, residual_mode=residual_mode)


def gop_decode(gop: GopClip) -> ClipTensor:
    """Sequential warp-plus-residual reconstruction of all frames."""
    frames = np.zeros((gop.num_frames, gop.height, gop.width, 3), dtype=np.float32)
    recon = None
    for k in range(gop.num_frames):
        if gop.is_iframe(k):
            recon = gop.i_frames[k // gop.gop_len].copy()
        else:
            p = gop.p_frames[gop._p_index(k)]
            recon = _warp(recon, p.md, gop.block) + p.residual
        frames[k] = recon
    return ClipTensor(frames=frames)


# -- temporal accumulation ----------------------------------------------------


def _check_same_subclip(t_a: int, t_b: int, subclip_len) -> None:
    if subclip_len is not None and (t_a // subclip_len) != (t_b // subclip_len):
        raise DomainError(
            f"frames {t_a} and {t_b} lie in different sub-clips (length {subclip_len})")


def _block_to_patch(field: np.ndarray, block: int, patch: int, h: int, w: int) -> np.ndarray:
    """Resample a block-resolution field to patch resolution by pixel-area averaging."""
    pix = np.repeat(np.repeat(field, block, axis=0), block, axis=1)  # (H, W, C)
    gh, gw = h // patch, w // patch
    return pix.reshape(gh, patch, gw, patch, -1).mean(axis=(1, 3))


def accumulate_md(gop: GopClip, t_from: int, t_to: int, patch_size: int,
                  subclip_len=None, chained: bool = True) -> np.ndarray:
    """Accumulated displacement field from ``t_from`` to ``t_to``.

    Forward accumulation follows the moving content: each hop adds the
    stored per-block displacement looked up at the chained position
    (nearest block).  Backward requests are the exact negation of the
    forward accumulation.  Result is (grid_h, grid_w, 2), averaged to
    patch resolution and expressed in patch-grid units.

    ``chained=False`` switches to a fixed-location sum (same block index
    every hop), kept for ablation.
    """
    _check_same_subclip(t_from, t_to, subclip_len)
    b = gop.block
    bh, bw = gop.height // b, gop.width // b
    if t_from == t_to:
        acc = np.zeros((bh, bw, 2), dtype=np.float64)
    elif t_from < t_to:
        ys, xs = np.meshgrid(np.arange(bh), np.arange(bw), indexing="ij")
        pos_y = (ys * b + b / 2.0).astype(np.float64)
        pos_x = (xs * b + b / 2.0).astype(np.float64)
        acc = np.zeros((bh, bw, 2), dtype=np.float64)
        for k in range(t_from + 1, t_to + 1):
            if gop.is_iframe(k):
                continue  # I-frame resets prediction; no displacement stored
            md = gop.md_field(k).astype(np.float64)
            if chained:
                iy = np.clip((pos_y // b).astype(np.intp), 0, bh - 1)
                ix = np.clip((pos_x // b).astype(np.intp), 0, bw - 1)
            else:
                iy, ix = ys, xs
            step = md[iy, ix]
            acc += step
            pos_y += step[:, :, 0]
            pos_x += step[:, :, 1]
    else:
        return -accumulate_md(gop, t_to, t_from, patch_size,
                              subclip_len=subclip_len, chained=chained)
    patch_field = _block_to_patch(acc, b, patch_size, gop.height, gop.width)
    return patch_field / patch_size


# -- cue builders ---------------------------------------------------------


def _pool_to_patches(image: np.ndarray, patch: int) -> np.ndarray:
    h, w, c = image.shape
    return image.reshape(h // patch, patch, w // patch, patch, c).mean(axis=(1, 3))


def build_cue(clip: ClipTensor, gop: GopClip, kind: CueKind, t: int, t_other: int,
              patch_size: int, subclip_len=None) -> np.ndarray:
    """Raw cue field for the pair (t, t'), at patch resolution.

    MD -> accumulated displacements (2 channels, patch units);
    RGB_R -> summed residuals over the frames between the pair;
    RGB_D -> pooled frame difference; AVG_P_RGB -> pooled frame average.
    """
    _check_same_subclip(t, t_other, subclip_len)
    lo, hi = min(t, t_other), max(t, t_other)
    if kind is CueKind.MD:
        return accumulate_md(gop, t, t_other, patch_size, subclip_len=subclip_len)
    if kind is CueKind.RGB_R:
        total = np.zeros((gop.height, gop.width, 3), dtype=np.float64)
        for k in range(lo + 1, hi + 1):
            total += gop.residual(k)
        return _pool_to_patches(total, patch_size)
    if kind is CueKind.RGB_D:
        diff = clip.frames[t_other].astype(np.float64) - clip.frames[t].astype(np.float64)
        return _pool_to_patches(diff, patch_size)
    if kind is CueKind.AVG_P_RGB:
        avg = clip.frames[lo:hi + 1].astype(np.float64).mean(axis=0)
        return _pool_to_patches(avg, patch_size)
    raise ConfigError(f"unknown cue kind {kind!r}")


@dataclass
class MotionTokenizer:
    """Learnable projection from per-patch cue vectors to D-dim embeddings."""

    w_cue: Tensor  # (cue channels, D)
    kind: CueKind

    def __post_init__(self):
        if self.w_cue.shape[0] != self.kind.channels:
            raise ConfigError(
                f"cue tokenizer expects {self.kind.channels} channels for {self.kind}, "
                f"matrix has {self.w_cue.shape[0]} rows")


def tokenize_cue(cue_field: np.ndarray, tok: MotionTokenizer) -> Tensor:
    """Flatten the per-patch cue and project: (grid_h, grid_w, C) -> (S, D)."""
    gh, gw, c = cue_field.shape
    if c != tok.w_cue.shape[0]:
        raise ConfigError(f"cue field has {c} channels, tokenizer expects {tok.w_cue.shape[0]}")
    flat = Tensor(cue_field.reshape(gh * gw, c).astype(tok.w_cue.dtype))
    return flat @ tok.w_cue


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    mse = float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


# -- .dvt-gop container -------------------------------------------------------


def save_gop(path, gop: GopClip) -> None:
    mode_code = 0 if gop.residual_mode == "f32" else 1
    with open(path, "wb") as fh:
        fh.write(GOP_MAGIC)
        fh.write(struct.pack("<IIII", GOP_VERSION, gop.num_frames, gop.height, gop.width))
        fh.write(struct.pack("<HHB", gop.block, gop.gop_len, mode_code))
        for k in range(gop.num_frames):
            if gop.is_iframe(k):
                fh.write(b"I")
                fh.write(np.ascontiguousarray(gop.i_frames[k // gop.gop_len], dtype="<f4").tobytes())
            else:
                p = gop.p_frames[gop._p_index(k)]
                fh.write(b"P")
                fh.write(np.ascontiguousarray(p.md, dtype="<i2").tobytes())
                if mode_code == 0:
                    fh.write(np.ascontiguousarray(p.residual, dtype="<f4").tobytes())
                else:
                    fh.write(struct.pack("<f", p.scale))
                    q = np.round(p.residual / p.scale).astype(np.int8)
                    fh.write(q.tobytes())


def load_gop(path) -> GopClip:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GOP_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {GOP_MAGIC!r}", 0)
        head = fh.read(16)
        if len(head) != 16:
            raise FormatError("truncated header", 4)
        version, t, h, w = struct.unpack("<IIII", head)
        if version != GOP_VERSION:
            raise FormatError(f"unsupported version {version}", 4)
        block, gop_len, mode_code = struct.unpack("<HHB", fh.read(5))
        residual_mode = "f32" if mode_code == 0 else "i8"
        bh, bw = h // block, w // block
        i_frames: list[np.ndarray] = []
        p_frames: list[PFrame] = []
        for k in range(t):
            offset = fh.tell()
            tag = fh.read(1)
            expected = b"I" if k % gop_len == 0 else b"P"
            if tag != expected:
                raise FormatError(f"frame {k}: tag {tag!r}, expected {expected!r}", offset)
            if tag == b"I":
                raw = fh.read(h * w * 3 * 4)
                i_frames.append(np.frombuffer(raw, dtype="<f4").reshape(h, w, 3).copy())
            else:
                raw = fh.read(bh * bw * 2 * 2)
                md = np.frombuffer(raw, dtype="<i2").reshape(bh, bw, 2).copy()
                if mode_code == 0:
                    res = np.frombuffer(fh.read(h * w * 3 * 4), dtype="<f4").reshape(h, w, 3).copy()
                    scale = 0.0
                else:
                    (scale,) = struct.unpack("<f", fh.read(4))
                    q = np.frombuffer(fh.read(h * w * 3), dtype=np.int8).reshape(h, w, 3)
                    res = q.astype(np.float32) * scale
                p_frames.append(PFrame(md=md, residual=res, scale=scale))
    return GopClip(gop_len=gop_len, block=block, height=h, width=w, num_frames=t,
                   i_frames=i_frames, p_frames=p_frames, residual_mode=residual_mode)
