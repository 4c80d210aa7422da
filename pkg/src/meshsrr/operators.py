"""Linear image operators of the observation and regularization models.

Provides the space-invariant blur (with Neumann / symmetric boundary
extension and a true transpose), the high-pass regularizer stencil, dense
backward warping with its scatter transpose, and the composed forward
observation operator (blur followed by mesh averaging).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy import ndimage, signal

from .grid import GridImage
from .mesh import PixelAssignment, apply_hd

_KERNEL_SUM_TOL = 1e-12
_SEPARABLE_REL_TOL = 1e-13

LAPLACIAN_STENCIL = np.array([[0.0, -1.0, 0.0],
                              [-1.0, 4.0, -1.0],
                              [0.0, -1.0, 0.0]])


@dataclass(frozen=True, eq=False)
class Kernel:
    """Odd-sized convolution mask, normalized to unit sum and symmetric
    under 180-degree rotation."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.array(self.taps, dtype=np.float64, copy=True)
        if taps.ndim != 2 or taps.shape[0] != taps.shape[1]:
            raise ValueError(f"kernel taps must be square, got shape {taps.shape}")
        if taps.shape[0] % 2 == 0:
            raise ValueError(f"kernel size must be odd, got {taps.shape[0]}")
        s = taps.sum()
        if abs(s - 1.0) > _KERNEL_SUM_TOL:
            raise ValueError(f"kernel taps must sum to 1 within {_KERNEL_SUM_TOL}, got {s!r}")
        if not np.allclose(taps, taps[::-1, ::-1], rtol=0.0,
                           atol=1e-12 * max(1.0, np.abs(taps).max())):
            raise ValueError("kernel must be symmetric under 180-degree rotation")
        taps.flags.writeable = False
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> int:
        return self.taps.shape[0]

    @cached_property
    def _separable_factors(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Rank-1 factorization (column, row) when the mask is exactly
        separable, else None. Used as an equivalent fast path."""
        u, s, vt = np.linalg.svd(self.taps)
        if self.size > 1 and s[1] > _SEPARABLE_REL_TOL * s[0]:
            return None
        col = u[:, 0] * np.sqrt(s[0])
        row = vt[0, :] * np.sqrt(s[0])
        if col.sum() < 0:
            col, row = -col, -row
        recon = np.outer(col, row)
        if np.abs(recon - self.taps).max() > 1e-12 * max(1.0, np.abs(self.taps).max()):
            return None
        return col, row


def gaussian_kernel(size: int, sigma: float) -> Kernel:
    """Isotropic Gaussian mask on integer offsets, normalized to unit sum."""
    if size < 1 or size % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {size}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    half = size // 2
    u = np.arange(-half, half + 1, dtype=np.float64)
    taps = np.exp(-(u[:, None] ** 2 + u[None, :] ** 2) / (2.0 * sigma ** 2))
    return Kernel(taps / taps.sum())


def _check_kernel_fit(img: GridImage, k: Kernel) -> None:
    limit = 2 * min(img.width, img.height) - 1
    if k.size > limit:
        raise ValueError(
            f"kernel size {k.size} exceeds limit {limit} for a "
            f"{img.width}x{img.height} image")


def convolve_neumann(img: GridImage, k: Kernel) -> GridImage:
    """2-D correlation with symmetric boundary extension.

    The extension reflects about the array edge without skipping the border
    sample (pad(-1) = pixel(0)), which preserves constants and makes the
    operator self-adjoint for quadrant-symmetric masks. Separable masks take
    an exactly equivalent two-pass route.
    """
    _check_kernel_fit(img, k)
    factors = k._separable_factors
    if factors is not None:
        col, row = factors
        out = ndimage.correlate1d(img.data, col, axis=0, mode="reflect")
        out = ndimage.correlate1d(out, row, axis=1, mode="reflect")
    else:
        out = ndimage.correlate(img.data, k.taps, mode="reflect")
    return GridImage(out)


def blur_adjoint(img: GridImage, k: Kernel) -> GridImage:
    """Exact transpose of ``convolve_neumann`` for the same kernel.

    Computed as a full (zero-extended) convolution followed by folding the
    margins back across the reflective boundary. For quadrant-symmetric masks
    this coincides with the forward operator; the equality is checked in the
    test suite, not assumed here.
    """
    _check_kernel_fit(img, k)
    p = k.size // 2
    if p == 0:
        return GridImage(img.data * k.taps[0, 0])
    h, w = img.height, img.width
    factors = k._separable_factors
    if factors is not None:
        col, row = factors
        padded = np.zeros((h + 2 * p, w + 2 * p))
        padded[p:p + h, p:p + w] = img.data
        full = ndimage.correlate1d(padded, col[::-1], axis=0, mode="constant")
        full = ndimage.correlate1d(full, row[::-1], axis=1, mode="constant")
    else:
        full = signal.convolve(img.data, k.taps, mode="full", method="direct")
    rows = full[p:p + h, :].copy()
    rows[0:p, :] += full[p - 1::-1, :]
    rows[h - p:h, :] += full[2 * p + h - 1:p + h - 1:-1, :]
    out = rows[:, p:p + w].copy()
    out[:, 0:p] += rows[:, p - 1::-1]
    out[:, w - p:w] += rows[:, 2 * p + w - 1:p + w - 1:-1]
    return GridImage(out)


def laplacian_apply(img: GridImage) -> GridImage:
    """5-point high-pass stencil with the same symmetric boundary extension.

    Constants are in the null space and every output sums to zero.
    """
    if img.width < 3 or img.height < 3:
        raise ValueError(f"image must be at least 3x3, got {img.width}x{img.height}")
    return GridImage(ndimage.correlate(img.data, LAPLACIAN_STENCIL, mode="reflect"))


def _bilinear_gather(data: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """Sample ``data`` at (sx, sy) with bilinear interpolation, clamping
    out-of-range coordinates to the border pixels."""
    h, w = data.shape
    sx = np.clip(sx, 0.0, w - 1.0)
    sy = np.clip(sy, 0.0, h - 1.0)
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    top = (1.0 - fx) * data[y0, x0] + fx * data[y0, x1]
    bot = (1.0 - fx) * data[y1, x0] + fx * data[y1, x1]
    return (1.0 - fy) * top + fy * bot


def warp_image(img: GridImage, flow) -> GridImage:
    """Backward warp: out(p) = img(p + flow(p)), bilinear, clamped at borders."""
    if (flow.height, flow.width) != (img.height, img.width):
        raise ValueError(
            f"flow {flow.width}x{flow.height} does not match image {img.width}x{img.height}")
    jj, ii = np.meshgrid(np.arange(img.height), np.arange(img.width), indexing="ij")
    return GridImage(_bilinear_gather(img.data, ii + flow.u, jj + flow.v))


def warp_adjoint(img: GridImage, flow) -> GridImage:
    """Scatter transpose of ``warp_image`` with identical bilinear weights."""
    if (flow.height, flow.width) != (img.height, img.width):
        raise ValueError(
            f"flow {flow.width}x{flow.height} does not match image {img.width}x{img.height}")
    h, w = img.height, img.width
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sx = np.clip(ii + flow.u, 0.0, w - 1.0).ravel()
    sy = np.clip(jj + flow.v, 0.0, h - 1.0).ravel()
    x0 = np.floor(sx).astype(np.int64)
    y0 = np.floor(sy).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = sx - x0
    fy = sy - y0
    vals = img.data.ravel()
    out = np.zeros((h, w))
    np.add.at(out, (y0, x0), (1.0 - fx) * (1.0 - fy) * vals)
    np.add.at(out, (y0, x1), fx * (1.0 - fy) * vals)
    np.add.at(out, (y1, x0), (1.0 - fx) * fy * vals)
    np.add.at(out, (y1, x1), fx * fy * vals)
    return GridImage(out)


def forward_observe(x: GridImage, assignment: PixelAssignment, k: Kernel) -> GridImage:
    """Composed observation: blur then mesh-averaging projection."""
    return apply_hd(convolve_neumann(x, k), assignment)


def adjoint_observe(y: GridImage, assignment: PixelAssignment, k: Kernel) -> GridImage:
    """Transpose of ``forward_observe`` (the projection is self-adjoint)."""
    return blur_adjoint(apply_hd(y, assignment), k)


@dataclass(frozen=True)
class LinearOp:
    """A linear image operator paired with its adjoint."""

    apply: Callable[[GridImage], GridImage]
    adjoint_apply: Callable[[GridImage], GridImage]
    descriptor: str


def blur_operator(k: Kernel) -> LinearOp:
    return LinearOp(lambda x: convolve_neumann(x, k),
                    lambda y: blur_adjoint(y, k),
                    f"blur({k.size}x{k.size})")


def mesh_projection_operator(assignment: PixelAssignment) -> LinearOp:
    return LinearOp(lambda x: apply_hd(x, assignment),
                    lambda y: apply_hd(y, assignment),
                    f"mesh_projection({assignment.n_elements} elements)")


def laplacian_operator() -> LinearOp:
    return LinearOp(laplacian_apply, laplacian_apply, "laplacian")


def warp_operator(flow) -> LinearOp:
    return LinearOp(lambda x: warp_image(x, flow),
                    lambda y: warp_adjoint(y, flow),
                    f"warp({flow.width}x{flow.height})")


def observation_operator(assignment: PixelAssignment, k: Kernel) -> LinearOp:
    return LinearOp(lambda x: forward_observe(x, assignment, k),
                    lambda y: adjoint_observe(y, assignment, k),
                    "observe(blur+mesh_projection)")
