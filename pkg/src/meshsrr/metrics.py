"""Shape-agreement metrics between binarized images.

Images are thresholded at a fraction of their maximum, boundaries are
extracted as inner 4-connectivity contours, and distances are reported in
normalized domain units (pixel pitch 2 / width) so values are comparable
across grid sizes.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .grid import GridImage


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Boolean raster with the same geometry conventions as GridImage."""

    bits: np.ndarray

    def __post_init__(self):
        bits = np.array(self.bits, dtype=bool, copy=True)
        if bits.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {bits.shape}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def count(self) -> int:
        return int(self.bits.sum())


def binarize(img: GridImage, fraction: float = 0.25) -> BinaryMask:
    """Threshold at ``fraction * max(img)``.

    A non-positive maximum yields an empty mask and a warning, since the
    threshold is undefined for such images.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    m = img.data.max()
    if m <= 0.0:
        warnings.warn("image maximum is not positive; binarized mask is empty",
                      stacklevel=2)
        return BinaryMask(np.zeros(img.data.shape, dtype=bool))
    return BinaryMask(img.data >= fraction * m)


def _check_same_grid(a: BinaryMask, b: BinaryMask) -> None:
    if a.bits.shape != b.bits.shape:
        raise ValueError(f"masks have mismatched shapes {a.bits.shape} vs {b.bits.shape}")


def overlap(a: BinaryMask, b: BinaryMask) -> float:
    """Volume overlap fraction |a and b| / |a or b|.

    Two empty masks compare as 1 (with a warning); if exactly one is empty
    the overlap is 0.
    """
    _check_same_grid(a, b)
    union = int((a.bits | b.bits).sum())
    if union == 0:
        warnings.warn("both masks are empty; overlap defined as 1", stacklevel=2)
        return 1.0
    return int((a.bits & b.bits).sum()) / union


def boundary(mask: BinaryMask) -> np.ndarray:
    """Boundary point set in normalized coordinates, shape (n, 2).

    A set pixel belongs to the boundary when any 4-neighbor is unset or the
    pixel touches the image border.
    """
    b = mask.bits
    padded = np.pad(b, 1, mode="constant", constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    edge = b & ~interior
    js, iis = np.nonzero(edge)
    xs = -1.0 + (iis + 0.5) * (2.0 / mask.width)
    ys = -1.0 + (js + 0.5) * (2.0 / mask.height)
    return np.column_stack([xs, ys])


def _directed_min_d2(pa: np.ndarray, pb: np.ndarray) -> np.ndarray:
    """Squared distance from each point of pa to its nearest point of pb."""
    dx = pa[:, 0][:, None] - pb[:, 0][None, :]
    dy = pa[:, 1][:, None] - pb[:, 1][None, :]
    return (dx * dx + dy * dy).min(axis=1)


def _boundaries(a: BinaryMask, b: BinaryMask, what: str) -> tuple[np.ndarray, np.ndarray]:
    _check_same_grid(a, b)
    pa = boundary(a)
    pb = boundary(b)
    if pa.shape[0] == 0 or pb.shape[0] == 0:
        raise ValueError(f"{what} is undefined for an empty mask boundary")
    return pa, pb


def hausdorff(a: BinaryMask, b: BinaryMask) -> float:
    """Symmetric Hausdorff distance between the two boundaries."""
    pa, pb = _boundaries(a, b, "hausdorff distance")
    d_ab = _directed_min_d2(pa, pb).max()
    d_ba = _directed_min_d2(pb, pa).max()
    return float(np.sqrt(max(d_ab, d_ba)))


def masd(a: BinaryMask, b: BinaryMask) -> float:
    """Mean absolute surface distance: the symmetric average of per-point
    minimal boundary distances."""
    pa, pb = _boundaries(a, b, "mean absolute surface distance")
    d_ab = np.mean(np.sqrt(_directed_min_d2(pa, pb)))
    d_ba = np.mean(np.sqrt(_directed_min_d2(pb, pa)))
    return float(0.5 * (d_ab + d_ba))


@dataclass(frozen=True)
class FrameMetrics:
    overlap: float
    hausdorff: float
    masd: float


@dataclass(frozen=True)
class MetricsReport:
    """Per-frame scores plus sequence averages."""

    frames: tuple[FrameMetrics, ...]

    @property
    def avg_overlap(self) -> float:
        return float(np.mean([f.overlap for f in self.frames]))

    @property
    def avg_hausdorff(self) -> float:
        return float(np.mean([f.hausdorff for f in self.frames]))

    @property
    def avg_masd(self) -> float:
        return float(np.mean([f.masd for f in self.frames]))

    def to_csv(self) -> str:
        lines = ["frame,overlap,hausdorff,masd"]
        for t, f in enumerate(self.frames):
            lines.append(f"{t},{f.overlap:.12g},{f.hausdorff:.12g},{f.masd:.12g}")
        lines.append(f"avg,{self.avg_overlap:.12g},{self.avg_hausdorff:.12g},{self.avg_masd:.12g}")
        return "\n".join(lines) + "\n"


def evaluate_pair(truth: GridImage, estimate: GridImage,
                  fraction: float = 0.25) -> FrameMetrics:
    """Binarize both images at the same fraction and score the estimate."""
    tm = binarize(truth, fraction)
    em = binarize(estimate, fraction)
    return FrameMetrics(overlap=overlap(em, tm),
                        hausdorff=hausdorff(em, tm),
                        masd=masd(em, tm))


def evaluate_sequence(truths, estimates, fraction: float = 0.25) -> MetricsReport:
    if len(truths) != len(estimates):
        raise ValueError(f"sequence lengths differ: {len(truths)} vs {len(estimates)}")
    return MetricsReport(tuple(evaluate_pair(t, e, fraction)
                               for t, e in zip(truths, estimates)))
