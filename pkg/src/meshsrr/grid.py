"""Scalar raster images on the normalized [-1, 1]^2 domain."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class GridImage:
    """Scalar image on a regular width x height grid.

    Pixel (i, j) (column i, row j) is centered at
    ``x_i = -1 + (i + 0.5) * 2 / width`` and
    ``y_j = -1 + (j + 0.5) * 2 / height``.
    Values are stored row-major as ``data[j, i]``. The array is copied on
    construction, validated to be finite, and frozen, so instances are safe
    to share.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, order="C", copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image data must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"image contains a non-finite value at flat index {bad}")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def zeros(cls, width: int, height: int) -> "GridImage":
        return cls(np.zeros((height, width)))

    @classmethod
    def full(cls, width: int, height: int, value: float) -> "GridImage":
        return cls(np.full((height, width), float(value)))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def pitch_x(self) -> float:
        """Pixel spacing along x in normalized units."""
        return 2.0 / self.width

    @property
    def pitch_y(self) -> float:
        return 2.0 / self.height

    def pixel_xs(self) -> np.ndarray:
        """Column-center x coordinates, shape (width,)."""
        return -1.0 + (np.arange(self.width) + 0.5) * self.pitch_x

    def pixel_ys(self) -> np.ndarray:
        """Row-center y coordinates, shape (height,)."""
        return -1.0 + (np.arange(self.height) + 0.5) * self.pitch_y


def require_same_shape(a: GridImage, b: GridImage, what: str = "images") -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{what} have mismatched shapes {a.data.shape} vs {b.data.shape}")
