"""Horn-Schunck optical flow with coarse-to-fine pyramids.

``horn_schunck(prev, nxt, params)`` returns the displacement field of scene
content from ``prev`` to ``nxt``; equivalently, backward-warping ``nxt`` by
the returned flow reproduces ``prev``. The smoothness weight is defined
against the textbook energy

    E(u, v) = sum((Ix*u + Iy*v + It)^2) + lam * sum over 4-neighbor edges
              ((u_p - u_q)^2 + (v_p - v_q)^2)

and each pyramid level is solved by red-black Gauss-Seidel sweeps, which
perform exact per-pixel minimization and therefore never increase the energy.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .grid import GridImage, require_same_shape
from .operators import convolve_neumann, gaussian_kernel, _bilinear_gather

_MIN_TOP_SIZE = 8


@dataclass(frozen=True, eq=False)
class FlowField:
    """Per-pixel displacement field; u is horizontal (columns), v vertical."""

    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        u = np.array(self.u, dtype=np.float64, copy=True)
        v = np.array(self.v, dtype=np.float64, copy=True)
        if u.ndim != 2 or u.shape != v.shape:
            raise ValueError(f"u and v must be matching 2-D arrays, got {u.shape} and {v.shape}")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ValueError("flow components contain non-finite values")
        u.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    @classmethod
    def zeros(cls, width: int, height: int) -> "FlowField":
        return cls(np.zeros((height, width)), np.zeros((height, width)))

    @classmethod
    def constant(cls, width: int, height: int, du: float, dv: float) -> "FlowField":
        return cls(np.full((height, width), float(du)),
                   np.full((height, width), float(dv)))

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @property
    def height(self) -> int:
        return self.u.shape[0]

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.u, self.v)


@dataclass(frozen=True)
class FlowParams:
    """Solver settings. ``lam`` weighs the smoothness term of the textbook
    energy; inputs are jointly rescaled to [0, 1] before estimation so the
    default is independent of image units. The strong default favors
    near-rigid fields, which is what noisy tomographic sequences need."""

    lam: float = 15.0
    pyramid_levels: int = 4
    pyramid_spacing: float = 2.0
    iterations_per_level: int = 100
    warps_per_level: int = 3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.pyramid_levels < 1:
            raise ValueError(f"pyramid_levels must be >= 1, got {self.pyramid_levels}")
        if self.pyramid_spacing <= 1:
            raise ValueError(f"pyramid_spacing must be > 1, got {self.pyramid_spacing}")
        if self.iterations_per_level < 1 or self.warps_per_level < 1:
            raise ValueError("iterations_per_level and warps_per_level must be >= 1")


def _resample(data: np.ndarray, new_w: int, new_h: int) -> np.ndarray:
    """Bilinear resize with center-aligned sampling and clamped borders."""
    h, w = data.shape
    sx = (np.arange(new_w) + 0.5) * (w / new_w) - 0.5
    sy = (np.arange(new_h) + 0.5) * (h / new_h) - 0.5
    SX, SY = np.meshgrid(sx, sy)
    return _bilinear_gather(data, SX, SY)


def _pyramid_sizes(width: int, height: int, levels: int, spacing: float) -> list[tuple[int, int]]:
    sizes = [(width, height)]
    for _ in range(1, levels):
        w, h = sizes[-1]
        nw = max(1, int(round(w / spacing)))
        nh = max(1, int(round(h / spacing)))
        if (nw, nh) == (w, h):
            break
        sizes.append((nw, nh))
    return sizes


def build_pyramid(img: GridImage, levels: int, spacing: float) -> list[GridImage]:
    """Coarse-to-fine pyramid: level 0 is the input, each next level is
    Gaussian-smoothed (sigma = 0.8 * spacing) and bilinearly subsampled."""
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    if spacing <= 1:
        raise ValueError(f"spacing must be > 1, got {spacing}")
    sigma = 0.8 * spacing
    out = [img]
    for nw, nh in _pyramid_sizes(img.width, img.height, levels, spacing)[1:]:
        prev = out[-1]
        size = 2 * int(np.ceil(2.5 * sigma)) + 1
        size = min(size, 2 * min(prev.width, prev.height) - 1)
        if size % 2 == 0:
            size -= 1
        smoothed = convolve_neumann(prev, gaussian_kernel(max(size, 1), sigma))
        out.append(GridImage(_resample(smoothed.data, nw, nh)))
    return out


def _neighbor_sums(f: np.ndarray) -> np.ndarray:
    s = np.zeros_like(f)
    s[1:, :] += f[:-1, :]
    s[:-1, :] += f[1:, :]
    s[:, 1:] += f[:, :-1]
    s[:, :-1] += f[:, 1:]
    return s


def _neighbor_counts(h: int, w: int) -> np.ndarray:
    n = np.full((h, w), 4.0)
    n[0, :] -= 1
    n[-1, :] -= 1
    n[:, 0] -= 1
    n[:, -1] -= 1
    return n


def flow_energy(ix: np.ndarray, iy: np.ndarray, c: np.ndarray,
                u: np.ndarray, v: np.ndarray, lam: float) -> float:
    """Discrete energy of the linearized data term plus smoothness."""
    data = float(((ix * u + iy * v + c) ** 2).sum())
    smooth = float(((u[1:, :] - u[:-1, :]) ** 2).sum() + ((u[:, 1:] - u[:, :-1]) ** 2).sum()
                   + ((v[1:, :] - v[:-1, :]) ** 2).sum() + ((v[:, 1:] - v[:, :-1]) ** 2).sum())
    return data + lam * smooth


def solve_linearized_flow(ix: np.ndarray, iy: np.ndarray, c: np.ndarray,
                          u0: np.ndarray, v0: np.ndarray, lam: float,
                          iterations: int,
                          energies: list[float] | None = None
                          ) -> tuple[np.ndarray, np.ndarray]:
    """Red-black Gauss-Seidel solve of the linearized flow problem.

    Each half-sweep minimizes the energy exactly over one checkerboard color,
    so the recorded energies are non-increasing. ``energies`` (when given)
    receives the value before the first sweep and after every full sweep.
    """
    h, w = ix.shape
    u = u0.copy()
    v = v0.copy()
    n = _neighbor_counts(h, w)
    denom = lam * n + ix * ix + iy * iy
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    colors = ((ii + jj) % 2 == 0, (ii + jj) % 2 == 1)
    if energies is not None:
        energies.append(flow_energy(ix, iy, c, u, v, lam))
    for _ in range(iterations):
        for color in colors:
            ubar = _neighbor_sums(u) / n
            vbar = _neighbor_sums(v) / n
            d = ix * ubar + iy * vbar + c
            u[color] = (ubar - ix * d / denom)[color]
            v[color] = (vbar - iy * d / denom)[color]
        if energies is not None:
            energies.append(flow_energy(ix, iy, c, u, v, lam))
    return u, v


_DERIV = np.array([-0.5, 0.0, 0.5])


def _derivatives(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Central differences averaged over the (reference, warped) pair."""
    ix = 0.5 * (ndimage.correlate1d(a, _DERIV, axis=1, mode="reflect")
                + ndimage.correlate1d(b, _DERIV, axis=1, mode="reflect"))
    iy = 0.5 * (ndimage.correlate1d(a, _DERIV, axis=0, mode="reflect")
                + ndimage.correlate1d(b, _DERIV, axis=0, mode="reflect"))
    it = b - a
    return ix, iy, it


def _global_translation_step(ix: np.ndarray, iy: np.ndarray, c: np.ndarray,
                             u: np.ndarray, v: np.ndarray
                             ) -> tuple[np.ndarray, np.ndarray]:
    """Add the constant field minimizing the linearized data term.

    A constant increment leaves the smoothness term untouched and the
    least-squares choice can only lower the data term, so this step never
    raises the energy while letting large smoothness weights recover global
    translations in few sweeps.
    """
    r0 = ix * u + iy * v + c
    sxx = float((ix * ix).sum())
    sxy = float((ix * iy).sum())
    syy = float((iy * iy).sum())
    det = sxx * syy - sxy * sxy
    if det <= 1e-12 * max(1.0, sxx + syy) ** 2:
        return u, v
    bx = -float((ix * r0).sum())
    by = -float((iy * r0).sum())
    du = (syy * bx - sxy * by) / det
    dv = (sxx * by - sxy * bx) / det
    return u + du, v + dv


def horn_schunck(prev: GridImage, nxt: GridImage, params: FlowParams) -> FlowField:
    """Estimate the dense displacement field from ``prev`` to ``nxt``.

    Coarse-to-fine: flow is upscaled between levels, ``nxt`` is re-warped at
    each warp iteration, and the linearized problem is solved in terms of the
    total flow. Levels whose top of the pyramid would fall below 8x8 are
    dropped with a warning.
    """
    require_same_shape(prev, nxt, "flow input images")
    if min(prev.width, prev.height) < 2:
        raise ValueError("flow estimation needs at least a 2x2 image")
    lo = min(prev.data.min(), nxt.data.min())
    hi = max(prev.data.max(), nxt.data.max())
    if hi - lo <= 0:
        return FlowField.zeros(prev.width, prev.height)
    a_img = GridImage((prev.data - lo) / (hi - lo))
    b_img = GridImage((nxt.data - lo) / (hi - lo))

    levels = params.pyramid_levels
    sizes = _pyramid_sizes(prev.width, prev.height, levels, params.pyramid_spacing)
    while len(sizes) > 1 and min(sizes[-1]) < _MIN_TOP_SIZE:
        sizes = sizes[:-1]
    if len(sizes) < levels:
        warnings.warn(
            f"pyramid reduced from {levels} to {len(sizes)} level(s) so the top "
            f"stays at least {_MIN_TOP_SIZE} pixels on a side", stacklevel=2)
        levels = len(sizes)

    pa = build_pyramid(a_img, levels, params.pyramid_spacing)
    pb = build_pyramid(b_img, levels, params.pyramid_spacing)

    top = pa[-1]
    u = np.zeros((top.height, top.width))
    v = np.zeros((top.height, top.width))
    for level in range(levels - 1, -1, -1):
        a = pa[level].data
        b = pb[level].data
        h, w = a.shape
        if u.shape != (h, w):
            u = _resample(u, w, h) * (w / u.shape[1])
            v = _resample(v, w, h) * (h / v.shape[0])
        jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        for _ in range(params.warps_per_level):
            warped = _bilinear_gather(b, ii + u, jj + v)
            ix, iy, it = _derivatives(a, warped)
            c = it - ix * u - iy * v
            u, v = _global_translation_step(ix, iy, c, u, v)
            u, v = solve_linearized_flow(ix, iy, c, u, v, params.lam,
                                         params.iterations_per_level)
    return FlowField(u, v)


def compose_flows(f_ab: FlowField, f_bc: FlowField) -> FlowField:
    """Chain two fields: f_ac(p) = f_bc(p) + f_ab(p + f_bc(p)).

    ``f_ab`` is sampled bilinearly with clamped borders, matching the warp
    operator, so warping by the composite equals warping twice.
    """
    if (f_ab.height, f_ab.width) != (f_bc.height, f_bc.width):
        raise ValueError("flow fields have mismatched shapes")
    h, w = f_bc.height, f_bc.width
    jj, ii = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    sx = ii + f_bc.u
    sy = jj + f_bc.v
    return FlowField(f_bc.u + _bilinear_gather(f_ab.u, sx, sy),
                     f_bc.v + _bilinear_gather(f_ab.v, sx, sy))
