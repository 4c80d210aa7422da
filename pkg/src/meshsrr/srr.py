"""Recursive least-mean-squares super-resolution.

Each incoming frame first motion-compensates the running high-resolution
estimate (predict), then runs K gradient iterations on the regularized
single-frame data-fit cost built from the blur + mesh-averaging observation
model (correct):

    cost(x) = ||y_up - P B x||^2 (over assigned pixels) + alpha * ||S x||^2
    x <- x - mu * [ B' P (P B x - y_up) + alpha * S' S x ]

where B is the blur, P the mesh-averaging projection and S the high-pass
stencil. Pixels outside the mesh are reset to zero after every iteration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, MeshError
from .flow import FlowField, FlowParams, horn_schunck
from .grid import GridImage
from .mesh import FemImage, PixelAssignment, apply_hd, build_pixel_assignment, upsample
from .operators import (Kernel, blur_adjoint, convolve_neumann, laplacian_apply,
                        warp_image)

_DIVERGENCE_FACTOR = 10.0


@dataclass(frozen=True)
class SrrConfig:
    """Solver hyperparameters: step size, inner iterations per frame,
    regularization weight, grid size and blur kernel."""

    mu: float = 0.01
    k_iters: int = 100
    alpha_srr: float = 0.3
    grid: tuple[int, int] = (200, 200)
    kernel: Kernel = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.k_iters < 1:
            raise ValueError(f"k_iters must be >= 1, got {self.k_iters}")
        if self.alpha_srr < 0:
            raise ValueError(f"alpha_srr must be >= 0, got {self.alpha_srr}")
        w, h = self.grid
        if w < 3 or h < 3:
            raise ValueError(f"grid must be at least 3x3, got {w}x{h}")
        if self.kernel is None:
            raise ValueError("an explicit blur kernel is required")


@dataclass(frozen=True)
class SrrState:
    """Running estimate after processing ``frame_index`` frames.

    ``last_cost`` is NaN until the first step; afterwards it equals the cost
    of ``x_hat`` against the most recent frame.
    """

    x_hat: GridImage
    frame_index: int
    last_cost: float


def srr_init(y_up0: GridImage, cfg: SrrConfig) -> SrrState:
    """Start from a blur-matched smoothing of the first observation.

    Applying the acquisition blur to the first upsampled observation keeps
    smooth inputs unchanged (constants are preserved) while suppressing
    observation noise that the fixed-step correction iterations would
    otherwise carry across many frames.
    """
    w, h = cfg.grid
    if (y_up0.width, y_up0.height) != (w, h):
        raise ValueError(
            f"observation {y_up0.width}x{y_up0.height} does not match configured grid {w}x{h}")
    return SrrState(x_hat=convolve_neumann(y_up0, cfg.kernel),
                    frame_index=0, last_cost=float("nan"))


def _cost_terms(x: np.ndarray, y: np.ndarray, assignment: PixelAssignment,
                kernel: Kernel, alpha: float
                ) -> tuple[float, np.ndarray, np.ndarray]:
    """Cost at x plus the intermediates reused by the gradient."""
    xi = GridImage(x)
    predicted = apply_hd(convolve_neumann(xi, kernel), assignment).data
    residual = np.where(assignment.inside_mask(), predicted - y, 0.0)
    cost = float((residual * residual).sum())
    if alpha > 0:
        s = laplacian_apply(xi).data
        cost += alpha * float((s * s).sum())
    else:
        s = None
    return cost, residual, s


def srr_cost(x: GridImage, y_up: GridImage, assignment: PixelAssignment,
             kernel: Kernel, alpha: float) -> float:
    """Data misfit over assigned pixels plus the smoothness penalty."""
    cost, _, _ = _cost_terms(x.data, y_up.data, assignment, kernel, alpha)
    return cost


def srr_cost_gradient(x: GridImage, y_up: GridImage, assignment: PixelAssignment,
                      kernel: Kernel, alpha: float) -> GridImage:
    """Analytic gradient of ``srr_cost`` with respect to x."""
    _, residual, s = _cost_terms(x.data, y_up.data, assignment, kernel, alpha)
    g = blur_adjoint(apply_hd(GridImage(residual), assignment), kernel).data
    if alpha > 0:
        g = g + alpha * laplacian_apply(GridImage(s)).data
    return GridImage(2.0 * g)


def srr_step(state: SrrState, y_up_t: GridImage, flow_t: FlowField,
             cfg: SrrConfig, assignment: PixelAssignment,
             cost_history: list[float] | None = None) -> SrrState:
    """Process one frame: predict by warping, then K correction iterations.

    ``flow_t`` must register the previous frame onto the current one, i.e.
    ``warp_image(x_hat, flow_t)`` tracks frame t. When ``cost_history`` is
    given it receives the cost before every iteration and the final cost
    (k_iters + 1 entries). Raises DivergenceError on non-finite intermediates
    or when the cost exceeds 10x its initial value.
    """
    w, h = cfg.grid
    if (y_up_t.width, y_up_t.height) != (w, h):
        raise ValueError("observation does not match configured grid")
    if (assignment.width, assignment.height) != (w, h):
        raise MeshError("pixel assignment does not match configured grid")
    frame = state.frame_index
    outside = ~assignment.inside_mask()
    x = warp_image(state.x_hat, flow_t).data.copy()
    x[outside] = 0.0
    y = y_up_t.data
    alpha = cfg.alpha_srr
    initial = None
    cost = float("nan")
    for it in range(cfg.k_iters):
        try:
            cost, residual, s = _cost_terms(x, y, assignment, cfg.kernel, alpha)
            if cost_history is not None:
                cost_history.append(cost)
            if initial is None:
                initial = cost
            elif initial > 0 and cost > _DIVERGENCE_FACTOR * initial:
                raise DivergenceError(
                    f"cost grew beyond {_DIVERGENCE_FACTOR}x its initial value "
                    f"({cost:.3e} vs {initial:.3e}); reduce the step size",
                    iteration=it, frame=frame)
            g = blur_adjoint(apply_hd(GridImage(residual), assignment), cfg.kernel).data
            if alpha > 0:
                g = g + alpha * laplacian_apply(GridImage(s)).data
            x = x - cfg.mu * g
            x[outside] = 0.0
        except ValueError as exc:
            raise DivergenceError(f"non-finite intermediate: {exc}",
                                  iteration=it, frame=frame) from exc
    try:
        cost, _, _ = _cost_terms(x, y, assignment, cfg.kernel, alpha)
    except ValueError as exc:
        raise DivergenceError(f"non-finite result: {exc}",
                              iteration=cfg.k_iters, frame=frame) from exc
    if cost_history is not None:
        cost_history.append(cost)
    return SrrState(x_hat=GridImage(x), frame_index=frame + 1, last_cost=cost)


def run_sequence(observations: list[FemImage], cfg: SrrConfig,
                 flow_params: FlowParams,
                 known_flows: list[FlowField] | None = None,
                 assignment: PixelAssignment | None = None,
                 cost_histories: list[list[float]] | None = None) -> list[GridImage]:
    """Fold the recursion over a frame sequence and return every estimate.

    All observations must share one mesh. Frame 0 is processed with zero
    flow; later frames use ``known_flows[t - 1]`` when provided, otherwise
    the flow is estimated from consecutive upsampled images. Appends one
    per-frame cost history to ``cost_histories`` when given.
    """
    if not observations:
        raise ValueError("observation sequence is empty")
    mesh = observations[0].mesh
    for t, o in enumerate(observations[1:], start=1):
        if o.mesh is not mesh:
            raise MeshError(f"observation {t} uses a different mesh; the mesh must be fixed")
    if known_flows is not None and len(known_flows) != len(observations) - 1:
        raise ValueError(
            f"expected {len(observations) - 1} known flows, got {len(known_flows)}")
    w, h = cfg.grid
    if assignment is None:
        assignment = build_pixel_assignment(mesh, w, h)
    y_ups = [upsample(o, assignment) for o in observations]
    state = srr_init(y_ups[0], cfg)
    results: list[GridImage] = []
    for t, y in enumerate(y_ups):
        if t == 0:
            flow = FlowField.zeros(w, h)
        elif known_flows is not None:
            flow = known_flows[t - 1]
        else:
            flow = horn_schunck(y_ups[t], y_ups[t - 1], flow_params)
        history: list[float] | None = [] if cost_histories is not None else None
        try:
            state = srr_step(state, y, flow, cfg, assignment, cost_history=history)
        except DivergenceError:
            raise
        except Exception as exc:
            raise type(exc)(f"frame {t}: {exc}") from exc
        if cost_histories is not None:
            cost_histories.append(history)
        results.append(state.x_hat)
    return results


def estimate_operator_norm(assignment: PixelAssignment, kernel: Kernel,
                           alpha: float, width: int, height: int,
                           iterations: int = 30, seed: int = 0) -> float:
    """Largest eigenvalue of B' P B + alpha * S' S by power iteration.

    The cost is non-increasing over the correction iterations whenever
    mu times this value stays below 1.
    """
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((height, width))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(iterations):
        xi = GridImage(x)
        y = blur_adjoint(apply_hd(convolve_neumann(xi, kernel), assignment), kernel).data
        if alpha > 0:
            y = y + alpha * laplacian_apply(laplacian_apply(xi)).data
        lam = float(np.linalg.norm(y))
        if lam == 0:
            return 0.0
        x = y / lam
    return lam
