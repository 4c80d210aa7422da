"""Super-resolution of image sequences defined on nonuniform triangular
meshes: resampling operators, an observation model, optical-flow
registration, a recursive LMS reconstructor, synthetic phantoms and
shape-based quality metrics."""

from .config import ExperimentConfig, parse_config, preset
from .errors import ConfigError, DivergenceError, FileFormatError, MeshError
from .experiment import ExperimentResult, run_experiment
from .fileio import (emit_images, read_fem_image, read_flow, read_grid_image,
                     read_mesh, read_values, write_flow, write_mesh,
                     write_pgm16, write_values)
from .flow import FlowField, FlowParams, build_pyramid, compose_flows, horn_schunck
from .grid import GridImage
from .mesh import (FemImage, FemMesh, OUTSIDE, PixelAssignment, apply_hd,
                   build_pixel_assignment, downsample, upsample)
from .metrics import (BinaryMask, FrameMetrics, MetricsReport, binarize, boundary,
                      evaluate_pair, evaluate_sequence, hausdorff, masd, overlap)
from .operators import (Kernel, LinearOp, adjoint_observe, blur_adjoint,
                        convolve_neumann, forward_observe, gaussian_kernel,
                        laplacian_apply, warp_adjoint, warp_image)
from .phantoms import (COARSE, FINE, LUNG, T_SHAPE, DegradeSpec, SceneSpec,
                       degrade, disc_mesh, render_lung, render_scene,
                       render_tshape, tshape_centers)
from .srr import (SrrConfig, SrrState, estimate_operator_norm, run_sequence,
                  srr_cost, srr_cost_gradient, srr_init, srr_step)

__version__ = "0.1.0"
