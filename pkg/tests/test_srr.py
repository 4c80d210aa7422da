import numpy as np
import pytest

from meshsrr.errors import DivergenceError
from meshsrr.flow import FlowField, FlowParams
from meshsrr.grid import GridImage
from meshsrr.mesh import FemImage, build_pixel_assignment, upsample
from meshsrr.operators import forward_observe, gaussian_kernel
from meshsrr.phantoms import COARSE, disc_mesh
from meshsrr.srr import (SrrConfig, estimate_operator_norm, run_sequence,
                         srr_cost, srr_cost_gradient, srr_init, srr_step)

from oracles import (dense_blur_matrix, dense_laplacian_matrix,
                     dense_projection_matrix)


def make_problem(n=8, kernel_size=3, sigma=1.0, square_mesh=None):
    from meshsrr.mesh import FemMesh
    nodes = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    mesh = FemMesh(nodes, np.array([[0, 1, 2], [0, 2, 3]]))
    asg = build_pixel_assignment(mesh, n, n)
    kernel = gaussian_kernel(kernel_size, sigma)
    return mesh, asg, kernel


def cfg_for(n, kernel, mu=0.01, k_iters=100, alpha=0.01):
    return SrrConfig(mu=mu, k_iters=k_iters, alpha_srr=alpha,
                     grid=(n, n), kernel=kernel)


class TestInit:
    def test_cost_nonnegative_after_init(self):
        _, asg, kernel = make_problem()
        y = GridImage(np.random.default_rng(0).standard_normal((8, 8)))
        state = srr_init(y, cfg_for(8, kernel))
        assert srr_cost(state.x_hat, y, asg, kernel, 0.01) >= 0.0

    def test_constant_observation_stays_constant(self):
        _, asg, kernel = make_problem()
        state = srr_init(GridImage.full(8, 8, 2.0), cfg_for(8, kernel))
        assert np.abs(state.x_hat.data - 2.0).max() <= 1e-12
        assert state.frame_index == 0

    def test_zero_observation(self):
        _, asg, kernel = make_problem()
        y = GridImage.zeros(8, 8)
        state = srr_init(y, cfg_for(8, kernel))
        assert np.abs(state.x_hat.data).max() == 0.0
        rng = np.random.default_rng(1)
        y_obs = GridImage(np.abs(rng.standard_normal((8, 8))))
        inside = asg.inside_mask()
        expected = float((y_obs.data[inside] ** 2).sum())
        assert srr_cost(state.x_hat, y_obs, asg, kernel, 0.0) == pytest.approx(expected)

    def test_grid_mismatch_rejected(self):
        _, _, kernel = make_problem()
        with pytest.raises(ValueError, match="grid"):
            srr_init(GridImage.zeros(9, 8), cfg_for(8, kernel))


class TestCost:
    def test_exact_fit_zero_cost(self):
        _, asg, kernel = make_problem()
        rng = np.random.default_rng(2)
        x = GridImage(rng.standard_normal((8, 8)))
        y = forward_observe(x, asg, kernel)
        assert srr_cost(x, y, asg, kernel, 0.0) <= 1e-20

    def test_matches_dense_quadratic_form(self):
        _, asg, kernel = make_problem()
        rng = np.random.default_rng(3)
        x = rng.standard_normal((8, 8))
        y = rng.standard_normal((8, 8))
        A = dense_projection_matrix(asg) @ dense_blur_matrix(kernel.taps, 8, 8)
        S = dense_laplacian_matrix(8, 8)
        inside = asg.inside_mask().ravel()
        r = (y.ravel() - A @ x.ravel()) * inside
        alpha = 0.07
        expected = float(r @ r + alpha * (S @ x.ravel()) @ (S @ x.ravel()))
        got = srr_cost(GridImage(x), GridImage(y), asg, kernel, alpha)
        assert got == pytest.approx(expected, rel=1e-12)


class TestGradient:
    @pytest.mark.parametrize("trial", range(10))
    def test_matches_central_differences(self, trial):
        _, asg, kernel = make_problem()
        rng = np.random.default_rng(100 + trial)
        x = rng.standard_normal((8, 8))
        y = GridImage(rng.standard_normal((8, 8)))
        alpha = 0.05
        g = srr_cost_gradient(GridImage(x), y, asg, kernel, alpha).data
        eps = 1e-5
        fd = np.zeros_like(x)
        for j in range(8):
            for i in range(8):
                xp = x.copy(); xp[j, i] += eps
                xm = x.copy(); xm[j, i] -= eps
                fd[j, i] = (srr_cost(GridImage(xp), y, asg, kernel, alpha)
                            - srr_cost(GridImage(xm), y, asg, kernel, alpha)) / (2 * eps)
        rel = np.linalg.norm(fd - g) / np.linalg.norm(g)
        assert rel <= 1e-5


class TestStep:
    def test_fixed_point_when_data_explained(self):
        _, asg, kernel = make_problem()
        rng = np.random.default_rng(4)
        x = GridImage(rng.standard_normal((8, 8)))
        cfg = cfg_for(8, kernel, k_iters=25, alpha=0.0)
        y = forward_observe(x, asg, kernel)
        state = srr_step(srr_init_raw(x), y, FlowField.zeros(8, 8), cfg, asg)
        assert np.abs(state.x_hat.data - x.data).max() <= 1e-12
        assert state.frame_index == 1

    def test_cost_non_increasing_small_step(self):
        mesh, asg, kernel = make_problem()
        rng = np.random.default_rng(5)
        y = upsample(FemImage(mesh, rng.standard_normal(2)), asg)
        cfg = cfg_for(8, kernel, mu=0.01, k_iters=100, alpha=0.0)
        history = []
        srr_step(srr_init(y, cfg), y, FlowField.zeros(8, 8), cfg, asg,
                 cost_history=history)
        assert len(history) == 101
        for before, after in zip(history, history[1:]):
            assert after <= before * (1 + 1e-12) + 1e-15

    def test_descent_under_power_method_bound(self):
        _, asg, kernel = make_problem()
        alpha = 0.3
        lmax = estimate_operator_norm(asg, kernel, alpha, 8, 8)
        mu = 0.9 / lmax
        cfg = cfg_for(8, kernel, mu=mu, k_iters=60, alpha=alpha)
        rng = np.random.default_rng(6)
        y = GridImage(rng.standard_normal((8, 8)))
        history = []
        srr_step(srr_init(y, cfg), y, FlowField.zeros(8, 8), cfg, asg,
                 cost_history=history)
        for before, after in zip(history, history[1:]):
            assert after <= before * (1 + 1e-12) + 1e-15

    def test_divergence_detected_for_huge_step(self):
        _, asg, kernel = make_problem()
        cfg = cfg_for(8, kernel, mu=50.0, k_iters=200, alpha=0.5)
        rng = np.random.default_rng(7)
        y = GridImage(rng.standard_normal((8, 8)))
        with pytest.raises(DivergenceError) as err:
            srr_step(srr_init(y, cfg), y, FlowField.zeros(8, 8), cfg, asg)
        assert err.value.iteration is not None

    def test_matches_dense_reference_descent(self):
        """Final cost agrees with an explicit dense-matrix gradient descent."""
        n = 16
        _, asg, kernel = make_problem(n=n, kernel_size=5, sigma=1.2)
        rng = np.random.default_rng(8)
        y = rng.standard_normal((n, n))
        alpha = 0.01
        cfg = cfg_for(n, kernel, mu=0.01, k_iters=100, alpha=alpha)

        A = dense_projection_matrix(asg) @ dense_blur_matrix(kernel.taps, n, n)
        S = dense_laplacian_matrix(n, n)
        M = A.T @ A + alpha * (S.T @ S)
        b = A.T @ y.ravel()
        x0 = dense_blur_matrix(kernel.taps, n, n) @ y.ravel()
        xd = x0.copy()
        for _ in range(100):
            xd = xd - cfg.mu * (M @ xd - b)
        r = y.ravel() - A @ xd
        ref_cost = float(r @ r + alpha * (S @ xd) @ (S @ xd))

        state = srr_step(srr_init(GridImage(y), cfg), GridImage(y),
                         FlowField.zeros(n, n), cfg, asg)
        assert state.last_cost == pytest.approx(ref_cost, rel=1e-8)

    def test_outside_pixels_reset_to_zero(self):
        mesh = disc_mesh(COARSE)
        n = 32
        asg = build_pixel_assignment(mesh, n, n)
        kernel = gaussian_kernel(5, 1.5)
        cfg = cfg_for(n, kernel, k_iters=5, alpha=0.1)
        rng = np.random.default_rng(9)
        y = upsample(FemImage(mesh, rng.standard_normal(mesh.n_elements)), asg)
        state = srr_step(srr_init(y, cfg), y, FlowField.zeros(n, n), cfg, asg)
        assert (state.x_hat.data[~asg.inside_mask()] == 0.0).all()

    def test_determinism(self):
        _, asg, kernel = make_problem()
        cfg = cfg_for(8, kernel, k_iters=30, alpha=0.2)
        rng = np.random.default_rng(10)
        y = GridImage(rng.standard_normal((8, 8)))
        flow = FlowField.constant(8, 8, 0.3, -0.2)
        a = srr_step(srr_init(y, cfg), y, flow, cfg, asg)
        b = srr_step(srr_init(y, cfg), y, flow, cfg, asg)
        assert np.array_equal(a.x_hat.data, b.x_hat.data)
        assert a.last_cost == b.last_cost

    def test_last_cost_matches_cost_of_estimate(self):
        _, asg, kernel = make_problem()
        cfg = cfg_for(8, kernel, k_iters=12, alpha=0.15)
        rng = np.random.default_rng(20)
        y = GridImage(rng.standard_normal((8, 8)))
        state = srr_step(srr_init(y, cfg), y, FlowField.zeros(8, 8), cfg, asg)
        assert state.last_cost == srr_cost(state.x_hat, y, asg, kernel, cfg.alpha_srr)
        assert np.isfinite(state.last_cost)


def srr_init_raw(x_hat: GridImage):
    """State with a verbatim estimate, bypassing the smoothing start."""
    from meshsrr.srr import SrrState
    return SrrState(x_hat=x_hat, frame_index=0, last_cost=float("nan"))


class TestRunSequence:
    def test_single_frame_equals_init_plus_one_step(self, square_mesh):
        n = 8
        asg = build_pixel_assignment(square_mesh, n, n)
        kernel = gaussian_kernel(3, 1.0)
        cfg = cfg_for(n, kernel, k_iters=20, alpha=0.05)
        rng = np.random.default_rng(11)
        obs = FemImage(square_mesh, rng.standard_normal(2))
        result = run_sequence([obs], cfg, FlowParams())
        y = upsample(obs, asg)
        expected = srr_step(srr_init(y, cfg), y, FlowField.zeros(n, n), cfg, asg)
        assert np.array_equal(result[0].data, expected.x_hat.data)

    def test_static_scene_cost_non_increasing_over_frames(self, square_mesh):
        n = 8
        kernel = gaussian_kernel(3, 1.0)
        cfg = cfg_for(n, kernel, k_iters=30, alpha=0.0)
        rng = np.random.default_rng(12)
        obs = FemImage(square_mesh, rng.standard_normal(2))
        histories = []
        run_sequence([obs] * 6, cfg, FlowParams(), cost_histories=histories)
        finals = [h[-1] for h in histories]
        for before, after in zip(finals, finals[1:]):
            assert after <= before * (1 + 1e-12) + 1e-15

    def test_known_flows_length_check(self, square_mesh):
        kernel = gaussian_kernel(3, 1.0)
        cfg = cfg_for(8, kernel, k_iters=2)
        obs = FemImage(square_mesh, [1.0, 2.0])
        with pytest.raises(ValueError, match="known flows"):
            run_sequence([obs, obs], cfg, FlowParams(),
                         known_flows=[])

    def test_mixed_meshes_rejected(self, square_mesh, one_triangle_mesh):
        kernel = gaussian_kernel(3, 1.0)
        cfg = cfg_for(8, kernel, k_iters=2)
        a = FemImage(square_mesh, [1.0, 2.0])
        b = FemImage(one_triangle_mesh, [1.0])
        with pytest.raises(Exception, match="mesh"):
            run_sequence([a, b], cfg, FlowParams())

    def test_empty_sequence_rejected(self):
        kernel = gaussian_kernel(3, 1.0)
        with pytest.raises(ValueError, match="empty"):
            run_sequence([], cfg_for(8, kernel), FlowParams())
