import numpy as np
import pytest

from imgset.layout import build_set_mask, build_token_layout
from imgset.model import ModelConfig, init_params
from imgset.model.data import NULL_ID
from imgset.model.net import unpatchify
from imgset.setgen import (
    FrozenLatentError,
    GridLayout,
    Schedule,
    cfg_combine,
    concat_grid,
    conquer_phase,
    divide_phase,
    euler_step,
    generate_set,
    grid_layout_for,
    initial_noise,
    reference_sampler,
    sliding_windows,
    split_grid,
)
from imgset.tensor import Rng, ShapeError


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig()


@pytest.fixture(scope="module")
def params(cfg):
    # the velocity head starts at zero; give it small random weights so the
    # sampler actually moves latents
    p = init_params(cfg, Rng(7))
    p["w_head"] = Rng(8).randn(cfg.d_model, cfg.patch_dim, dtype=np.float32) * 0.02
    return p


FAST = Schedule(total_steps=4, divide_steps=1)


class TestSchedule:
    def test_defaults(self):
        s = Schedule()
        assert (s.total_steps, s.divide_steps, s.guidance_scale) == (20, 2, 3.5)

    def test_sigma_grid(self):
        s = Schedule(total_steps=4)
        assert np.allclose(s.sigmas, [1.0, 0.75, 0.5, 0.25, 0.0])
        assert s.sigmas[0] == 1.0 and s.sigmas[-1] == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            Schedule(total_steps=10, divide_steps=11)
        with pytest.raises(ValueError):
            Schedule(guidance_scale=-1.0)


class TestGridPolicy:
    @pytest.mark.parametrize("n,rows,cols", [(1, 1, 1), (2, 1, 2), (3, 1, 3), (5, 1, 5)])
    def test_row_layouts(self, n, rows, cols):
        g = grid_layout_for(n, 8)
        assert (g.rows, g.cols, g.windows) == (rows, cols, None)

    def test_four_is_square(self):
        g = grid_layout_for(4, 8)
        assert (g.rows, g.cols, g.windows) == (2, 2, None)

    def test_above_five_uses_windows(self):
        g = grid_layout_for(6, 8)
        assert g.windows == ((0, 1, 2, 3), (2, 3, 4, 5))

    def test_invalid_count(self):
        with pytest.raises(ValueError):
            grid_layout_for(0, 8)


class TestSlidingWindows:
    @pytest.mark.parametrize(
        "n,starts",
        [(6, [0, 2]), (7, [0, 2, 3]), (8, [0, 2, 4]), (9, [0, 2, 4, 5]),
         (10, [0, 2, 4, 6]), (11, [0, 2, 4, 6, 7]), (12, [0, 2, 4, 6, 8])],
    )
    def test_starts_and_clamp(self, n, starts):
        windows = sliding_windows(n)
        assert [w[0] for w in windows] == starts
        assert all(len(w) == 4 for w in windows)
        assert windows[-1][-1] == n - 1
        covered = set()
        for w in windows:
            covered.update(w)
        assert covered == set(range(n))

    def test_small_sets_single_window(self):
        assert sliding_windows(3) == ((0, 1, 2),)


class TestGridConcat:
    def test_round_trip(self, cfg):
        lats = [Rng(i).randn(cfg.tokens_per_image, cfg.patch_dim) for i in range(4)]
        grid = GridLayout(2, 2, cfg.tokens_per_side)
        X, coords = concat_grid(lats, grid)
        back = split_grid(X, grid, 4)
        for a, b in zip(lats, back):
            assert np.array_equal(a, b)
        assert coords.shape == (4 * cfg.tokens_per_image, 2)

    def test_cell_offsets(self, cfg):
        grid = GridLayout(2, 2, 8)
        assert grid.cell_offset(0) == (0, 0)
        assert grid.cell_offset(1) == (0, 8)
        assert grid.cell_offset(2) == (8, 0)
        assert grid.cell_offset(3) == (8, 8)

    def test_cell_order_keeps_coordinates(self, cfg):
        lats = [Rng(i).randn(4, 3) for i in range(2)]
        grid = GridLayout(1, 2, 2)
        _, c_id = concat_grid(lats, grid)
        _, c_perm = concat_grid([lats[1], lats[0]], grid, cell_order=[1, 0])
        # image placed first but assigned cell 1 carries cell 1 coordinates
        assert np.array_equal(c_perm[:4], c_id[4:])
        assert np.array_equal(c_perm[4:], c_id[:4])

    def test_validation(self, cfg):
        grid = GridLayout(1, 2, 2)
        with pytest.raises(ShapeError):
            concat_grid([], grid)
        with pytest.raises(ShapeError):
            concat_grid([np.zeros((4, 3))] * 3, grid)
        with pytest.raises(ValueError):
            concat_grid([np.zeros((4, 3))] * 2, grid, cell_order=[0, 0])


class TestNumericSteps:
    def test_cfg_combine(self):
        vu, vc = np.array([1.0]), np.array([3.0])
        assert cfg_combine(vu, vc, 0.0) == 1.0
        assert cfg_combine(vu, vc, 1.0) == 3.0
        assert cfg_combine(vu, vc, 3.5) == 1.0 + 3.5 * 2.0

    def test_euler_step_direction(self):
        x = np.array([1.0])
        v = np.array([2.0])
        out = euler_step(x, v, 0.5, 0.25)
        assert out == 1.0 + (0.25 - 0.5) * 2.0


class TestNoise:
    def test_per_image_streams(self, cfg):
        a = initial_noise(cfg, 0, 0)
        b = initial_noise(cfg, 0, 1)
        assert not np.array_equal(a, b)
        assert np.array_equal(a, initial_noise(cfg, 0, 0))


class TestDividePhase:
    def test_neighbor_independence(self, cfg, params):
        lat = divide_phase(params, cfg, [[1, 4], [2, 5], [3, 6]], FAST, seed=11)
        lat_b = divide_phase(params, cfg, [[3, 6], [2, 5], [1, 4]], FAST, seed=11)
        assert np.array_equal(lat[1], lat_b[1])

    def test_prompt_binds(self, cfg, params):
        lat = divide_phase(params, cfg, [[1, 4]], FAST, seed=11)
        lat_b = divide_phase(params, cfg, [[2, 5]], FAST, seed=11)
        assert not np.array_equal(lat[0], lat_b[0])


class TestPipeline:
    def test_single_image_matches_reference_bitwise(self, cfg, params):
        imgs = generate_set(params, cfg, [[1, 4]], [NULL_ID], FAST, seed=0)
        ref = reference_sampler(params, cfg, [1, 4], None, FAST, initial_noise(cfg, 0, 0))
        assert np.array_equal(imgs[0], unpatchify(ref, cfg.patch_side))

    def test_r_equals_t_skips_conquer(self, cfg, params):
        sched = Schedule(total_steps=3, divide_steps=3)
        imgs = generate_set(params, cfg, [[1, 4], [2, 5]], [NULL_ID], sched, seed=0)
        indep = divide_phase(params, cfg, [[1, 4], [2, 5]], sched, seed=0)
        for img, lat in zip(imgs, indep):
            assert np.array_equal(img, unpatchify(lat, cfg.patch_side))

    def test_deterministic(self, cfg, params):
        a = generate_set(params, cfg, [[1, 4], [2, 5]], [NULL_ID], FAST, seed=3)
        b = generate_set(params, cfg, [[1, 4], [2, 5]], [NULL_ID], FAST, seed=3)
        for x, y in zip(a, b):
            assert np.array_equal(x, y)

    def test_fp64_path(self, cfg, params):
        imgs = generate_set(params, cfg, [[1, 4]], [NULL_ID], FAST, seed=0,
                            dtype=np.float64)
        assert imgs[0].dtype == np.float64

    def test_sliding_window_set(self, cfg, params):
        prompts = [[1, 4], [2, 5], [3, 6], [1, 5], [2, 6], [3, 4]]
        imgs = generate_set(params, cfg, prompts, [NULL_ID], FAST, seed=2)
        assert len(imgs) == 6
        assert all(img.shape == (16, 16, 3) for img in imgs)

    def test_windowed_conquer_freezes_earlier_images(self, cfg, params):
        prompts = [[1, 4], [2, 5], [3, 6], [1, 5], [2, 6], [3, 4]]
        lat = divide_phase(params, cfg, prompts, FAST, seed=2)
        grid = grid_layout_for(6, cfg.tokens_per_side)
        imgs = conquer_phase(params, cfg, lat, prompts, [NULL_ID], grid, FAST)
        # images 0 and 1 are final after window 1; rerunning only window 1
        # must produce the same first two images
        grid_w1 = GridLayout(2, 2, cfg.tokens_per_side)
        w1 = conquer_phase(params, cfg, lat[:4], prompts[:4], [NULL_ID], grid_w1, FAST)
        assert np.array_equal(imgs[0], w1[0])
        assert np.array_equal(imgs[1], w1[1])
        # image 4 only exists in window 2, so it must differ from a run that
        # conquers 2..5 without frozen context only if context matters; at
        # minimum it is produced and finite
        assert np.all(np.isfinite(imgs[4]))

    def test_windows_reject_mask_override(self, cfg, params):
        prompts = [[1, 4]] * 6
        lat = divide_phase(params, cfg, prompts, FAST, seed=0)
        grid = grid_layout_for(6, cfg.tokens_per_side)
        with pytest.raises(ValueError):
            conquer_phase(params, cfg, lat, prompts, [NULL_ID], grid, FAST,
                          mask_override=np.zeros((1, 1)))


class TestBlockedConquerEquivalence:
    def test_blocked_equals_reference(self, cfg, params):
        sched = Schedule(total_steps=5, divide_steps=2)
        prompts = [[1, 4], [2, 5]]
        lat = divide_phase(params, cfg, prompts, sched, seed=9)
        per = cfg.tokens_per_image
        layout = build_token_layout([2, 2], 1, [per] * 2)
        blocked = np.full((layout.n_visual, layout.width), -np.inf, dtype=np.float32)
        vis_lo = layout.n_prompt + layout.n_global
        for k in range(2):
            p0, p1 = layout.prompt_spans[k]
            blocked[k * per:(k + 1) * per, p0:p1] = 0.0
            blocked[k * per:(k + 1) * per, vis_lo + k * per:vis_lo + (k + 1) * per] = 0.0
        imgs = conquer_phase(
            params, cfg, lat, prompts, [NULL_ID], GridLayout(1, 2, cfg.tokens_per_side),
            sched, mask_override=blocked, positional_mode="local",
        )
        for k in range(2):
            l1 = build_token_layout([2], 1, [per])
            m1 = build_set_mask(l1)
            m1[:, l1.global_span[0]:l1.global_span[1]] = -np.inf
            ref = reference_sampler(params, cfg, prompts[k], None, sched, lat[k],
                                    mask=m1, start_step=sched.divide_steps)
            assert np.abs(imgs[k] - unpatchify(ref, cfg.patch_side)).max() <= 1e-5
