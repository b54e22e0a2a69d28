import numpy as np
import pytest

from imgset.layout import build_set_mask, build_token_layout
from imgset.model import (
    ModelConfig,
    full_corpus,
    init_params,
    load_checkpoint,
    render_shape,
    save_checkpoint,
    train,
)
from imgset.model.data import COLORS, NULL_ID, SHAPES
from imgset.model.net import (
    embed_prompt,
    forward_velocity,
    patchify,
    unpatchify,
    visual_coords,
)
from imgset.model.posenc import rope_cos_sin, text_band_coords
from imgset.model.train import flow_matching_loss, loss_and_grads
from imgset.tensor import Rng, ShapeError


@pytest.fixture(scope="module")
def cfg():
    return ModelConfig()


@pytest.fixture(scope="module")
def params(cfg):
    return init_params(cfg, Rng(0))


class TestConfig:
    def test_defaults(self, cfg):
        assert cfg.d_model == 64
        assert cfg.n_heads == 4
        assert cfg.d_k == 16
        assert cfg.tokens_per_image == 64
        assert cfg.patch_dim == 12
        assert cfg.prompt_vocab_size == 7

    def test_round_trip(self, cfg):
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(d_model=65)
        with pytest.raises(ValueError):
            ModelConfig(image_side=15)


class TestRenderShape:
    def test_square_geometry(self):
        img = render_shape("square", "red").image
        assert img[4, 4, 0] == 1.0 and img[11, 11, 0] == 1.0
        assert img[3, 4, 0] == 0.0 and img[12, 11, 0] == 0.0
        assert img[:, :, 1].sum() == 0 and img[:, :, 2].sum() == 0

    def test_circle_geometry(self):
        img = render_shape("circle", "green").image
        # center pixel inside, far corner outside
        assert img[7, 7, 1] == 1.0
        assert img[0, 0, 1] == 0.0
        # pixel at distance exactly 5 from (7.5, 7.5) does not exist on the
        # integer grid; check a known boundary pair instead
        assert img[3, 6, 1] == 1.0  # dist^2 = 20.25 + 2.25 = 22.5 <= 25
        assert img[2, 5, 1] == 0.0  # dist^2 = 30.25 + 6.25 = 36.5 > 25

    def test_triangle_geometry(self):
        img = render_shape("triangle", "blue").image
        assert img[7, 12, 2] == 1.0  # well inside, near the right edge
        assert img[7, 5, 2] == 1.0  # near the left apex
        assert img[0, 0, 2] == 0.0
        assert img[7, 4, 2] == 0.0  # just left of the apex edge

    def test_pure_color_channels(self):
        for color, ch in [("red", 0), ("green", 1), ("blue", 2)]:
            img = render_shape("square", color).image
            for other in range(3):
                if other != ch:
                    assert img[:, :, other].sum() == 0.0

    def test_unknown_inputs(self):
        with pytest.raises(ValueError):
            render_shape("hexagon", "red")
        with pytest.raises(ValueError):
            render_shape("square", "mauve")

    def test_corpus_has_nine_distinct_samples(self):
        corpus = full_corpus()
        assert len(corpus) == 9
        assert len({(s.shape, s.color) for s in corpus}) == 9


class TestPatchify:
    def test_round_trip(self):
        img = Rng(1).randn(16, 16, 3)
        assert np.array_equal(unpatchify(patchify(img, 2), 2), img)

    def test_token_count_and_dim(self, cfg):
        tokens = patchify(np.zeros((16, 16, 3)), 2)
        assert tokens.shape == (64, 12)

    def test_bad_shapes(self):
        with pytest.raises(ShapeError):
            patchify(np.zeros((15, 15, 3)), 2)
        with pytest.raises(ShapeError):
            unpatchify(np.zeros((63, 12)), 2)


class TestPosenc:
    def test_band_coords(self):
        c = text_band_coords(3, -1)
        assert c.tolist() == [[-1, 0], [-1, 1], [-1, 2]]

    def test_rope_depends_only_on_coordinate(self):
        a = np.array([[3, 5]])
        b = np.array([[7, 7], [3, 5], [0, 0]])
        ca, sa = rope_cos_sin(a, 16, 100.0)
        cb, sb = rope_cos_sin(b, 16, 100.0)
        assert np.array_equal(ca[0], cb[1])
        assert np.array_equal(sa[0], sb[1])

    def test_head_dim_divisibility(self):
        with pytest.raises(ValueError):
            rope_cos_sin(np.zeros((1, 2)), 6, 100.0)


class TestForward:
    def test_output_shape_and_finiteness(self, cfg, params):
        layout = build_token_layout([2], 1, [cfg.tokens_per_image])
        mask = build_set_mask(layout)
        X = Rng(2).randn(cfg.tokens_per_image, cfg.patch_dim)
        P = embed_prompt(params, [1, 4, NULL_ID])
        coords = visual_coords(cfg.tokens_per_side)
        v = forward_velocity(params, X, P, layout, mask, 0.5, coords, cfg)
        assert v.shape == X.shape
        assert np.all(np.isfinite(v))

    def test_shape_validation(self, cfg, params):
        layout = build_token_layout([2], 1, [cfg.tokens_per_image])
        mask = build_set_mask(layout)
        X = Rng(2).randn(10, cfg.patch_dim)  # wrong token count
        P = embed_prompt(params, [1, 4, NULL_ID])
        with pytest.raises(ShapeError):
            forward_velocity(params, X, P, layout, mask, 0.5,
                             visual_coords(cfg.tokens_per_side), cfg)

    def test_prompt_isolation_under_blocked_visual_mask(self, cfg, params):
        # if cross-image visual columns are also masked, another image's
        # prompt cannot reach this image through any number of layers
        params = dict(params)
        params["w_head"] = Rng(8).randn(cfg.d_model, cfg.patch_dim) * 0.02
        layout = build_token_layout([2, 2], 1, [cfg.tokens_per_image] * 2)
        mask = build_set_mask(layout)
        per = cfg.tokens_per_image
        vis_lo = layout.n_prompt + layout.n_global
        mask[:per, vis_lo + per:] = -np.inf
        mask[per:, vis_lo:vis_lo + per] = -np.inf
        X = Rng(3).randn(2 * per, cfg.patch_dim)
        tps = cfg.tokens_per_side
        coords = np.concatenate([visual_coords(tps), visual_coords(tps, (0, tps))])
        va = forward_velocity(params, X, embed_prompt(params, [1, 4, 2, 5, NULL_ID]),
                              layout, mask, 0.4, coords, cfg)
        vb = forward_velocity(params, X, embed_prompt(params, [1, 4, 3, 6, NULL_ID]),
                              layout, mask, 0.4, coords, cfg)
        assert np.array_equal(va[:per], vb[:per])
        assert not np.array_equal(va[per:], vb[per:])

    def test_joint_attention_propagates_across_images(self, cfg, params):
        # with the full set mask, another image's prompt reaches this image
        # through that image's visual tokens (this is the harmonization path)
        params = dict(params)
        params["w_head"] = Rng(8).randn(cfg.d_model, cfg.patch_dim) * 0.02
        layout = build_token_layout([2, 2], 1, [cfg.tokens_per_image] * 2)
        mask = build_set_mask(layout)
        per = cfg.tokens_per_image
        X = Rng(3).randn(2 * per, cfg.patch_dim)
        tps = cfg.tokens_per_side
        coords = np.concatenate([visual_coords(tps), visual_coords(tps, (0, tps))])
        va = forward_velocity(params, X, embed_prompt(params, [1, 4, 2, 5, NULL_ID]),
                              layout, mask, 0.4, coords, cfg)
        vb = forward_velocity(params, X, embed_prompt(params, [1, 4, 3, 6, NULL_ID]),
                              layout, mask, 0.4, coords, cfg)
        assert not np.array_equal(va[:per], vb[:per])
        assert not np.array_equal(va[per:], vb[per:])

    def test_joint_text_queries_variant_runs(self, params):
        cfg = ModelConfig(joint_text_queries=True)
        layout = build_token_layout([2], 1, [cfg.tokens_per_image])
        mask = build_set_mask(layout)
        X = Rng(4).randn(cfg.tokens_per_image, cfg.patch_dim)
        P = embed_prompt(params, [1, 4, NULL_ID])
        v = forward_velocity(params, X, P, layout, mask, 0.5,
                             visual_coords(cfg.tokens_per_side), cfg)
        assert v.shape == X.shape and np.all(np.isfinite(v))


class TestCheckpoint:
    def test_round_trip_bit_exact(self, cfg, params, tmp_path):
        path = tmp_path / "model.npz"
        save_checkpoint(path, cfg, params)
        cfg2, params2 = load_checkpoint(path)
        assert cfg2 == cfg
        assert set(params2) == set(params)
        for k in params:
            assert np.array_equal(params[k], params2[k])
            assert params[k].dtype == params2[k].dtype

    def test_version_rejection(self, cfg, params, tmp_path):
        import json

        path = tmp_path / "model.npz"
        meta = json.dumps({"version": 99, "config": cfg.to_dict()})
        np.savez(path, __meta__=np.frombuffer(meta.encode(), dtype=np.uint8), **params)
        with pytest.raises(ValueError):
            load_checkpoint(path)


class TestTraining:
    def test_loss_decreases(self, cfg):
        corpus = full_corpus()
        rng = Rng(0)
        p10 = train(cfg, corpus, steps=10, rng=Rng(0), log_every=0)
        p200 = train(cfg, corpus, steps=200, rng=Rng(0), log_every=0)
        eval_rng = Rng(77)
        l10 = np.mean([flow_matching_loss(p10, s, eval_rng, cfg) for s in corpus])
        eval_rng = Rng(77)
        l200 = np.mean([flow_matching_loss(p200, s, eval_rng, cfg) for s in corpus])
        assert l200 < l10

    def test_empty_corpus_rejected(self, cfg):
        with pytest.raises(ValueError):
            train(cfg, [], steps=1)

    def test_grads_cover_all_parameters(self, cfg, params):
        corpus = full_corpus()
        eps = Rng(5).randn(16, 16, 3)
        # zero head blocks all upstream gradient; probe with a nonzero head
        params = dict(params)
        params["w_head"] = Rng(6).randn(cfg.d_model, cfg.patch_dim).astype(
            params["w_head"].dtype) * 0.02
        _, grads = loss_and_grads(params, corpus[0], 0.5, eps, corpus[0].prompt, cfg)
        assert set(grads) == set(params)
        nonzero = [k for k, g in grads.items() if np.any(g != 0)]
        # everything except unused embedding rows should receive gradient
        assert "w_head" in nonzero and "l0_wq" in nonzero and "embed" in nonzero
