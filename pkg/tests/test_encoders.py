import numpy as np
import pytest

from almeta import autodiff as ad
from almeta import encoders
from almeta.errors import ContractViolation, MissingEmbedding
from almeta.model import ModelConfig, init_params

from conftest import check_grads


def small_cfg(**kw):
    base = dict(
        task="classification", n_classes=3, encoder="mlp", input_dim=5,
        embed_dim=8, hidden_dim=8, match_hidden=8, layer_norm=True,
    )
    base.update(kw)
    return ModelConfig(**base).validate()


class TestContextFree:
    def test_mlp_output_shape(self):
        cfg = small_cfg()
        p = init_params(cfg, np.random.default_rng(0)).tensors()
        feats = [np.ones(5), np.zeros(5), -np.ones(5)]
        out = encoders.encode_context_free(feats, cfg, p)
        assert out.shape == (3, 8)

    def test_mlp_hidden_layers(self):
        cfg = small_cfg(mlp_hidden=(6, 7))
        p = init_params(cfg, np.random.default_rng(1)).tensors()
        out = encoders.encode_context_free([np.ones(5)] * 2, cfg, p)
        assert out.shape == (2, 8)

    def test_lookup_returns_table_rows(self):
        cfg = small_cfg(encoder="lookup", vocab_size=10)
        store = init_params(cfg, np.random.default_rng(2))
        p = store.tensors()
        out = encoders.encode_context_free([3, 0, 3], cfg, p)
        assert np.allclose(out.data[0], store.params["enc.table"][3])
        assert np.allclose(out.data[0], out.data[2])
        assert np.allclose(out.data[1], store.params["enc.table"][0])

    def test_lookup_missing_id_raises(self):
        cfg = small_cfg(encoder="lookup", vocab_size=4)
        p = init_params(cfg, np.random.default_rng(3)).tensors()
        with pytest.raises(MissingEmbedding):
            encoders.encode_context_free([0, 4], cfg, p)
        with pytest.raises(MissingEmbedding):
            encoders.encode_context_free([-1], cfg, p)

    def test_conv_feature_map_is_quarter_resolution(self):
        cfg = small_cfg(encoder="conv", image_size=28)
        p = init_params(cfg, np.random.default_rng(4)).tensors()
        img = np.random.default_rng(5).random((28, 28))
        fmap = encoders.conv_feature_map([img], cfg, p)
        assert fmap.shape == (1, 64, 7, 7)
        out = encoders.encode_context_free([img, img], cfg, p)
        assert out.shape == (2, 8)

    def test_conv_rejects_non_square(self):
        cfg = small_cfg(encoder="conv", image_size=28)
        p = init_params(cfg, np.random.default_rng(6)).tensors()
        with pytest.raises(ContractViolation):
            encoders.encode_context_free([np.zeros((28, 14))], cfg, p)


class TestVisitationOrder:
    def test_is_permutation(self):
        order = encoders.visitation_order(25, 123)
        assert sorted(order) == list(range(25))

    def test_deterministic_in_seed(self):
        assert np.array_equal(encoders.visitation_order(25, 9), encoders.visitation_order(25, 9))
        assert not np.array_equal(encoders.visitation_order(25, 9), encoders.visitation_order(25, 10))


class TestContextSensitive:
    def test_output_shapes(self):
        cfg = small_cfg()
        p = init_params(cfg, np.random.default_rng(7)).tensors()
        xp = encoders.encode_context_free([np.random.default_rng(8).random(5) for _ in range(6)], cfg, p)
        order = encoders.visitation_order(6, 0)
        x_ctx, back = encoders.encode_context_sensitive(xp, cfg, p, order)
        assert x_ctx.shape == (6, 8)
        assert back.shape == (1, 8)

    def test_empty_support_raises(self):
        cfg = small_cfg()
        p = init_params(cfg, np.random.default_rng(9)).tensors()
        with pytest.raises(ContractViolation):
            encoders.encode_context_sensitive(ad.Tensor(np.zeros((0, 8))), cfg, p, np.array([], dtype=int))

    def test_context_depends_on_pool_composition(self):
        # the same item embeds differently when its neighbours change
        cfg = small_cfg()
        p = init_params(cfg, np.random.default_rng(10)).tensors()
        rng = np.random.default_rng(11)
        rows = [rng.random(5) for _ in range(4)]
        xp_a = encoders.encode_context_free(rows, cfg, p)
        xp_b = encoders.encode_context_free([rows[0]] + [rng.random(5) for _ in range(3)], cfg, p)
        order = np.arange(4)
        ctx_a, _ = encoders.encode_context_sensitive(xp_a, cfg, p, order)
        ctx_b, _ = encoders.encode_context_sensitive(xp_b, cfg, p, order)
        assert not np.allclose(ctx_a.data[0], ctx_b.data[0])

    @pytest.mark.usefixtures("f64")
    def test_gradients_flow_through_both_passes(self):
        cfg = small_cfg(embed_dim=4, layer_norm=False)
        store = init_params(cfg, np.random.default_rng(12))
        rng = np.random.default_rng(13)
        arrays = {
            "xp": rng.normal(size=(3, 4)),
            "ctx.fwd.wx": store.params["ctx.fwd.wx"].astype(np.float64),
            "ctx.bwd.wx": store.params["ctx.bwd.wx"].astype(np.float64),
        }
        w = rng.normal(size=(3, 4))
        order = np.array([2, 0, 1])

        def build():
            p = store.tensors()
            for k in ("ctx.fwd.wx", "ctx.bwd.wx"):
                p[k] = ad.Tensor(arrays[k], requires_grad=True)
            xp = ad.Tensor(arrays["xp"], requires_grad=True)
            x_ctx, _ = encoders.encode_context_sensitive(xp, cfg, store_view(p), order)
            tmap = {"xp": xp, "ctx.fwd.wx": p["ctx.fwd.wx"], "ctx.bwd.wx": p["ctx.bwd.wx"]}
            return (x_ctx * w).sum(), tmap

        def store_view(p):
            # float64 copies of the untouched params keep the check exact
            return {
                k: (v if isinstance(v.data, np.ndarray) and v.data.dtype == np.float64 else ad.Tensor(np.asarray(v.data, dtype=np.float64)))
                for k, v in p.items()
            }

        check_grads(build, arrays, rel_tol=1e-4)
