import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stdhl.encdec import (
    DEFAULT_LEVELS,
    AttentionFilter,
    ForecastDecoder,
    ForecastQuantiles,
    SpatioTemporalEncoder,
    attention_forward,
    decoder_forward,
    encoder_forward,
    pinball_loss,
    quantile_loss,
)
from stdhl.hypergraph import DynamicHypergraphLayer
from stdhl.model import IdentitySpatial
from stdhl.numerics import Module, Tensor, finite_diff_check, parameters_check


def dyn_factory(n, logit=0.0):
    def build(c, t, rng):
        return DynamicHypergraphLayer(n, c, t, embedding_dim=3, rng=rng, self_loop_logit=logit)

    return build


class TestAttention:
    def test_constant_input_uniform_weights(self):
        f = AttentionFilter(2, np.random.default_rng(0))
        x = np.broadcast_to(np.array([1.5, -0.5])[:, None, None], (2, 3, 5)).copy()
        np.testing.assert_allclose(attention_forward(f, x).data, x / 5, atol=1e-14)

    def test_weights_sum_to_one_over_time(self):
        f = AttentionFilter(3, np.random.default_rng(1))
        x = Tensor(np.random.default_rng(1).normal(size=(2, 3, 4, 6)))
        np.testing.assert_allclose(f.weights(x).data.sum(axis=-1), 1.0, atol=1e-12)

    def test_shape(self):
        f = AttentionFilter(3, np.random.default_rng(2))
        assert attention_forward(f, np.zeros((3, 4, 6))).shape == (3, 4, 6)

    def test_gradients(self):
        rng = np.random.default_rng(3)
        f = AttentionFilter(2, rng)
        f.bias.data[:] = rng.normal(size=2)
        x, w = rng.normal(size=(2, 3, 5)), rng.normal(size=(2, 3, 5))
        assert finite_diff_check(lambda x_: (attention_forward(f, x_) * w).sum(), Tensor(x)) < 1e-4
        assert parameters_check(lambda: (attention_forward(f, x) * w).sum(), f.parameters()) < 1e-4


class _PassThrough(Module):
    def forward(self, x):
        return x

    __call__ = forward


class TestEncoder:
    def test_identity_composition(self):
        e = SpatioTemporalEncoder(3, 2, 5, dyn_factory(3, logit=-60.0), hidden=2, n_blocks=1,
                                  rng=np.random.default_rng(0))
        t = e.temporal[0]
        t.activation = "identity"
        t.kernel.data[:] = 0.0
        t.kernel.data[:, :, :, 0] = np.eye(2)
        x = np.random.default_rng(0).normal(size=(2, 3, 5))
        att = attention_forward(e.attention, x).data
        np.testing.assert_allclose(encoder_forward(e, x).data, 2 * att, atol=1e-12)

    def test_residual_projection_when_widths_differ(self):
        e = SpatioTemporalEncoder(3, 2, 5, dyn_factory(3), hidden=4, n_blocks=2, rng=np.random.default_rng(1))
        assert e.residual[0] is not None and e.residual[1] is None
        assert encoder_forward(e, np.zeros((2, 3, 5))).shape == (4, 3, 5)

    def test_block_stack_is_causal(self):
        # attention and the dynamic incidence see the whole window by design; the
        # convolutional stack under them must not leak the future
        e = SpatioTemporalEncoder(3, 2, 8, lambda c, t, rng: IdentitySpatial(), hidden=3, n_blocks=2,
                                  mode="causal", rng=np.random.default_rng(2))
        e.attention = _PassThrough()
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 3, 8))
        base = encoder_forward(e, x).data
        for t in range(8):
            x2 = x.copy()
            x2[:, :, t] += rng.normal(size=(2, 3))
            np.testing.assert_array_equal(encoder_forward(e, x2).data[:, :, :t], base[:, :, :t])

    def test_gradients_random_three_node(self):
        rng = np.random.default_rng(3)
        e = SpatioTemporalEncoder(3, 2, 4, dyn_factory(3, 0.2), hidden=3, n_blocks=2, rng=rng)
        x, w = rng.normal(size=(2, 3, 4)), rng.normal(size=(3, 3, 4))
        out = encoder_forward(e, x).data
        assert np.all(np.isfinite(out))
        assert finite_diff_check(lambda x_: (encoder_forward(e, x_) * w).sum(), Tensor(x)) < 1e-4
        assert parameters_check(lambda: (encoder_forward(e, x) * w).sum(), e.parameters()) < 1e-4

    def test_shape_mismatch(self):
        e = SpatioTemporalEncoder(3, 2, 4, dyn_factory(3), hidden=3, rng=np.random.default_rng(4))
        with pytest.raises(ValueError):
            encoder_forward(e, np.zeros((2, 3, 5)))


def decoder(seed=0, n=3, width=2, t_m=5, t_n=6, horizon=2, q=3):
    return ForecastDecoder(n, width, t_m, t_n, horizon, q, hidden=4, rng=np.random.default_rng(seed))


LEVELS3 = (0.1, 0.5, 0.9)


class TestDecoder:
    def test_zeroed_parameters_equal_values(self):
        d = decoder()
        for p in d.parameters():
            p.data[...] = 0.0
        d.output_layer.bias.data[:] = 0.4
        q = decoder_forward(d, np.ones((2, 3, 5)), np.ones((2, 3, 6)), LEVELS3)
        np.testing.assert_array_equal(q.values, 0.4)
        assert q.is_monotone()

    def test_rearrangement(self):
        raw = np.array([0.3, 0.1, 0.2]).reshape(3, 1, 1)
        q = ForecastQuantiles.from_raw(raw, LEVELS3)
        np.testing.assert_array_equal(q.values.ravel(), [0.1, 0.2, 0.3])

    def test_default_shape(self):
        d = ForecastDecoder(10, 32, 12, 12, 4, 19, rng=np.random.default_rng(0))
        q = decoder_forward(d, np.zeros((32, 10, 12)), np.zeros((32, 10, 12)))
        assert q.values.shape == (19, 10, 4)

    def test_node_mismatch(self):
        with pytest.raises(ValueError):
            decoder_forward(decoder(), np.zeros((2, 4, 5)), np.zeros((2, 3, 6)), LEVELS3)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_monotone_and_clipped(self, seed):
        rng = np.random.default_rng(seed)
        d = decoder(seed)
        q = decoder_forward(d, rng.normal(scale=3, size=(2, 3, 5)), rng.normal(scale=3, size=(2, 3, 6)), LEVELS3)
        assert q.is_monotone()
        assert q.values.min() >= 0.0 and q.values.max() <= 1.0

    def test_gradients(self):
        rng = np.random.default_rng(5)
        d = decoder(5)
        xm, xn = rng.normal(size=(1, 2, 3, 5)), rng.normal(size=(1, 2, 3, 6))
        w = rng.normal(size=(1, 3, 3, 2))
        assert parameters_check(lambda: (d.forward(Tensor(xm), Tensor(xn)) * w).sum(), d.parameters()) < 1e-4
        assert finite_diff_check(lambda x_: (d.forward(x_, Tensor(xn)) * w).sum(), Tensor(xm)) < 1e-4


class TestQuantiles:
    def test_levels_validated(self):
        with pytest.raises(ValueError):
            ForecastQuantiles((0.5, 0.1), np.zeros((2, 1, 1)))
        with pytest.raises(ValueError):
            ForecastQuantiles((0.0, 0.5), np.zeros((2, 1, 1)))

    def test_default_levels(self):
        assert len(DEFAULT_LEVELS) == 19
        assert DEFAULT_LEVELS[0] == 0.05 and DEFAULT_LEVELS[-1] == 0.95 and 0.5 in DEFAULT_LEVELS


class TestQuantileLoss:
    def test_perfect(self):
        y = np.random.default_rng(0).uniform(size=(2, 3))
        assert quantile_loss(y, ForecastQuantiles.point(y, LEVELS3)) == 0.0

    def test_hand_cases(self):
        assert quantile_loss(np.ones((1, 1)), ForecastQuantiles((0.5,), np.zeros((1, 1, 1)))) == 0.5
        assert quantile_loss(np.zeros((1, 1)), ForecastQuantiles((0.9,), np.ones((1, 1, 1)))) == pytest.approx(0.1)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_non_negative_and_half_mae(self, seed):
        rng = np.random.default_rng(seed)
        y, yh = rng.uniform(size=(3, 4)), rng.uniform(size=(3, 4))
        assert quantile_loss(y, ForecastQuantiles((0.2, 0.7), np.stack([yh, yh + 0.1]))) >= 0
        half = quantile_loss(y, ForecastQuantiles((0.5,), yh[None]))
        assert abs(half - 0.5 * np.mean(np.abs(y - yh))) <= 1e-12

    def test_gradient_away_from_kinks(self):
        rng = np.random.default_rng(1)
        y = rng.uniform(size=(3, 4))
        pred = rng.uniform(size=(3, 3, 4))
        eps = 1e-5
        skip = lambda p: np.abs(y[None] - p) <= 10 * eps  # noqa: E731
        err = finite_diff_check(lambda p: pinball_loss(p, y, LEVELS3), Tensor(pred), eps=eps, skip=skip)
        assert err <= 1e-4
