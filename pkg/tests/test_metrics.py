import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stdhl.encdec import ForecastQuantiles
from stdhl.metrics import (
    TABLE_COLUMNS,
    accuracy_rate,
    crps,
    evaluation_report,
    mae,
    pass_rate,
    pinball,
    relative_improvement,
    rmse,
)

DENSE = tuple(np.round(np.arange(1, 100) / 100, 2))


class TestDeterministic:
    def test_perfect(self):
        y = np.random.default_rng(0).uniform(size=(3, 4))
        assert mae(y, y) == 0.0 and rmse(y, y) == 0.0

    def test_hand_case(self):
        assert mae([1.0, 0.0], [0.0, 0.0]) == 0.5
        assert rmse([1.0, 0.0], [0.0, 0.0]) == pytest.approx(np.sqrt(0.5))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mae(np.zeros(3), np.zeros(4))

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10_000))
    def test_mae_le_rmse(self, seed):
        rng = np.random.default_rng(seed)
        y, yh = rng.uniform(size=20), rng.uniform(size=20)
        assert mae(y, yh) <= rmse(y, yh) + 1e-15

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000))
    def test_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        y, yh = rng.uniform(size=30), rng.uniform(size=30)
        p = rng.permutation(30)
        assert mae(y[p], yh[p]) == pytest.approx(mae(y, yh), abs=1e-15)
        assert rmse(y[p], yh[p]) == pytest.approx(rmse(y, yh), abs=1e-15)
        assert pass_rate(y[p], yh[p]) == pass_rate(y, yh)


class TestGridCode:
    def test_ar_perfect(self):
        assert accuracy_rate(np.ones(4), np.ones(4)) == 100.0

    @pytest.mark.parametrize("r,expected", [(0.13, 87.0), (0.1043, 89.57)])
    def test_ar_from_rmse(self, r, expected):
        # a constant error of r gives RMSE exactly r
        assert accuracy_rate(np.zeros(5), np.full(5, r)) == pytest.approx(expected, abs=1e-9)

    def test_pp_cases(self):
        assert pass_rate(np.zeros(3), np.zeros(3)) == 100.0
        assert pass_rate(np.zeros(2), np.array([0.1, 0.3])) == 50.0
        assert pass_rate(np.zeros(1), np.array([0.25])) == 0.0

    def test_relative_improvement(self):
        assert relative_improvement(0.0886, 0.0984) == pytest.approx(9.96, abs=5e-3)


class TestPinball:
    def test_perfect(self):
        y = np.random.default_rng(0).uniform(size=(2, 3))
        assert pinball(y, ForecastQuantiles.point(y, (0.2, 0.8))) == 0.0

    def test_median_is_half_mae(self):
        rng = np.random.default_rng(1)
        y, yh = rng.uniform(size=(4, 5)), rng.uniform(size=(4, 5))
        assert abs(pinball(y, ForecastQuantiles((0.5,), yh[None])) - mae(y, yh) / 2) <= 1e-12

    def test_hand_case(self):
        assert pinball(np.zeros((1, 1)), ForecastQuantiles((0.9,), np.ones((1, 1, 1)))) == pytest.approx(0.1)


class TestCrps:
    def test_point_on_truth(self):
        y = np.random.default_rng(0).uniform(size=(3, 4))
        assert crps(y, ForecastQuantiles.point(y)) == pytest.approx(0.0, abs=1e-15)

    def test_point_mass_is_absolute_error(self):
        y = np.full((2, 3), 0.2)
        assert abs(crps(y, ForecastQuantiles.point(np.full((2, 3), 0.7))) - 0.5) <= 3 / np.sqrt(100)

    def test_non_monotone_rejected(self):
        with pytest.raises(ValueError):
            crps(np.zeros((1, 1)), ForecastQuantiles((0.1, 0.9), np.array([0.5, 0.2]).reshape(2, 1, 1)))

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            crps(np.zeros((1, 1)), ForecastQuantiles.point(np.zeros((1, 1))), n_samples=1)

    def test_seeded(self):
        rng = np.random.default_rng(2)
        q = ForecastQuantiles.from_raw(rng.uniform(size=(19, 3, 4)), np.arange(1, 20) / 20)
        y = rng.uniform(size=(3, 4))
        assert crps(y, q, seed=5) == crps(y, q, seed=5)

    def test_energy_form_against_brute_force(self):
        # independent O(M^2) evaluation of the pair term on one coordinate
        rng = np.random.default_rng(3)
        levels = np.arange(1, 20) / 20
        q = ForecastQuantiles.from_raw(rng.uniform(size=(19, 1, 1)), levels)
        y = np.array([[0.4]])
        u = np.random.default_rng(0).uniform(size=50)
        s = np.interp(u, levels, q.values[:, 0, 0])
        pairs = np.abs(s[:, None] - s[None]).sum() / (50 * 49)
        expected = np.abs(s - 0.4).mean() - 0.5 * pairs
        assert crps(y, q, n_samples=50, seed=0) == pytest.approx(expected, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_twice_dense_pinball(self, seed):
        rng = np.random.default_rng(seed)
        mu, sigma = rng.uniform(0.3, 0.7, size=(3, 4)), rng.uniform(0.05, 0.15, size=(3, 4))
        from scipy.stats import norm

        values = norm.ppf(np.array(DENSE)[:, None, None], mu, sigma)
        q = ForecastQuantiles(DENSE, values)
        y = rng.uniform(0.2, 0.8, size=(3, 4))
        c = crps(y, q, n_samples=4000, seed=seed)
        assert c == pytest.approx(2 * pinball(y, q), rel=0.10)


class TestReport:
    def test_oracle_report(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(size=(5, 3, 4))
        r = evaluation_report(y, ForecastQuantiles.point(y))
        assert (r.mae, r.ar_percent, r.pp_percent) == (0.0, 100.0, 100.0)
        assert r.horizon_mae == [0.0] * 4

    def test_invariants_and_columns(self, tmp_path):
        rng = np.random.default_rng(1)
        y = rng.uniform(size=(6, 3, 4))
        q = ForecastQuantiles.from_raw(rng.uniform(size=(6, 19, 3, 4)), np.arange(1, 20) / 20)
        r = evaluation_report(y, q)
        assert r.mae <= r.rmse
        assert 0 <= r.pp_percent <= 100
        assert r.ar_percent == pytest.approx((1 - rmse(y[..., 3], q.median()[..., 3])) * 100)
        assert tuple(r.table_row()) == TABLE_COLUMNS == ("MAE", "RMSE", "AR", "PP", "CRPS", "PS")
        r.to_csv(tmp_path / "r.csv", "m")
        header = (tmp_path / "r.csv").read_text().splitlines()[0]
        assert header == "Model,MAE,RMSE,AR,PP,CRPS,PS"
        doc = json.loads(r.to_json(tmp_path / "r.json"))
        assert list(doc)[:6] == list(TABLE_COLUMNS)

    def test_point_report_skips_probabilistic(self):
        y = np.zeros((2, 3, 4))
        r = evaluation_report(y, ForecastQuantiles.point(y + 0.1), probabilistic=False)
        assert r.crps is None and r.pinball is None
