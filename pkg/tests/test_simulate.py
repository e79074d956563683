import json

import numpy as np
import pytest

from fsym.datasets import data_path
from fsym.divergences import kl
from fsym.fitting import ModelSpec
from fsym.simulate import (
    SimConfig,
    default_cutpoints,
    discretize,
    mvn_sample,
    power_study,
)
from fsym.tables import TableShape


def tiny_config(**overrides) -> SimConfig:
    base = dict(
        means=(0.0, 0.0, 0.0),
        variances=(1.0, 1.0, 1.0),
        correlations=((1.0, 0.2, 0.2), (0.2, 1.0, 0.2), (0.2, 0.2, 1.0)),
        n_obs=2000,
        n_reps=8,
        seed=99,
        models=(ModelSpec("s"), ModelSpec("ls", kl())),
    )
    base.update(overrides)
    return SimConfig(**base)


class TestConfig:
    def test_from_dict_with_correlation_vector(self):
        with data_path("table2_row3.json").open() as fh:
            config = SimConfig.from_dict(json.load(fh))
        assert config.correlations[0][1] == 0.2
        assert config.correlations[0][2] == 0.3
        assert config.correlations[1][2] == 0.4
        assert config.models[0].label == "gs[kl]"

    def test_non_positive_definite_rejected(self):
        with pytest.raises(ValueError):
            tiny_config(
                correlations=((1.0, 0.99, -0.99), (0.99, 1.0, 0.99), (-0.99, 0.99, 1.0))
            )

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            tiny_config(variances=(1.0, 0.0, 1.0))

    def test_bad_cutpoints_rejected(self):
        with pytest.raises(ValueError):
            tiny_config(cutpoints=(0.5, 0.5, 1.0))


class TestSampling:
    def test_deterministic_replay(self):
        config = tiny_config()
        a = mvn_sample(config, 3)
        b = mvn_sample(config, 3)
        assert np.array_equal(a, b)
        c = mvn_sample(config, 4)
        assert not np.array_equal(a, c)

    def test_moments_large_sample(self):
        config = tiny_config(
            n_obs=1_000_000,
            variances=(1.0, 1.5, 2.0),
            correlations=((1.0, 0.3, 0.1), (0.3, 1.0, 0.5), (0.1, 0.5, 1.0)),
            means=(0.0, 1.0, -1.0),
        )
        x = mvn_sample(config, 0)
        # 4 sigma / sqrt(n) band per coordinate
        for k in range(3):
            sd = np.sqrt(config.variances[k])
            assert abs(x[:, k].mean() - config.means[k]) < 4 * sd / 1000
        got = np.corrcoef(x.T)
        assert np.max(np.abs(got - np.asarray(config.correlations))) < 0.005


class TestDiscretize:
    def test_default_cutpoints(self):
        assert default_cutpoints(0.0, 1.0) == (-0.6, 0.0, 0.6)
        assert default_cutpoints(2.0, 0.5) == (1.7, 2.0, 2.3)

    def test_binning_example(self):
        table = discretize(np.array([[-1.0, 0.1, 0.7]]), (-0.6, 0.0, 0.6))
        assert table.shape == TableShape(4, 3)
        from fsym.tables import cell_index

        assert table.counts[cell_index(table.shape, (1, 3, 4))] == 1
        assert table.n == 1

    def test_count_conservation(self, rng):
        x = rng.normal(size=(5000, 3))
        table = discretize(x, (-0.6, 0.0, 0.6))
        assert table.n == 5000


class TestPowerStudy:
    def test_deterministic_and_order_independent(self):
        config = tiny_config()
        first = power_study(config, workers=1)
        second = power_study(config, workers=1)
        assert [r.rate for r in first.rows] == [r.rate for r in second.rows]
        assert [r.rejections for r in first.rows] == [r.rejections for r in second.rows]

    def test_parallel_matches_serial(self):
        config = tiny_config()
        serial = power_study(config, workers=1)
        parallel = power_study(config, workers=2)
        assert [r.rejections for r in serial.rows] == [r.rejections for r in parallel.rows]

    def test_symmetric_scenario_rarely_rejects(self):
        # a smoke-scale calibration check; the full-scale band lives in the
        # acceptance suite
        config = tiny_config(n_reps=25, n_obs=5000, models=(ModelSpec("s"),))
        result = power_study(config)
        assert result.rows[0].rate <= 0.2

    def test_report_fields(self):
        config = tiny_config()
        result = power_study(config)
        doc = result.to_dict()
        assert doc["n_reps"] == config.n_reps
        assert {row["model"] for row in doc["rows"]} == {"s", "ls[kl]"}
        for row in doc["rows"]:
            assert 0.0 <= row["rate"] <= 1.0
            assert row["failures"] == 0
