import csv
import io
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lingagg.lfa import split_indices
from lingagg.mi import (
    CSV_COLUMNS,
    MIEstimate,
    TrainConfig,
    TrainingDivergedError,
    empirical_entropy,
    layerwise_analysis,
    mi_bound,
    snr_analysis,
    train_probe,
    write_estimates_csv,
)
from lingagg.synth import SynthSpec, generate

QUICK = TrainConfig(seed=0, eval_fraction=0.25, hidden=(32, 32), epochs=8)


class TestTrainConfig:
    def test_defaults_match_contract(self):
        cfg = TrainConfig()
        assert cfg.epochs == 15
        assert cfg.lr == 0.001
        assert cfg.batch_size == 256
        assert cfg.hidden == (256, 256)

    @pytest.mark.parametrize("kw", [
        {"epochs": 0}, {"lr": 0.0}, {"lr": -1}, {"batch_size": 0},
        {"eval_fraction": 0.0}, {"eval_fraction": 1.0}, {"precision": "f16"},
    ])
    def test_invalid_fields_rejected(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


class TestEmpiricalEntropy:
    def test_two_balanced_classes(self):
        assert_allclose(empirical_entropy(np.array([0, 0, 1, 1])), math.log(2), rtol=1e-12)

    def test_single_class(self):
        assert empirical_entropy(np.zeros(10, dtype=np.int64)) == 0.0

    def test_uniform_ten_classes(self):
        labels = np.repeat(np.arange(10), 100)
        assert_allclose(empirical_entropy(labels), math.log(10), rtol=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            empirical_entropy(np.array([], dtype=np.int64))


class TestMIEstimate:
    def test_bound_is_entropy_minus_ce(self):
        est = MIEstimate(h_y=1.0, ce=0.3, bound=0.7, n_eval=10)
        assert est.bound <= est.h_y
        assert_allclose(est.bits, 0.7 / math.log(2))

    def test_negative_ce_rejected(self):
        with pytest.raises(ValueError):
            MIEstimate(h_y=1.0, ce=-0.1, bound=1.1, n_eval=10)

    def test_inconsistent_bound_rejected(self):
        with pytest.raises(ValueError):
            MIEstimate(h_y=1.0, ce=0.3, bound=0.5, n_eval=10)


class TestTrainProbe:
    def test_separable_data_reaches_low_ce(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 2, 2000)
        x = np.zeros((2000, 4), dtype=np.float32)
        x[:, 0] = 4.0 * y - 2.0
        x[:, 1:] = rng.standard_normal((2000, 3)) * 0.1
        cfg = TrainConfig(seed=1, hidden=(32,), epochs=15, batch_size=64, dropout=0.0)
        probe, history = train_probe(x, y, cfg)
        assert history[-1] < 0.05

    def test_deterministic_history(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((500, 6)).astype(np.float32)
        y = rng.integers(0, 3, 500)
        _, h1 = train_probe(x, y, QUICK)
        _, h2 = train_probe(x, y, QUICK)
        assert h1 == h2

    def test_deterministic_parameters_bitwise(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((300, 5)).astype(np.float32)
        y = rng.integers(0, 2, 300)
        p1, _ = train_probe(x, y, QUICK)
        p2, _ = train_probe(x, y, QUICK)
        for a, b in zip(p1.weights + p1.biases, p2.weights + p2.biases):
            assert np.array_equal(a, b)

    def test_single_class_rejected(self):
        x = np.random.default_rng(0).standard_normal((50, 3)).astype(np.float32)
        with pytest.raises(ValueError, match="single class"):
            train_probe(x, np.zeros(50, dtype=np.int64), QUICK)

    @pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
    @pytest.mark.filterwarnings("ignore:invalid value:RuntimeWarning")
    def test_divergence_reports_epoch(self):
        # an absurd learning rate blows the parameters up to overflow
        rng = np.random.default_rng(0)
        x = rng.standard_normal((128, 4)).astype(np.float32)
        y = rng.integers(0, 2, 128)
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train_probe(x, y, TrainConfig(seed=0, hidden=(8,), epochs=3, lr=1e30))


class TestMIBound:
    def test_deterministic_labels_saturate_to_entropy(self):
        ds = generate(SynthSpec(family="deterministic", n=3000, l=1, d=10, k=4, seed=0))
        cfg = TrainConfig(seed=0, eval_fraction=0.25, hidden=(64, 64), epochs=15, batch_size=128)
        tr, ev = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
        x = ds.features[:, 0, :]
        probe, _ = train_probe(x[tr], ds.labels[tr], cfg, n_classes=4)
        est = mi_bound(probe, x[ev], ds.labels[ev])
        assert est.h_y - est.bound < 0.05  # CE near zero
        assert est.bound <= est.h_y

    def test_independent_features_near_zero(self):
        ds = generate(SynthSpec(family="independent", n=12_000, l=1, d=8, k=4, seed=3))
        cfg = TrainConfig(seed=3, eval_fraction=0.5, hidden=(32, 32), epochs=10)
        tr, ev = split_indices(ds.n_frames, cfg.eval_fraction, cfg.seed)
        x = ds.features[:, 0, :]
        probe, _ = train_probe(x[tr], ds.labels[tr], cfg, n_classes=4)
        est = mi_bound(probe, x[ev], ds.labels[ev])
        assert -0.05 <= est.bound <= 0.05

    def test_shape_and_empty_errors(self):
        probe, _ = train_probe(
            np.random.default_rng(0).standard_normal((64, 3)).astype(np.float32),
            (np.arange(64) % 2).astype(np.int64), QUICK)
        with pytest.raises(ValueError, match="input dim"):
            mi_bound(probe, np.zeros((4, 5), dtype=np.float32), np.zeros(4, dtype=np.int64))
        with pytest.raises(ValueError, match="empty"):
            mi_bound(probe, np.zeros((0, 3), dtype=np.float32), np.zeros(0, dtype=np.int64))

    def test_same_split_tag_rejected(self):
        x = np.random.default_rng(0).standard_normal((64, 3)).astype(np.float32)
        y = (np.arange(64) % 2).astype(np.int64)
        probe, _ = train_probe(x, y, QUICK, split_tag="s:train")
        with pytest.raises(ValueError, match="training split"):
            mi_bound(probe, x, y, split_tag="s:train")


class TestLayerwiseAnalysis:
    def test_planted_layer_wins(self):
        ds = generate(SynthSpec(family="deterministic", n=4000, l=3, d=12, k=5,
                                informative=(2,), seed=1))
        report = layerwise_analysis(ds, TrainConfig(seed=1, eval_fraction=0.25, hidden=(32, 32), epochs=8))
        bounds = [e.bound for e in report.estimates]
        assert len(bounds) == 3
        assert int(np.argmax(bounds)) == 2
        assert report.estimates[2].layer == 2

    def test_single_layer_equals_direct_bound(self):
        ds = generate(SynthSpec(family="deterministic", n=2000, l=1, d=10, k=3, seed=2))
        cfg = TrainConfig(seed=2, eval_fraction=0.25, hidden=(32, 32), epochs=8)
        report = layerwise_analysis(ds, cfg)
        assert len(report.estimates) == 1

        layer_cfg = cfg.with_seed(cfg.seed ^ 0)
        tr, ev = split_indices(ds.n_frames, cfg.eval_fraction, layer_cfg.seed)
        x = ds.features[:, 0, :]
        probe, _ = train_probe(x[tr], ds.labels[tr], layer_cfg, n_classes=3)
        direct = mi_bound(probe, x[ev], ds.labels[ev])
        assert report.estimates[0].bound == pytest.approx(direct.bound, abs=1e-12)

    def test_threaded_matches_sequential(self):
        ds = generate(SynthSpec(family="deterministic", n=1500, l=3, d=10, k=3,
                                informative=(0,), seed=4))
        cfg = TrainConfig(seed=4, eval_fraction=0.25, hidden=(16,), epochs=4)
        seq = layerwise_analysis(ds, cfg, threads=1)
        par = layerwise_analysis(ds, cfg, threads=3)
        assert [e.bound for e in seq.estimates] == [e.bound for e in par.estimates]


class TestSnrAnalysis:
    EDGES = (-10.0, 0.0, 10.0)

    def _dataset(self, schedule, n=3000, seed=5):
        return generate(SynthSpec(family="noisy_snr", n=n, l=2, d=12, k=4,
                                  informative=(1,), snr_schedule=schedule, seed=seed))

    def test_matrix_shape_and_ordering(self):
        ds = self._dataset(self.EDGES)
        report = snr_analysis(ds, self.EDGES, TrainConfig(seed=5, eval_fraction=0.3, hidden=(32, 32), epochs=8))
        m = report.matrix()
        assert m.shape == (2, 3)
        assert not np.isnan(m).any()
        assert report.bin_labels == ["-10", "0", "10"]
        assert len(report.estimates) == 6

    def test_single_snr_matches_layerwise(self):
        ds = self._dataset((5.0,), n=2000)
        cfg = TrainConfig(seed=5, eval_fraction=0.3, hidden=(32, 32), epochs=6)
        grouped = snr_analysis(ds, (5.0,), cfg)
        flat = layerwise_analysis(ds, cfg)
        assert grouped.matrix().shape == (2, 1)
        for a, b in zip(grouped.estimates, flat.estimates):
            assert a.bound == pytest.approx(b.bound, abs=1e-12)

    def test_empty_bin_flagged_absent(self):
        ds = self._dataset((0.0, 10.0), n=1500)
        report = snr_analysis(ds, (-20.0, 0.0, 10.0), TrainConfig(seed=5, eval_fraction=0.3, hidden=(16,), epochs=4))
        assert all(bin_label == "-20" for _, bin_label in report.absent)
        assert len(report.absent) == 2  # one per layer
        assert np.isnan(report.matrix()[:, 0]).all()
        means = report.layer_means()
        assert np.isfinite(means).all()

    def test_requires_snr(self):
        ds = generate(SynthSpec(family="deterministic", n=100, l=2, d=8, k=2, seed=0))
        with pytest.raises(ValueError, match="snr"):
            snr_analysis(ds, self.EDGES, QUICK)


class TestReportCsv:
    def test_columns_and_rows(self):
        ests = [
            MIEstimate(h_y=1.0, ce=0.25, bound=0.75, n_eval=100, context="layer", layer=0, snr_bin="0"),
            MIEstimate(h_y=1.0, ce=0.5, bound=0.5, n_eval=50, context="layer", layer=1),
        ]
        buf = io.StringIO()
        write_estimates_csv(buf, ests)
        rows = list(csv.reader(io.StringIO(buf.getvalue())))
        assert rows[0] == list(CSV_COLUMNS)
        assert len(rows) == 3
        assert rows[1][2] == "0" and rows[2][2] == "all"
        assert float(rows[1][5]) == pytest.approx(0.75)
        assert float(rows[1][6]) == pytest.approx(0.75 / math.log(2))
