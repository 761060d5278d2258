"""Metric transcriptions, undefined-item handling, and report serialization."""

import csv
import json

import numpy as np
import pytest

from rirforge.errors import ShapeMismatch, ZeroTargetResidual
from rirforge.metrics import (
    MetricReport,
    MetricSummary,
    edc_mae,
    evaluate_items,
    rer_early,
    rmse_late,
    write_report_csv,
    write_report_json,
)

K80 = 1280


def make_item(seed, k=2048):
    rng = np.random.default_rng(seed)
    decay = np.exp(-np.arange(k) / 300.0)
    x = rng.standard_normal(k) * decay
    x[0] = 1.0
    c = np.zeros(k)
    c[: K80 // 2] = x[: K80 // 2] * 0.8
    x_hat = x + 0.05 * rng.standard_normal(k) * decay
    return x_hat, x, c


class TestRerEarly:
    def test_perfect_prediction_is_zero_db(self):
        x_hat, x, c = make_item(0)
        assert rer_early(x, x, c, K80) == pytest.approx(0.0, abs=1e-12)

    def test_prediction_equal_conditioner_is_neg_inf(self):
        _, x, c = make_item(1)
        assert rer_early(c, x, c, K80) == float("-inf")

    def test_zero_target_residual_raises(self):
        _, x, _ = make_item(2)
        with pytest.raises(ZeroTargetResidual):
            rer_early(x, x, x, K80)  # conditioner == target

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_scalar_loop(self, seed):
        rng = np.random.default_rng(seed + 10)
        x_hat = rng.standard_normal(8)
        x = rng.standard_normal(8)
        c = rng.standard_normal(8)
        num = sum((x_hat[n] - c[n]) ** 2 for n in range(4))
        den = sum((x[n] - c[n]) ** 2 for n in range(4))
        expected = 10 * np.log10(num / den)
        assert rer_early(x_hat, x, c, 4) == pytest.approx(expected, rel=1e-12)

    def test_reciprocal_relation_under_swap(self):
        x_hat, x, c = make_item(3)
        fwd = rer_early(x_hat, x, c, K80)
        rev = rer_early(x, x_hat, c, K80)
        assert 10 ** (fwd / 10) * 10 ** (rev / 10) == pytest.approx(1.0, rel=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            rer_early(np.zeros(4), np.zeros(5), np.zeros(5), 2)


class TestRmseLate:
    def test_constant_offset(self):
        _, x, _ = make_item(4)
        x_hat = x.copy()
        x_hat[K80:] += 0.1
        assert rmse_late(x_hat, x, K80) == pytest.approx(20 * np.log10(0.1), rel=1e-12)

    def test_identical_tails_clamped(self):
        _, x, _ = make_item(5)
        assert rmse_late(x, x.copy(), K80) == -120.0

    @pytest.mark.parametrize("seed", range(4))
    def test_matches_scalar_loop(self, seed):
        rng = np.random.default_rng(seed + 20)
        x_hat = rng.standard_normal(16)
        x = rng.standard_normal(16)
        k80 = 6
        acc = sum((x_hat[n] - x[n]) ** 2 for n in range(k80, 16)) / (16 - k80)
        expected = 20 * np.log10(np.sqrt(acc))
        assert rmse_late(x_hat, x, k80) == pytest.approx(expected, rel=1e-12)

    def test_symmetry(self):
        x_hat, x, _ = make_item(6)
        assert rmse_late(x_hat, x, K80) == rmse_late(x, x_hat, K80)


class TestEdcMae:
    def test_identical_is_zero(self):
        _, x, _ = make_item(7)
        assert edc_mae(x, x.copy()) == 0.0

    def test_mask_boundary(self):
        # weights vanish outside the target mask, so prediction changes in
        # the deep tail cannot move the metric: chop where the prediction's
        # remaining energy (~1e-12 of total) perturbs masked EDC bins by
        # under 1e-5 dB. (Chopping right at the target's -60 dB point is NOT
        # neutral: the backward integral feeds tail energy into the deepest
        # masked bins.)
        rng = np.random.default_rng(8)
        k = 4096
        x = rng.standard_normal(k) * np.exp(-np.arange(k) / 120.0)  # fast decay
        x_hat = x + 0.02 * rng.standard_normal(k) * np.exp(-np.arange(k) / 120.0)
        energy = np.cumsum((x**2)[::-1])[::-1]
        mask = energy / energy[0] >= 1e-6
        cut = int(np.sum(mask))
        assert cut < k // 2  # the target crosses the floor early enough
        chopped = x_hat.copy()
        chopped[2 * cut :] = 1e-300  # nonzero to keep the EDC defined
        assert edc_mae(chopped, x) == pytest.approx(edc_mae(x_hat, x), abs=1e-5)

    def test_hand_pair_matches_loss(self):
        from rirforge.losses import edc_loss

        rng = np.random.default_rng(9)
        x = rng.standard_normal(64) * np.exp(-np.arange(64) / 9)
        x_hat = x + 0.1 * rng.standard_normal(64)
        assert edc_mae(x_hat, x) == pytest.approx(float(edc_loss(x_hat, x)), rel=1e-15)


class TestReport:
    def build(self):
        items = [make_item(s) for s in range(5)]
        preds = [i[0] for i in items]
        targets = [i[1] for i in items]
        conds = [i[2] for i in items]
        # make one item undefined for RER (conditioner == target)
        conds[3] = targets[3].copy()
        ids = [f"item{n}" for n in range(5)]
        return evaluate_items(preds, targets, conds, ids, K80)

    def test_aggregates_recomputable(self):
        report = self.build()
        for summary in (report.rer_early_db, report.rmse_late_db, report.edc_mae_db):
            finite = summary.values[np.isfinite(summary.values)]
            assert summary.mean == pytest.approx(np.mean(finite), rel=1e-12)
            assert summary.std == pytest.approx(np.std(finite, ddof=1), rel=1e-12)

    def test_undefined_items_excluded_and_counted(self):
        report = self.build()
        assert report.rer_early_db.excluded == 1
        assert report.rmse_late_db.excluded == 0
        assert len(report.rer_early_db.finite) == 4

    def test_json_round_trip(self, tmp_path):
        report = self.build()
        path = tmp_path / "report.json"
        write_report_json(report, path)
        loaded = json.loads(path.read_text())
        assert loaded["rer_early_db"]["mean"] == pytest.approx(report.rer_early_db.mean)
        assert loaded["rer_early_db"]["values"][3] is None
        assert loaded["item_ids"] == list(report.item_ids)

    def test_csv_aggregates_match_recomputation(self, tmp_path):
        report = self.build()
        path = tmp_path / "report.csv"
        write_report_csv(report, path)
        with open(path) as fh:
            rows = list(csv.reader(fh))
        header, items, tail = rows[0], rows[1:6], rows[6:]
        assert header == ["item_id", "rer_early_db", "rmse_late_db", "edc_mae_db"]
        # recompute means from the per-item rows and compare with the summary
        rer_vals = [float(r[1]) for r in items if r[1] != ""]
        assert np.mean(rer_vals) == pytest.approx(report.rer_early_db.mean, rel=1e-12)
        mean_row = next(r for r in tail if r[0] == "mean")
        assert float(mean_row[1]) == pytest.approx(report.rer_early_db.mean, rel=1e-12)

    def test_single_item_std_is_zero(self):
        s = MetricSummary(np.array([3.0]))
        assert s.std == 0.0
        assert s.mean == 3.0
