from types import SimpleNamespace

import numpy as np
import pytest

from covrankpy import rank_test
from covrankpy.bootstrap import BootstrapConfig
from covrankpy.fit import FitOptions
from covrankpy.rank_test import RankReport, choose_d, sequential_rank_test
from covrankpy.simmodels import generate_model
from covrankpy.utils import DataError

FAST = BootstrapConfig(B=19, fit=FitOptions(restarts=0, max_iters=500), threads=1)


def _fake_pvalues(monkeypatch, p_values):
    calls = []

    def fake(W, q, cfg, fits=None):
        calls.append(q)
        return SimpleNamespace(statistic=fits[q - 1].statistic, p_value=p_values[q - 1], M_used=cfg.d)

    monkeypatch.setattr(rank_test, "bootstrap_pvalue", fake)

    return calls


def _sample():
    rng = np.random.default_rng(40)
    return rng.standard_normal((30, 7)) + rng.standard_normal((30, 2)) @ rng.standard_normal((2, 7))


def test_choose_d():
    assert choose_d(25) == 12
    assert choose_d(50) == 24
    assert choose_d(25, override=5) == 5

    with pytest.warns(UserWarning, match="exceeds"):
        assert choose_d(25, override=20) == 12

    with pytest.raises(DataError):
        choose_d(2)


def test_stops_at_first_large_pvalue(monkeypatch):
    calls  = _fake_pvalues(monkeypatch, [0.001, 0.001, 0.20])
    report = sequential_rank_test(_sample(), 0.05, FAST)

    assert report.d == 3
    assert report.r_hat == 3
    assert not report.global_null_rejected
    assert calls == [1, 2, 3]


def test_no_test_beyond_estimate(monkeypatch):
    calls  = _fake_pvalues(monkeypatch, [0.5, 0.001, 0.001])
    report = sequential_rank_test(_sample(), 0.05, FAST)

    assert report.r_hat == 1
    assert calls == [1]
    assert [s.tested for s in report.per_q] == [True, False, False]
    assert report.per_q[1].p_value is None


def test_global_null_rejected(monkeypatch):
    _fake_pvalues(monkeypatch, [0.01, 0.01, 0.01])
    report = sequential_rank_test(_sample(), 0.05, FAST)

    assert report.r_hat is None
    assert report.global_null_rejected
    assert all(s.tested for s in report.per_q)


def test_clamped_d_is_reported(monkeypatch):
    _fake_pvalues(monkeypatch, [0.5, 0.5, 0.5])

    with pytest.warns(UserWarning):
        report = sequential_rank_test(_sample(), 0.05, BootstrapConfig(B=5, d=6, threads=1))

    assert report.d == 3
    assert report.config.d == 3
    assert any("exceeds" in w for w in report.warnings)


def test_scree_is_shared_with_report(monkeypatch):
    _fake_pvalues(monkeypatch, [0.5, 0.5, 0.5])
    report = sequential_rank_test(_sample(), 0.05, FAST)

    assert list(report.scree["q"]) == [1, 2, 3]
    np.testing.assert_allclose(report.scree["statistic"], [s.statistic for s in report.per_q])


def test_rank_one_noiseless():
    rng = np.random.default_rng(41)
    W   = rng.standard_normal((50, 1)) @ np.linspace(1.0, 3.0, 9)[None, :]

    report = sequential_rank_test(W, 0.05, FAST)

    assert report.r_hat == 1
    assert report.per_q[0].tested and not report.per_q[1].tested


def test_report_round_trip():
    sim    = generate_model("A1", 40, 9, seed=1)
    report = sequential_rank_test(sim.sample, 0.05, BootstrapConfig(B=9, fit=FitOptions(restarts=0), threads=1))

    again = RankReport.from_dict(report.to_dict())

    assert again.to_dict() == report.to_dict()
    assert again.config == report.config


def test_rejects_two_point_grid():
    W = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 7.0]])

    with pytest.raises(DataError, match="L >= 3"):
        sequential_rank_test(W, 0.05, FAST)


def test_validates_alpha():
    with pytest.raises(DataError):
        sequential_rank_test(_sample(), 1.5, FAST)


@pytest.mark.slow
def test_model_A1_majority_rank_three():
    hits = 0
    for seed in range(50):
        sim    = generate_model("A1", 150, 25, seed=seed)
        report = sequential_rank_test(sim.sample, 0.05, BootstrapConfig(B=200, seed=seed))
        hits  += report.r_hat == 3

    assert hits >= 0.85 * 50
