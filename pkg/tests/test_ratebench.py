import json
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from nllvm import ratebench
from nllvm.prior import GPConfig
from nllvm.ratebench import (
    ExperimentReport,
    RateExperimentConfig,
    bootstrap_slopes,
    cell_seeds,
    fit_rate,
    log_slack,
    run_all_checks,
    run_ratebench,
    sample_from_truth,
)
from nllvm.sampler import ChainError, SamplerConfig

TINY_SAMPLER = SamplerConfig(gp=GPConfig(M=16), burn_in=60, keep=30, thin=2, store_etas=False)
TINY = RateExperimentConfig(ns=(60, 240), replicates=3, sampler=TINY_SAMPLER, workers=1,
                            bootstrap=200, draw_hellinger=4)


@pytest.fixture(scope="module")
def tiny_report():
    return run_ratebench(TINY)


class TestSampling:
    def test_uniform_ks(self):
        y = sample_from_truth("uniform", 20_000, 0)
        assert stats.kstest(y, "uniform").statistic < 0.015

    def test_truncnorm_clt(self):
        n = 100_000
        y = sample_from_truth("truncnorm", n, 1)
        sd = stats.truncnorm(-2, 2).std()
        assert abs(y.mean()) <= 3 * sd / np.sqrt(n)

    def test_reproducible(self):
        assert np.array_equal(sample_from_truth("bump", 50, 3), sample_from_truth("bump", 50, 3))

    def test_cell_seeds_distinct(self):
        seeds = {cell_seeds(0, n, r) for n in (250, 500) for r in range(10)}
        assert len(seeds) == 20
        assert cell_seeds(1, 250, 0) != cell_seeds(0, 250, 0)


class TestConfig:
    def test_single_size(self):
        with pytest.raises(ValueError, match="need >= 2 sizes"):
            RateExperimentConfig(ns=(250,))

    def test_unordered(self):
        with pytest.raises(ValueError):
            RateExperimentConfig(ns=(500, 250))

    def test_few_replicates(self):
        with pytest.raises(ValueError):
            RateExperimentConfig(replicates=2)

    def test_unknown_truth(self):
        with pytest.raises(KeyError):
            RateExperimentConfig(truth="nope")

    def test_json_round_trip(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(TINY.to_dict()))
        assert RateExperimentConfig.from_json(p) == TINY


class TestFits:
    def test_exact_power(self):
        ns = [250, 500, 1000, 2000]
        fit = fit_rate(ns, [3.0 * n**-0.4 for n in ns])
        assert fit["plain_slope"] == pytest.approx(-0.4, abs=1e-12)
        assert fit["logcorrected_slope"] == pytest.approx(-0.4, abs=1e-8)
        assert fit["logcorrected_loglog_power"] == pytest.approx(0.0, abs=1e-8)

    def test_log_factor_recovered(self):
        ns = np.array([250, 500, 1000, 2000, 4000])
        med = ns**-0.4 * np.log(ns) ** 0.8
        fit = fit_rate(ns, med)
        assert fit["logcorrected_slope"] == pytest.approx(-0.4, abs=1e-8)
        # the plain slope is flattened by exactly the slack
        assert fit["plain_slope"] == pytest.approx(-0.4 + log_slack(ns, 2.0), abs=1e-10)

    def test_slack_value(self):
        ns = [250, 500, 1000, 2000, 4000]
        x = np.log(ns)
        expect = 0.8 * np.polyfit(x, np.log(x), 1)[0]
        assert log_slack(ns, 2.0, 1.0) == pytest.approx(expect)
        assert log_slack(ns, 2.0, 3.0) == pytest.approx(expect * 1.5)

    def test_bootstrap_sign(self):
        ns = [100, 200, 400]
        rng = np.random.default_rng(0)
        table = {n: n**-0.5 * np.exp(rng.normal(0, 0.05, 10)) for n in ns}
        b = bootstrap_slopes(ns, table, 500, 1)
        assert np.mean(b < 0) == 1.0
        assert np.array_equal(b, bootstrap_slopes(ns, table, 500, 1))


class TestRun:
    def test_structure(self, tiny_report):
        r = tiny_report
        assert isinstance(r, ExperimentReport)
        assert len(r.rows) == 6 and r.failures == 0
        assert set(r.medians) == {60, 240}
        assert r.theoretical == pytest.approx(-0.4)
        assert r.window[0] == pytest.approx(-0.55)
        assert all(0 < row["hellinger"] < np.sqrt(2) for row in r.rows)
        assert r.passed == (r.decreasing and r.bootstrap_negative >= 0.99)

    def test_deterministic(self, tiny_report):
        again = run_ratebench(TINY)
        assert [r["hellinger"] for r in again.rows] == [r["hellinger"] for r in tiny_report.rows]
        assert again.fit == tiny_report.fit

    def test_parallel_matches_serial(self, tiny_report):
        par = run_ratebench(replace(TINY, workers=2))
        assert [r["hellinger"] for r in par.rows] == [r["hellinger"] for r in tiny_report.rows]

    def test_write(self, tiny_report, tmp_path):
        tiny_report.write(tmp_path)
        rep = json.loads((tmp_path / "report.json").read_text())
        assert rep["medians"].keys() == {"60", "240"}
        header = (tmp_path / "per_run.csv").read_text().splitlines()[0]
        assert header == "n,replicate,seed,hellinger,runtime_s"

    def test_failures_abort(self, monkeypatch):
        def broken(*a, **k):
            raise ChainError("boom", None)

        monkeypatch.setattr(ratebench, "run_chain", broken)
        with pytest.raises(RuntimeError, match="replicates failed"):
            run_ratebench(TINY)


@pytest.fixture(scope="module")
def quick():
    return run_all_checks(seed=0, quick=True)


class TestRunAll:
    def test_structure(self, quick, tmp_path):
        suites = quick["suites"]
        assert len(suites) == 8
        assert all(s["status"] in ("pass", "fail", "error") for s in suites.values())
        assert all("runtime_s" in s for s in suites.values())

    def test_deterministic_and_consistent(self, quick):
        from nllvm import checks

        assert checks.approx_order(seed=0, quick=True)["slopes"] == quick["suites"]["approx_order"]["slopes"]
        hb = checks.hellinger_bound(seed=0, quick=True)
        assert hb["max_excess"] == quick["suites"]["hellinger_bound"]["max_excess"]

    def test_errors_are_contained(self, monkeypatch, tmp_path):
        from nllvm import checks

        def bad(seed=0, quick=False):
            raise ZeroDivisionError("x")

        monkeypatch.setattr(checks, "SUITES", {"bad": bad, "support": checks.support})
        out = run_all_checks(tmp_path, quick=True)
        assert out["suites"]["bad"]["status"] == "error"
        assert out["suites"]["support"]["status"] == "pass"
        assert json.loads((tmp_path / "summary.json").read_text())["suites"]["bad"]["status"] == "error"
