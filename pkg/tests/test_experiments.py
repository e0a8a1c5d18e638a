import locale
import statistics

import pytest

from emlsr_isac import cli
from emlsr_isac.config import ConfigError, NetworkConfig, TimingConfig, dumps_config
from emlsr_isac.experiments import (HEADER, ResultRow, SweepSpec, compare_schemes,
                                    decreasing_trend, execute, format_csv, load_sweep, parse_csv,
                                    run_jobs, run_sweep, scheme_checks)

TINY = TimingConfig(n_windows=1)


def spec(**kw):
    return SweepSpec(timing=TINY, **kw)


class TestSweep:
    def test_single_point(self, tmp_path):
        out = tmp_path / "r.csv"
        rows = run_sweep(spec(seeds=1), out=out)
        data, summary = parse_csv(out.read_text())
        assert len(rows) == len(data) == 1 and len(summary) == 1

    def test_product_count(self):
        rows = execute(spec(alpha=(0.01, 0.1, 0.5, 0.9), k=(4, 12), seeds=20), workers=1)
        assert len(rows) == 160
        assert len({(r.alpha, r.k, r.seed) for r in rows}) == 160

    def test_rerun_is_byte_identical(self, tmp_path):
        s = spec(alpha=(0.1, 0.5), mode=("non-cooperative", "cooperative"), seeds=3)
        run_sweep(s, out=tmp_path / "a.csv", workers=1)
        run_sweep(s, out=tmp_path / "b.csv", workers=1)
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    def test_parallel_matches_serial(self):
        s = spec(alpha=(0.1, 0.5), seeds=2)
        jobs = [(p, seed) for p in s.points() for seed in s.seed_list()]
        assert run_jobs(s.base, s.timing, jobs, workers=2) == \
            run_jobs(s.base, s.timing, jobs, workers=1)

    def test_header_and_ordering(self, tmp_path):
        out = tmp_path / "r.csv"
        run_sweep(spec(alpha=(0.9, 0.1), seeds=2), out=out)
        lines = out.read_text().splitlines()
        assert lines[0] == ",".join(HEADER)
        assert [ln.split(",")[0] for ln in lines[1:3]] == ["0.1", "0.1"]

    def test_summary_recomputable(self, tmp_path):
        out = tmp_path / "r.csv"
        run_sweep(spec(alpha=(0.1, 0.5), seeds=4), out=out)
        data, summary = parse_csv(out.read_text())
        for rec in summary:
            rows = [r for r in data if repr(r.alpha) == rec["alpha"]]
            for metric in ("mse_mean", "throughput", "jain"):
                xs = [getattr(r, metric) for r in rows]
                assert float(rec[f"{metric}_mean"]) == pytest.approx(statistics.fmean(xs),
                                                                     rel=1e-12)
                assert float(rec[f"{metric}_std"]) == pytest.approx(statistics.pstdev(xs),
                                                                    rel=1e-12, abs=1e-300)

    def test_locale_independent(self, tmp_path):
        try:
            locale.setlocale(locale.LC_NUMERIC, "de_DE.UTF-8")
        except locale.Error:
            pass
        try:
            text = format_csv(execute(spec(seeds=1)))
        finally:
            locale.setlocale(locale.LC_NUMERIC, "C")
        row = text.splitlines()[1].split(",")
        assert len(row) == len(HEADER)
        float(row[6]), float(row[7])

    def test_empty_axis_rejected(self):
        with pytest.raises(ConfigError):
            SweepSpec(alpha=())

    def test_zero_seeds_rejected(self):
        with pytest.raises(ConfigError):
            SweepSpec(seeds=0)

    def test_invalid_point_rejected(self):
        with pytest.raises(ConfigError):
            spec(k=(2,)).validate()

    def test_default_sweep(self):
        s = load_sweep("default")
        assert s.alpha == (0.01, 0.1, 0.5, 0.9)
        assert s.k == (4, 12) and s.M == (4, 8, 12) and s.seeds == 20
        assert s.timing.n_windows == 200
        assert len(s.points()) == 4 * 2 * 3 * 4 * 2

    def test_sweep_file_unknown_key(self, tmp_path):
        p = tmp_path / "s.toml"
        p.write_text("seeds = 2\nfoo = 1\n")
        with pytest.raises(ConfigError):
            load_sweep(p)


def row(alpha=0.5, k=4, M=12, scheme="original", mode="non-cooperative", mse=1.0,
        thr=1.0, jain=1.0, seed=0):
    return ResultRow(alpha, k, M, scheme, mode, seed, mse, thr, jain, 0, 0)


class TestTrends:
    def test_decreasing(self):
        assert decreasing_trend([10, 9, 8, 8.1])
        assert not decreasing_trend([10, 9.9, 9.8, 9.7])  # no 2% step
        assert not decreasing_trend([10, 9, 8, 8.5])  # rises over 2%

    def test_missing_coverage_is_skip(self):
        lines = compare_schemes([row()])
        assert lines and all(line.status == "SKIP" for line in lines)

    def test_alpha_lines(self):
        rows = [row(alpha=a, mse=m, thr=t) for a, m, t in
                [(0.01, 10, 10), (0.1, 8, 10), (0.5, 6, 10), (0.9, 4, 10)]]
        lines = {ln.name: ln for ln in compare_schemes(rows)}
        assert lines["alpha tradeoff [non-cooperative] mse_mean decreasing"].status == "PASS"
        assert lines["alpha tradeoff [non-cooperative] throughput decreasing"].status == "FAIL"

    def test_scheme_checks(self):
        o = {"mse_mean": 1.0, "throughput": 100.0, "jain": 0.9}
        s = {"mse_mean": 1.2, "throughput": 101.0, "jain": 0.9}
        c = {"mse_mean": 1.01, "throughput": 90.0, "jain": 0.8}
        sc = {"mse_mean": 1.3, "throughput": 90.0, "jain": 0.8}
        assert all(ok for _, ok, _ in scheme_checks(o, s, c, sc))
        sc_equal = dict(o)
        results = dict((n, ok) for n, ok, _ in scheme_checks(o, s, c, sc_equal))
        assert not results["Original dominates RSMS-SC"]


class TestCli:
    def test_default_single_run(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(dumps_config(NetworkConfig(), TINY))
        assert cli.main(["--config", str(cfg)]) == cli.EXIT_OK
        text = capsys.readouterr().out
        assert text.startswith(",".join(HEADER))

    def test_config_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text("[network]\nalpha = 1.0\n")
        assert cli.main(["--config", str(cfg)]) == cli.EXIT_CONFIG
        assert "alpha must lie in open interval (0,1)" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert cli.main(["--config", str(tmp_path / "none.toml")]) == cli.EXIT_CONFIG

    def test_trend_failure_exit(self, tmp_path, capsys):
        sweep = tmp_path / "s.toml"
        sweep.write_text("seeds = 1\n[axes]\nalpha = [0.01, 0.1, 0.5, 0.9]\n"
                         "[timing]\nn_windows = 1\n")
        out = tmp_path / "r.csv"
        code = cli.main(["--sweep", str(sweep), "--out", str(out), "--check-trends",
                         "--workers", "1"])
        printed = capsys.readouterr().out
        assert "alpha tradeoff" in printed
        assert code in (cli.EXIT_OK, cli.EXIT_TRENDS)
        assert code == (cli.EXIT_TRENDS if "FAIL" in printed else cli.EXIT_OK)
        assert len(parse_csv(out.read_text())[0]) == 4

    def test_trace_and_seeds(self, tmp_path):
        out = tmp_path / "r.csv"
        sweep = tmp_path / "s.toml"
        sweep.write_text("[timing]\nn_windows = 1\n")
        assert cli.main(["--sweep", str(sweep), "--out", str(out), "--seeds", "2",
                         "--trace", "--workers", "1"]) == cli.EXIT_OK
        traces = sorted((tmp_path / "r_traces").iterdir())
        assert len(traces) == 2
        first = traces[0].read_text().splitlines()[0].split(",")
        assert len(first) == 6
