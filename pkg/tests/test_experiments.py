import io
import json

import numpy as np
import pytest

from xxz_torus.experiments import (
    default_fit_window,
    fit_exponential,
    gap_series,
    ising_limit_scan,
    reproduce_table,
    summary_json,
    worker_count,
    write_gap_csv,
    write_ising_csv,
    write_plot_data,
    write_table_csv,
)
from xxz_torus.model import ModelParams, gap_formula
from xxz_torus.reference import delta_table, reference_fit, roots_table


class TestFitExponential:
    def test_exact_exponential_recovered(self):
        ns = np.arange(4, 15)
        pts = list(zip(ns, 5.0 * np.exp(-1.3 * ns)))
        fit = fit_exponential(pts)
        assert fit.amplitude == pytest.approx(5.0, rel=1e-10)
        assert fit.rate == pytest.approx(1.3, rel=1e-10)
        assert fit.rms_log_residual <= 1e-12

    def test_printed_column_rate_eta1(self):
        # successive ratios of the printed values are ~ e
        etas, rows, _ = delta_table()
        col = etas.index(1.0)
        pts = [(n, rows[n][col]) for n in range(14, 20)]
        fit = fit_exponential(pts, window=(14, 19))
        assert fit.rate == pytest.approx(1.0, abs=0.02)

    def test_printed_column_rate_eta2(self):
        etas, rows, _ = delta_table()
        col = etas.index(2.0)
        pts = [(n, rows[n][col]) for n in range(5, 11)]
        fit = fit_exponential(pts, window=(5, 10))
        assert fit.rate == pytest.approx(2.0, rel=0.15)

    def test_window_validation(self):
        with pytest.raises(ValueError):
            fit_exponential([(1, 1.0), (2, 0.5)])
        with pytest.raises(ValueError):
            fit_exponential([(1, 1.0), (2, -0.5), (3, 0.2)])

    def test_default_window_is_large_n_half(self):
        assert default_fit_window(range(2, 20)) == (11, 19)
        assert default_fit_window([5, 6, 7, 8]) == (7, 8)


class TestReproduceTables:
    def test_table1_summary(self):
        art = reproduce_table(1)
        assert art.summary["cells_checked"] == 7 + 8 + 9 + 10 + 11
        assert art.summary["cells_passed"] == art.summary["cells_checked"]
        assert art.summary["max_abs_diff"] <= 5e-4

    def test_table2_spot_cell(self):
        art = reproduce_table(2)
        assert art.summary["cells_passed"] == art.summary["cells_checked"]
        row = next(r for r in art.rows if r.n_sites == 11 and r.index_j == 1)
        assert row.re_u == pytest.approx(-1.5708, abs=5e-4)
        assert row.im_u == pytest.approx(5.0953, abs=5e-4)

    def test_table3_dense_subset(self):
        art = reproduce_table(3, n_values=range(2, 9))
        assert art.summary["cells_passed"] == art.summary["cells_checked"] == 28
        cell = next(r for r in art.rows if r.n_sites == 5 and r.eta == 2.0)
        assert cell.delta == pytest.approx(0.0089281224, abs=1e-9)
        assert cell.method == "dense"
        # the N=2 column is consistent with the exact reduction E0_ED = -2
        for r in art.rows:
            if r.n_sites == 2:
                assert r.e_numeric == pytest.approx(-2.0, abs=1e-10)

    def test_table3_iterative_spot(self):
        art = reproduce_table(3, n_values=[15], etas=[1.0])
        (row,) = art.rows
        assert row.method == "iterative"
        assert row.abs_diff <= 1e-5

    def test_invalid_table_id(self):
        with pytest.raises(ValueError):
            reproduce_table(4)


class TestGapSeries:
    def test_small_sizes_match_closed_form(self, dense_cache):
        rows = gap_series(1.0, range(8, 11))
        amp, rate = reference_fit("excitation_eta1")
        for r in rows:
            assert not r.error
            assert r.cluster_size == 2 * r.n_sites
            # discrepancy decays like the published excitation fit
            assert r.abs_diff <= 2 * amp * np.exp(-rate * r.n_sites)

    def test_failure_flagged_not_raised(self):
        rows = gap_series(1.0, [8, 27])  # 27 exceeds the matrix-free limit
        assert not rows[0].error
        assert rows[1].error != ""
        assert np.isnan(rows[1].gap_numeric)


class TestIsingScan:
    def test_both_columns_decay(self):
        rows = ising_limit_scan(10, [2.0, 3.0, 4.0, 6.0, 8.0])
        g = [abs(r.ground_discrepancy) for r in rows]
        e = [abs(r.excited_discrepancy) for r in rows]
        assert all(np.diff(g) < 0) and all(np.diff(e) < 0)
        assert g[-1] <= 1e-3 and e[-1] <= 1e-2

    def test_validation(self):
        with pytest.raises(ValueError):
            ising_limit_scan(10, [1.0, -2.0])


class TestArtifacts:
    def test_table_csv_deterministic_after_header(self):
        art = reproduce_table(1)
        a, b = io.StringIO(), io.StringIO()
        write_table_csv(art, a)
        write_table_csv(art, b)
        assert a.getvalue().splitlines()[0].startswith("# generated ")
        assert a.getvalue().splitlines()[1:] == b.getvalue().splitlines()[1:]

    def test_summary_json_fields(self):
        art = reproduce_table(1)
        doc = json.loads(summary_json(art))
        assert set(doc) >= {"table", "cells_checked", "cells_passed",
                            "max_abs_diff"}

    def test_gap_and_ising_csv(self, tmp_path):
        rows = gap_series(1.0, [8])
        p = tmp_path / "gap.csv"
        write_gap_csv(rows, str(p))
        lines = p.read_text().splitlines()
        assert lines[1].startswith("n_sites,eta,gap_numeric")
        rows = ising_limit_scan(6, [2.0, 4.0])
        p2 = tmp_path / "ising.csv"
        write_ising_csv(rows, 6, str(p2))
        assert len(p2.read_text().splitlines()) == 4

    def test_plot_data_skips_nonpositive(self, tmp_path):
        p = tmp_path / "plot.csv"
        write_plot_data([(4, 1.0), (5, 0.0), (6, -2.0), (7, 0.5)], str(p))
        lines = p.read_text().splitlines()
        assert len(lines) == 2 + 2  # header comment + column row + 2 points


def test_worker_count_env(monkeypatch):
    monkeypatch.setenv("XXZ_TORUS_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("XXZ_TORUS_THREADS", "0")
    with pytest.raises(ValueError):
        worker_count()
    monkeypatch.delenv("XXZ_TORUS_THREADS")
    assert worker_count() >= 1
