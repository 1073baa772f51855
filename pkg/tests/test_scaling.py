import numpy as np
import pytest

from rydqmc.scaling import (
    FitFailureError,
    ScalingDataset,
    binder_crossing,
    collapse_score,
    fit_binder,
    fit_order,
    synthetic_binder_dataset,
    synthetic_order_dataset,
)

# generator values for the self-tests (Binder ratio and order parameter forms)
GC = 1.0959
NU = 0.632
BETA_X = 0.291
A_COEF = [0.7048, 0.122, -0.0096, -0.0025, 0.00034]
B_COEF = [0.309, 0.0679, 0.0056, -0.00096, -0.000035]
SIZES = [12, 16, 20]
G_GRID = np.linspace(1.05, 1.15, 11)


class TestFitBinder:
    def test_noiseless_round_trip(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID)
        res = fit_binder(data)
        assert res.g_c == pytest.approx(GC, abs=1e-6)
        assert res.nu == pytest.approx(NU, abs=1e-6)
        assert res.coeffs[0] == pytest.approx(A_COEF[0], abs=1e-6)

    def test_alternate_generator_round_trip(self):
        data = synthetic_binder_dataset(1.1, 0.7, [0.6, 0.2, -0.01, 0.001, 0.0], SIZES, G_GRID)
        res = fit_binder(data)
        assert res.g_c == pytest.approx(1.1, abs=1e-6)
        assert res.nu == pytest.approx(0.7, abs=1e-6)

    def test_single_size_unidentifiable(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, [12], G_GRID)
        with pytest.raises(FitFailureError, match="single system size"):
            fit_binder(data)

    def test_l_min_filter(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, [8, 12, 16, 20], G_GRID)
        res = fit_binder(data, L_min=12)
        assert res.n_points == 3 * len(G_GRID)

    def test_kind_check(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID)
        with pytest.raises(ValueError, match="binder-kind"):
            fit_binder(data)

    def test_noise_robustness_median(self):
        errs = []
        for seed in range(20):
            data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID, noise_frac=0.01, seed=seed)
            res = fit_binder(data)
            errs.append(abs(res.nu / NU - 1.0))
        assert np.median(errs) < 0.05

    def test_chi2_per_dof_reasonable(self):
        vals = []
        for seed in range(10):
            data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID, noise_frac=0.01, seed=seed)
            vals.append(fit_binder(data).chi2_per_dof)
        assert 0.5 < np.median(vals) < 1.5

    def test_bootstrap_extras(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID, noise_frac=0.01, seed=3)
        res = fit_binder(data, bootstrap=10)
        assert "bootstrap" in res.extras
        assert res.extras["bootstrap"]["nu"] > 0


class TestFitOrder:
    def test_noiseless_round_trip(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID)
        res = fit_order(data, GC, NU)
        assert res.beta_exp == pytest.approx(BETA_X, abs=1e-6)
        assert res.coeffs[0] == pytest.approx(B_COEF[0], abs=1e-6)

    def test_beta_zero_degenerate(self):
        data = synthetic_order_dataset(1.1, 0.7, 0.0, [0.5, 0.1, 0.0, 0.0, 0.0], SIZES, G_GRID)
        res = fit_order(data, 1.1, 0.7)
        assert res.beta_exp == pytest.approx(0.0, abs=1e-5)

    def test_row_order_invariance(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID, noise_frac=0.01, seed=5)
        res_a = fit_order(data, GC, NU)
        perm = np.random.default_rng(0).permutation(len(data.y))
        shuffled = ScalingDataset(data.L[perm], data.g[perm], data.y[perm], data.y_err[perm], "order")
        res_b = fit_order(shuffled, GC, NU)
        assert res_a.beta_exp == pytest.approx(res_b.beta_exp, abs=1e-9)
        assert res_a.chi2 == pytest.approx(res_b.chi2, rel=1e-9)

    def test_kind_check(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID)
        with pytest.raises(ValueError, match="order-kind"):
            fit_order(data, GC, NU)

    def test_noise_robustness_median(self):
        errs = []
        for seed in range(20):
            data = synthetic_order_dataset(
                GC, NU, BETA_X, B_COEF, SIZES, G_GRID, noise_frac=0.01, seed=seed + 100
            )
            res = fit_order(data, GC, NU)
            errs.append(abs(res.beta_exp / BETA_X - 1.0))
        assert np.median(errs) < 0.10


class TestCollapseScore:
    def test_perfect_collapse(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID)
        assert collapse_score(data, GC, NU, BETA_X) <= 1e-10

    def test_wrong_nu_much_worse(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID)
        good = collapse_score(data, GC, NU, BETA_X)
        bad = collapse_score(data, GC, 2 * NU, BETA_X)
        assert bad >= 10 * max(good, 1e-12)

    def test_true_exponents_beat_swapped(self):
        data = synthetic_order_dataset(GC, NU, BETA_X, B_COEF, SIZES, G_GRID, noise_frac=0.005, seed=9)
        good = collapse_score(data, GC, NU, BETA_X)
        swapped = collapse_score(data, GC, BETA_X, NU)
        assert good < swapped

    def test_binder_collapse_without_beta(self):
        data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID)
        assert collapse_score(data, GC, NU) <= 1e-10

    def test_insufficient_overlap(self):
        # disjoint x-windows for the two sizes: no shared scaling region
        d1 = synthetic_order_dataset(1.0, 0.6, 0.3, [0.3, 0.05, 0, 0, 0], [8], np.linspace(0.90, 0.96, 5))
        d2 = synthetic_order_dataset(1.0, 0.6, 0.3, [0.3, 0.05, 0, 0, 0], [24], np.linspace(1.04, 1.10, 5))
        merged = ScalingDataset(
            np.concatenate([d1.L, d2.L]),
            np.concatenate([d1.g, d2.g]),
            np.concatenate([d1.y, d2.y]),
            np.concatenate([d1.y_err, d2.y_err]),
            "order",
        )
        with pytest.raises(ValueError, match="shared x-range"):
            collapse_score(merged, 1.0, 0.6, 0.3)


class TestDataset:
    def test_csv_round_trip(self, tmp_path):
        data = synthetic_binder_dataset(GC, NU, A_COEF, SIZES, G_GRID, noise_frac=0.01, seed=1)
        path = tmp_path / "ds.csv"
        data.to_csv(path)
        back = ScalingDataset.from_csv(path, kind="binder")
        assert np.array_equal(back.L, data.L)
        assert np.array_equal(back.y, data.y)

    def test_csv_header_required(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            ScalingDataset.from_csv(path)

    def test_csv_malformed_row_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("L,g,y,y_err\n8,1.0,0.5,0.01\n8,1.0,oops,0.01\n")
        with pytest.raises(ValueError, match="line 3"):
            ScalingDataset.from_csv(path)

    def test_positive_errors_required(self):
        with pytest.raises(ValueError, match="positive"):
            ScalingDataset([8, 8], [1.0, 1.1], [0.5, 0.6], [0.1, 0.0])


class TestBinderCrossing:
    def test_linear_interpolation(self):
        g = np.array([1.0, 1.1, 1.2])
        small = np.array([0.5, 0.55, 0.6])
        large = np.array([0.4, 0.5, 0.7])
        # diff: -0.1, -0.05, +0.1 -> crossing at 1.1 + 0.05/0.15 * 0.1
        assert binder_crossing(g, small, large) == pytest.approx(1.1 + 0.1 / 3)

    def test_no_crossing_raises(self):
        g = np.array([1.0, 1.1])
        with pytest.raises(ValueError, match="cross"):
            binder_crossing(g, [0.5, 0.6], [0.4, 0.5])
