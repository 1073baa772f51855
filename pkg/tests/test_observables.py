import math

import numpy as np
import pytest

from rydqmc.lattice import Boundary, LatticeSpec
from rydqmc.observables import (
    CHECKERBOARD,
    STAR,
    STRIATED,
    InsufficientDataError,
    bimodality,
    binder,
    binder_from_moments,
    binned_error,
    boundary_order,
    density,
    fourier_order,
    histogram,
)
from rydqmc.worldline import Configuration, Worldline


def checkerboard_snapshot(L):
    idx = np.arange(L * L)
    x, y = idx % L, idx // L
    return ((x + y) % 2 == 0).astype(np.int8)


def star_snapshot(L):
    """Density-1/4 star pattern: columns of period 2, rows shifted by 2."""
    idx = np.arange(L * L)
    x, y = idx % L, idx // L
    return (((x % 2 == 0) & (y % 4 == 0)) | ((x % 2 == 1) & (y % 4 == 2))).astype(np.int8)


def brute_force_F(snap, L, kx, ky):
    """Independent direct summation of the symmetrized Fourier amplitude."""
    fa = 0.0 + 0.0j
    fb = 0.0 + 0.0j
    for i, n in enumerate(snap):
        if not n:
            continue
        x, y = i % L, i // L
        fa += np.exp(1j * (kx * x + ky * y))
        fb += np.exp(1j * (ky * x + kx * y))
    return abs(0.5 * (fa + fb)) / (L * L)


class TestFourierOrder:
    def test_perfect_checkerboard(self):
        spec = LatticeSpec(4, 4, Boundary.PBC)
        assert fourier_order(checkerboard_snapshot(4), spec, CHECKERBOARD) == pytest.approx(0.5)

    def test_all_occupied_cancels(self):
        spec = LatticeSpec(4, 4, Boundary.PBC)
        snap = np.ones(16, dtype=np.int8)
        assert fourier_order(snap, spec, CHECKERBOARD) == pytest.approx(0.0, abs=1e-14)

    def test_star_pattern_matches_brute_force(self):
        spec = LatticeSpec(4, 4, Boundary.PBC)
        snap = star_snapshot(4)
        expected = brute_force_F(snap, 4, *STAR)
        assert fourier_order(snap, spec, STAR) == pytest.approx(expected)
        assert expected == pytest.approx(0.125)

    def test_random_snapshots_match_brute_force(self):
        spec = LatticeSpec(5, 5, Boundary.PBC)
        rng = np.random.default_rng(2)
        for k in (CHECKERBOARD, STRIATED, STAR):
            for _ in range(5):
                snap = rng.integers(0, 2, 25).astype(np.int8)
                assert fourier_order(snap, spec, k) == pytest.approx(
                    brute_force_F(snap, 5, *k), abs=1e-12
                )

    def test_range_zero_one(self):
        spec = LatticeSpec(4, 4, Boundary.PBC)
        rng = np.random.default_rng(0)
        for _ in range(50):
            snap = rng.integers(0, 2, 16).astype(np.int8)
            for k in (CHECKERBOARD, STRIATED, STAR):
                f = fourier_order(snap, spec, k)
                assert 0.0 <= f <= 1.0

    def test_translation_invariance_of_pi_pi(self):
        spec = LatticeSpec(6, 6, Boundary.PBC)
        rng = np.random.default_rng(9)
        snap = rng.integers(0, 2, 36).astype(np.int8)
        grid = snap.reshape(6, 6)
        base = fourier_order(snap, spec, CHECKERBOARD)
        for ax in (0, 1):
            rolled = np.roll(grid, 1, axis=ax).ravel()
            assert fourier_order(rolled, spec, CHECKERBOARD) == pytest.approx(base, abs=1e-12)


class TestBoundaryOrder:
    def test_checkerboard_boundary(self):
        spec = LatticeSpec(4, 4, Boundary.OBC)
        assert boundary_order(checkerboard_snapshot(4), spec) == pytest.approx(0.5)

    def test_empty(self):
        spec = LatticeSpec(4, 4, Boundary.OBC)
        assert boundary_order(np.zeros(16, dtype=np.int8), spec) == 0.0

    def test_single_corner_site(self):
        spec = LatticeSpec(4, 4, Boundary.OBC)
        snap = np.zeros(16, dtype=np.int8)
        snap[0] = 1
        assert boundary_order(snap, spec) == pytest.approx(1.0 / 12.0)

    def test_pbc_usage_error(self):
        spec = LatticeSpec(4, 4, Boundary.PBC)
        with pytest.raises(ValueError):
            boundary_order(np.zeros(16, dtype=np.int8), spec)


class TestBinder:
    def test_constant_samples(self):
        u4, err = binder([0.3] * 100)
        assert u4 == pytest.approx(1.0)
        assert err == pytest.approx(0.0, abs=1e-12)

    def test_gaussian_limit(self):
        rng = np.random.default_rng(4)
        samples = np.abs(rng.normal(0, 1, 200000))
        u4, err = binder(samples)
        assert u4 == pytest.approx(0.0, abs=0.02)

    def test_half_half(self):
        u4, _ = binder([1.0, 1.0, 0.0, 0.0])
        assert u4 == pytest.approx(0.5)

    def test_all_zero_undefined(self):
        with pytest.raises(ZeroDivisionError):
            binder([0.0, 0.0, 0.0])

    def test_u4_never_exceeds_one(self):
        rng = np.random.default_rng(8)
        for _ in range(20):
            samples = np.abs(rng.normal(1.0, rng.uniform(0.01, 2.0), 500))
            u4, _ = binder(samples)
            assert u4 <= 1.0 + 1e-12

    def test_moment_variant_consistent(self):
        rng = np.random.default_rng(5)
        f = np.abs(rng.normal(0.5, 0.1, 4000))
        u_a, _ = binder(f)
        u_b, _ = binder_from_moments(f**2, f**4)
        assert u_a == pytest.approx(u_b)


class TestDensity:
    def make_config(self, lines):
        spec = LatticeSpec(2, 2, Boundary.OBC)
        return Configuration(2.0, lines, spec)

    def test_full(self):
        config = self.make_config([Worldline(1) for _ in range(4)])
        assert density(config) == 1.0

    def test_empty(self):
        config = self.make_config([Worldline(0) for _ in range(4)])
        assert density(config) == 0.0

    def test_half_line(self):
        # one site occupied on [0, beta/2) out of 4 sites -> 1/8
        lines = [Worldline(1, [1.0, 2.0 - 1e-12]), Worldline(0), Worldline(0), Worldline(0)]
        config = self.make_config(lines)
        assert density(config) == pytest.approx(1.0 / 8.0, abs=1e-11)


class TestDensityVsSnapshots:
    def test_exact_integral_equals_snapshot_average(self):
        # for one fixed configuration, averaging equal-time snapshots over
        # many imaginary times converges to the exact interval integral
        spec = LatticeSpec(3, 3, Boundary.OBC)
        beta = 4.0
        rng = np.random.default_rng(12)
        lines = []
        for _ in range(9):
            k = 2 * rng.integers(1, 5)
            t = np.sort(rng.uniform(0, beta, k))
            while len(np.unique(t)) < k:
                t = np.sort(rng.uniform(0, beta, k))
            lines.append(Worldline(int(rng.integers(0, 2)), t))
        config = Configuration(beta, lines, spec)
        exact = density(config)
        from rydqmc.worldline import snapshot

        taus = rng.uniform(0, beta, 20000)
        est = np.mean([snapshot(config, t).mean() for t in taus])
        stderr = np.std([snapshot(config, t).mean() for t in taus[:2000]]) / np.sqrt(len(taus))
        assert abs(est - exact) < 4 * max(stderr, 1e-4)


class TestHistogramBimodality:
    def test_unimodal_gaussian(self):
        rng = np.random.default_rng(1)
        counts, _ = histogram(rng.normal(0, 1, 5000), 24)
        is_bi, dip = bimodality(counts)
        assert not is_bi

    def test_two_gaussians(self):
        rng = np.random.default_rng(2)
        samples = np.concatenate([rng.normal(-3, 0.5, 3000), rng.normal(3, 0.5, 3000)])
        counts, _ = histogram(samples, 24)
        is_bi, dip = bimodality(counts)
        assert is_bi
        assert dip > 0.9

    def test_two_delta_peaks(self):
        samples = np.array([0.2] * 50 + [0.4] * 50)
        counts, edges = histogram(samples, 10)
        is_bi, dip = bimodality(counts)
        assert is_bi
        assert dip == pytest.approx(1.0)

    def test_degenerate_range(self):
        counts, edges = histogram(np.full(100, 0.7), 16)
        assert len(counts) == 1
        assert not bimodality(counts)[0]

    def test_empty_error(self):
        with pytest.raises(InsufficientDataError):
            histogram([], 8)


class TestBinnedError:
    def test_iid_matches_naive(self):
        rng = np.random.default_rng(3)
        x = rng.normal(0, 1, 8192)
        mean, err, tau = binned_error(x)
        naive = x.std(ddof=1) / math.sqrt(len(x))
        assert err == pytest.approx(naive, rel=0.2)
        assert tau < 1.0

    def test_constant_series(self):
        mean, err, tau = binned_error(np.full(64, 2.5))
        assert mean == 2.5
        assert err == 0.0

    def test_ar1_tau_within_factor_two(self):
        rho = 0.7
        rng = np.random.default_rng(6)
        n = 1 << 16
        x = np.empty(n)
        x[0] = rng.normal()
        noise = rng.normal(size=n) * math.sqrt(1 - rho**2)
        for k in range(1, n):
            x[k] = rho * x[k - 1] + noise[k]
        _, _, tau = binned_error(x)
        tau_exact = 0.5 * (1 + rho) / (1 - rho)
        assert tau_exact / 2 < tau < tau_exact * 2

    def test_too_few_samples(self):
        with pytest.raises(InsufficientDataError):
            binned_error(np.arange(8))
