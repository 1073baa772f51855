import numpy as np
import pytest

from rydqmc.engine import (
    InitialState,
    QmcParams,
    Schedule,
    _ChainState,
    kink_density,
    run,
    seeded_run,
    site_update,
    sweep,
)
from rydqmc.lattice import Boundary, LatticeSpec, build_interactions
from rydqmc.observables import binned_error
from rydqmc.oracle import build_hamiltonian, thermal_expectations
from rydqmc.rng import ChainRng
from rydqmc.worldline import Configuration, diagonal_action


def two_level_thermal(delta, beta):
    """Independent 2x2 reference: H = [[0, -1/2], [-1/2, -delta]]."""
    h = np.array([[0.0, -0.5], [-0.5, -delta]])
    evals, evecs = np.linalg.eigh(h)
    w = np.exp(-beta * (evals - evals[0]))
    w /= w.sum()
    n = sum(w[m] * evecs[1, m] ** 2 for m in range(2))
    sx = np.array([[0.0, 1.0], [1.0, 0.0]])
    sx_th = sum(w[m] * evecs[:, m] @ sx @ evecs[:, m] for m in range(2))
    return float(n), float(sx_th)


def isolated_sites():
    """2x2 lattice with the cutoff below the spacing: four decoupled atoms."""
    spec = LatticeSpec(2, 2, Boundary.OBC)
    return spec


def stderr(x):
    return x.std(ddof=1) / np.sqrt(len(x))


def occupied_total(state):
    from rydqmc import _kernels

    return _kernels.occupied_time_total(state.beta, state.spin0, state.kinks, state.kcnt)


class TestSiteUpdate:
    def test_parity_invariant_held(self):
        spec = LatticeSpec(2, 2, Boundary.OBC)
        table = build_interactions(spec, 1.2, 4.0)
        config = Configuration.all_ground(spec, 3.0)
        rng = ChainRng(1)
        for _ in range(200):
            for i in range(4):
                line = site_update(config, i, table, 1.0, rng)
                assert len(line.kinks) % 2 == 0
                assert np.all(np.diff(line.kinks) > 0)
                if len(line.kinks):
                    assert 0.0 <= line.kinks[0] and line.kinks[-1] < 3.0

    def test_isolated_site_symmetric_density(self):
        spec = isolated_sites()
        params = QmcParams(
            Rb=1.2, delta=0.0, R0=0.5, T=0.5, thermalization_sweeps=200,
            measurement_sweeps=6000, rng_seed=2,
        )
        series, _ = run(spec, params)
        n = series.column("density")
        assert abs(n.mean() - 0.5) < 3 * max(stderr(n), 1e-4)

    @pytest.mark.parametrize(
        "delta,T", [(1.0, 0.5), (0.5, 1.0), (2.0, 0.25), (-1.0, 0.5)]
    )
    def test_isolated_site_two_level_value(self, delta, T):
        spec = isolated_sites()
        params = QmcParams(
            Rb=1.2, delta=delta, R0=0.5, T=T, thermalization_sweeps=300,
            measurement_sweeps=12000, rng_seed=3,
        )
        series, _ = run(spec, params)
        n_exact, _ = two_level_thermal(delta, 1.0 / T)
        mean, err, _ = binned_error(series.column("density"))
        assert abs(mean - n_exact) < 3 * max(err, 1e-4)

    def test_two_blockaded_sites_match_oracle(self):
        # 2x2 with nearest-neighbor coupling only: 16-state dense reference
        spec = LatticeSpec(2, 2, Boundary.OBC)
        table = build_interactions(spec, 1.2, 1.0)
        exact = thermal_expectations(build_hamiltonian(spec, table, 3.0), 5.0, spec)
        params = QmcParams(
            Rb=1.2, delta=3.0, R0=1.0, T=0.2, thermalization_sweeps=500,
            measurement_sweeps=20000, rng_seed=4,
        )
        series, _ = run(spec, params)
        mean, err, _ = binned_error(series.column("density"))
        assert abs(mean - exact["n"]) < 3 * err
        f2_mean, f2_err, _ = binned_error(series.column("F2_checkerboard"))
        assert abs(f2_mean - exact["F2_checkerboard"]) < 3 * f2_err

    def test_pair_correlation_matches_four_state_trace(self):
        # exactly two coupled sites at distance 1 (the other pair decoupled):
        # <n> and <n_0 n_1> against the dense 4-state thermal trace
        from rydqmc import _kernels
        from rydqmc.lattice import InteractionTable

        delta, beta, v = 3.0, 5.0, 1.2**6
        h = np.zeros((4, 4))
        for s in range(4):
            n0, n1 = s & 1, (s >> 1) & 1
            h[s, s] = v * n0 * n1 - delta * (n0 + n1)
            h[s ^ 1, s] += -0.5
            h[s ^ 2, s] += -0.5
        evals, evecs = np.linalg.eigh(h)
        w = np.exp(-beta * (evals - evals[0]))
        w /= w.sum()
        probs = (np.abs(evecs) ** 2) @ w
        nn_exact = probs[3]
        n_exact = 0.5 * sum(probs[s] * ((s & 1) + (s >> 1 & 1)) for s in range(4))

        spec = LatticeSpec(2, 2, Boundary.OBC)
        table = InteractionTable(pairs=[(0, 1, v)], Rb=1.2, R0=1.0, n_sites=4)
        rng = ChainRng(14)
        state = _ChainState(spec, beta, rng)
        state.set_couplings(table, delta)
        for _ in range(500):
            state.sweep()
        nn_samples = []
        n_samples = []
        for _ in range(12000):
            state.sweep()
            nn_samples.append(
                _kernels.pair_overlap(
                    state.kinks[0], state.kcnt[0], state.spin0[0],
                    state.kinks[1], state.kcnt[1], state.spin0[1], beta,
                ) / beta
            )
            occ = (
                _kernels._occupied_time(state.kinks[0], state.kcnt[0], state.spin0[0], beta)
                + _kernels._occupied_time(state.kinks[1], state.kcnt[1], state.spin0[1], beta)
            )
            n_samples.append(occ / (2 * beta))
        nn_mean, nn_err, _ = binned_error(np.array(nn_samples))
        n_mean, n_err, _ = binned_error(np.array(n_samples))
        assert abs(nn_mean - nn_exact) < 3 * nn_err
        assert abs(n_mean - n_exact) < 3 * n_err


class TestSweep:
    def test_one_site_equivalent_to_site_update(self):
        # a sweep on N sites applies site_update once per site; with a fresh
        # generator the single-site trajectory matches modulo the permutation
        spec = LatticeSpec(2, 2, Boundary.OBC)
        table = build_interactions(spec, 1.2, 0.5)
        config_a = Configuration.all_ground(spec, 2.0)
        config_b = Configuration.all_ground(spec, 2.0)
        rng_a = ChainRng(5)
        rng_b = ChainRng(5)
        sweep(config_a, table, 1.0, rng_a)
        # replay: consume the same permutation, then update in that order
        perm = np.arange(4, dtype=np.int64)
        from rydqmc.rng import shuffle_in_place

        shuffle_in_place(rng_b.state, perm)
        for i in perm:
            site_update(config_b, int(i), table, 1.0, rng_b)
        for la, lb in zip(config_a.lines, config_b.lines):
            assert la.spin0 == lb.spin0
            assert np.array_equal(la.kinks, lb.kinks)

    def test_kink_buffer_growth_at_large_beta(self):
        # beta = 50 drives kink counts far past the initial row capacity,
        # exercising the grow-and-retry protocol with its generator rewind
        spec = isolated_sites()
        table = build_interactions(spec, 1.2, 0.5)
        rng = ChainRng(19)
        state = _ChainState(spec, 50.0, rng)
        assert state.kinks.shape[1] == 16
        state.set_couplings(table, 0.0)
        for _ in range(200):
            state.sweep()
        assert state.kinks.shape[1] > 16
        assert state.kcnt.max() > 16
        for i in range(4):
            k = state.kcnt[i]
            row = state.kinks[i, :k]
            assert k % 2 == 0
            assert np.all(np.diff(row) > 0)
            assert np.all((row >= 0) & (row < 50.0))
        # a grown chain still matches the symmetric-point density
        samples = []
        for _ in range(2000):
            state.sweep()
            samples.append(
                occupied_total(state) / (4 * 50.0)
            )
        assert abs(np.mean(samples) - 0.5) < 0.01

    def test_zero_measurement_sweeps(self):
        spec = isolated_sites()
        params = QmcParams(
            Rb=1.2, delta=0.0, R0=0.5, T=0.5, thermalization_sweeps=10,
            measurement_sweeps=0, rng_seed=6,
        )
        series, config = run(spec, params)
        assert len(series) == 0
        assert config.beta == 2.0
        for line in config.lines:
            assert len(line.kinks) % 2 == 0


class TestDeterminism:
    def test_same_seed_bit_identical(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        params = QmcParams(
            Rb=1.2, delta=1.0, R0=4.0, T=0.2, thermalization_sweeps=50,
            measurement_sweeps=200, rng_seed=42,
        )
        s1, c1 = run(spec, params)
        s2, c2 = run(spec, params)
        for key in s1.columns:
            assert np.array_equal(s1.columns[key], s2.columns[key]), key
        for la, lb in zip(c1.lines, c2.lines):
            assert la.spin0 == lb.spin0
            assert np.array_equal(la.kinks, lb.kinks)

    def test_different_seed_differs(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        base = dict(Rb=1.2, delta=1.0, R0=4.0, T=0.2, thermalization_sweeps=50, measurement_sweeps=200)
        s1, _ = run(spec, QmcParams(rng_seed=1, **base))
        s2, _ = run(spec, QmcParams(rng_seed=2, **base))
        assert not np.array_equal(s1.column("density"), s2.column("density"))


class TestActionBookkeeping:
    def test_incremental_action_matches_scratch(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        table = build_interactions(spec, 1.2, 4.0)
        rng = ChainRng(9)
        state = _ChainState(spec, 5.0, rng)
        state.set_couplings(table, 1.0)
        s_run = state.diagonal_action()
        for _ in range(300):
            s_run += state.sweep()
        s_scratch = state.diagonal_action()
        assert s_run == pytest.approx(s_scratch, rel=1e-9, abs=1e-9)

    def test_scratch_action_matches_reference(self):
        # kernel path vs the pure-python interval arithmetic
        spec = LatticeSpec(2, 2, Boundary.OBC)
        table = build_interactions(spec, 1.2, 4.0)
        rng = ChainRng(10)
        state = _ChainState(spec, 3.0, rng)
        state.set_couplings(table, 0.7)
        for _ in range(60):
            state.sweep()
        config = state.to_configuration()
        assert state.diagonal_action() == pytest.approx(
            diagonal_action(config, table, 0.7), rel=1e-12, abs=1e-12
        )

    def test_kink_estimator_matches_two_level(self):
        spec = isolated_sites()
        beta = 4.0
        params = QmcParams(
            Rb=1.2, delta=0.8, R0=0.5, T=1 / beta, thermalization_sweeps=300,
            measurement_sweeps=16000, rng_seed=12,
        )
        series, _ = run(spec, params)
        _, sx = two_level_thermal(0.8, beta)
        expected = beta * 0.5 * sx  # kinks per site; <H_offdiag> = -kinks/beta
        mean, err, _ = binned_error(series.column("kink_count") / 4)
        assert abs(mean - expected) < 3 * max(err, 1e-3)


class TestRun:
    def test_measure_every_respected(self):
        spec = isolated_sites()
        params = QmcParams(
            Rb=1.2, delta=0.0, R0=0.5, T=0.5, thermalization_sweeps=5,
            measurement_sweeps=100, measure_every=10, rng_seed=1,
        )
        series, _ = run(spec, params)
        assert len(series) == 10
        assert np.array_equal(series.sweep_indices, np.arange(10, 101, 10))

    def test_random_product_start(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        params = QmcParams(
            Rb=1.2, delta=1.0, R0=4.0, T=0.2, thermalization_sweeps=0,
            measurement_sweeps=0, rng_seed=3, initial_state=InitialState.RANDOM_PRODUCT,
        )
        _, config = run(spec, params)
        values = {line.spin0 for line in config.lines}
        assert values == {0, 1}  # seed 3 happens to mix; determinism keeps this stable

    def test_from_checkpoint_needs_config(self):
        spec = isolated_sites()
        params = QmcParams(
            Rb=1.2, delta=0.0, R0=0.5, T=0.5, initial_state=InitialState.FROM_CHECKPOINT,
        )
        with pytest.raises(ValueError, match="initial_config"):
            run(spec, params)

    def test_resume_reproduces_tail(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        base = dict(Rb=1.2, delta=1.0, R0=4.0, T=0.25, thermalization_sweeps=40, rng_seed=77)
        full, _ = run(spec, QmcParams(measurement_sweeps=120, **base))

        captured = {}

        def grab(sweep_idx, config, rng_state):
            captured[sweep_idx] = (config, rng_state)

        _, _ = run(
            spec,
            QmcParams(measurement_sweeps=50, **base),
            checkpoint_cb=grab,
        )
        config50, rng50 = captured[50]
        resumed, _ = run(
            spec,
            QmcParams(measurement_sweeps=120, **base),
            initial_config=config50,
            rng_state=np.array(rng50, dtype=np.uint64),
            start_measurement_sweep=50,
        )
        tail = full.column("density")[full.sweep_indices > 50]
        assert np.array_equal(resumed.column("density"), tail)
        assert np.array_equal(resumed.sweep_indices, full.sweep_indices[full.sweep_indices > 50])

    def test_obc_series_has_boundary_column(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        params = QmcParams(Rb=1.2, delta=1.0, R0=4.0, T=0.5, thermalization_sweeps=5, measurement_sweeps=20, rng_seed=1)
        series, _ = run(spec, params)
        assert series.has_boundary
        assert np.all(series.column("F_boundary") >= 0.0)
        assert np.all(series.column("F_boundary") <= 1.0)

    def test_hooks_invoked(self):
        spec = isolated_sites()
        seen = []
        params = QmcParams(
            Rb=1.2, delta=0.0, R0=0.5, T=0.5, thermalization_sweeps=0,
            measurement_sweeps=30, measure_every=10, rng_seed=2,
        )
        run(spec, params, hooks=[lambda idx, sample: seen.append((idx, sample["density"]))])
        assert [idx for idx, _ in seen] == [10, 20, 30]


class TestSchedule:
    def test_stage_override_validation(self):
        with pytest.raises(ValueError, match="override"):
            Schedule(stages=[({"T": 0.1}, 10)])
        with pytest.raises(ValueError, match=">= 0"):
            Schedule(stages=[({"Rb": 1.2}, -1)])

    def test_seeded_equals_plain_run_with_extra_thermalization(self):
        # seed == target: stage 1 is just more equilibration at the same couplings
        spec = LatticeSpec(3, 3, Boundary.OBC)
        shared = dict(Rb=1.2, R0=4.0, T=0.25, rng_seed=5)
        seed_params = QmcParams(delta=1.0, thermalization_sweeps=30, measurement_sweeps=0, **shared)
        target = QmcParams(delta=1.0, thermalization_sweeps=20, measurement_sweeps=60, **shared)
        a = seeded_run(spec, seed_params, target)
        b, _ = run(spec, QmcParams(delta=1.0, thermalization_sweeps=50, measurement_sweeps=60, **shared))
        assert np.array_equal(a.column("density"), b.column("density"))

    def test_seeded_requires_shared_temperature(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        a = QmcParams(Rb=1.7, delta=3.0, R0=4.0, T=0.25)
        b = QmcParams(Rb=1.5, delta=3.0, R0=4.0, T=0.2)
        with pytest.raises(ValueError, match="temperature"):
            seeded_run(spec, a, b)

    def test_seeded_requires_shared_cutoff(self):
        spec = LatticeSpec(3, 3, Boundary.OBC)
        a = QmcParams(Rb=1.7, delta=3.0, R0=3.0, T=0.25)
        b = QmcParams(Rb=1.5, delta=3.0, R0=4.0, T=0.25)
        with pytest.raises(ValueError, match="R0"):
            seeded_run(spec, a, b)


@pytest.mark.slow
class TestSeededPhaseRuns:
    """Phase seeding behavior near the star-striated boundary (L=8, R0=4)."""

    def test_star_order_survives_seeding(self):
        from conftest import pattern_config

        spec = LatticeSpec(8, 8, Boundary.PBC)
        target = QmcParams(
            Rb=1.7, delta=3.0, R0=4.0, T=1.0 / 8, thermalization_sweeps=500,
            measurement_sweeps=4000, measure_every=2, rng_seed=5,
            initial_state=InitialState.RANDOM_PRODUCT, allow_half_cutoff=True,
        )
        random_start, _ = run(spec, target)
        seed_stage = QmcParams(
            Rb=1.8, delta=3.0, R0=4.0, T=1.0 / 8, thermalization_sweeps=1000,
            measurement_sweeps=0, rng_seed=5, allow_half_cutoff=True,
        )
        seeded = seeded_run(
            spec, seed_stage, target, initial_config=pattern_config(spec, 8.0, "star")
        )
        f_rand = random_start.column("F_star").mean()
        f_seed = seeded.column("F_star").mean()
        assert f_seed > 1.5 * f_rand, f"seeded {f_seed:.3f} vs random {f_rand:.3f}"
        assert f_seed > 0.08

    def test_seeding_from_both_phases_brackets_transition(self):
        from conftest import pattern_config, total_energy_series

        spec = LatticeSpec(8, 8, Boundary.PBC)
        beta = 8.0
        winners = {}
        for rb in (1.45, 1.75):
            energies = {}
            for pattern in ("star", "striated"):
                params = QmcParams(
                    Rb=rb, delta=3.5, R0=4.0, T=1.0 / 8, thermalization_sweeps=3000,
                    measurement_sweeps=5000, measure_every=2, rng_seed=11,
                    allow_half_cutoff=True,
                )
                series, _ = run(spec, params, initial_config=pattern_config(spec, beta, pattern))
                e, err, _ = binned_error(total_energy_series(series, beta))
                energies[pattern] = (e, err)
            gap = energies["striated"][0] - energies["star"][0]
            gap_err = np.hypot(energies["star"][1], energies["striated"][1])
            assert abs(gap) > 3 * gap_err, f"Rb={rb}: unresolved gap {gap:.3f}+-{gap_err:.3f}"
            winners[rb] = "star" if gap > 0 else "striated"
        # the stability crossover (the transition) lies inside the scanned interval
        assert winners[1.45] == "striated"
        assert winners[1.75] == "star"


class TestParams:
    def test_invariants(self):
        with pytest.raises(ValueError):
            QmcParams(Rb=1.2, delta=0.0, T=0.0)
        with pytest.raises(ValueError):
            QmcParams(Rb=1.2, delta=0.0, T=0.5, measure_every=0)
        with pytest.raises(ValueError):
            QmcParams(Rb=1.2, delta=0.0, T=0.5, thermalization_sweeps=-1)
        with pytest.raises(ValueError):
            QmcParams(Rb=1.2, delta=0.0, T=0.5, flip_rule="glauber")

    def test_kink_density_helper(self):
        spec = isolated_sites()
        params = QmcParams(Rb=1.2, delta=0.0, R0=0.5, T=0.5, thermalization_sweeps=50, measurement_sweeps=500, rng_seed=8)
        series, _ = run(spec, params)
        kd = kink_density(series)
        assert kd == pytest.approx(series.column("kink_count").mean() / (4 * 2.0))
