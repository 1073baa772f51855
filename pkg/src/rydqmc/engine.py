"""The QMC Markov chain: sweep scheduling, equilibration, seeding, measurement.

One chain is one sequential task owning its configuration and random
generator; parallelism happens only across chains.  Everything a chain does
is a deterministic function of its seed, so identical runs produce
bit-identical sample series.

Updates preserve detailed balance with respect to the Gibbs weight of the
Rydberg Hamiltonian at temperature T (see _kernels for the per-site
continuous-time cluster move).  The transverse-field sign is taken negative
so all worldline weights are positive; the plus convention of the laser
drive is unitarily equivalent and has identical diagonal observables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from rydqmc import _kernels
from rydqmc.lattice import Boundary, InteractionTable, LatticeSpec, boundary_sites, build_interactions
from rydqmc.observables import ORDER_MOMENTA, ObservableSeries
from rydqmc.rng import ChainRng
from rydqmc.worldline import Configuration, Worldline

DEFAULT_SLICES = 8  # equal-time snapshots per measured sweep, averaged into one sample


class InitialState(Enum):
    ALL_GROUND = "AllGround"
    RANDOM_PRODUCT = "RandomProduct"
    FROM_CHECKPOINT = "FromCheckpoint"
    FROM_SEED_PHASE = "FromSeedPhase"


@dataclass(frozen=True)
class QmcParams:
    """Physics and chain-control parameters of one run (units: Omega = a = 1)."""

    Rb: float
    delta: float
    R0: float = 4.0
    T: float = 0.1
    thermalization_sweeps: int = 1000
    measurement_sweeps: int = 10000
    measure_every: int = 1
    rng_seed: int = 0
    initial_state: InitialState = InitialState.ALL_GROUND
    n_slices: int = DEFAULT_SLICES
    allow_half_cutoff: bool = False
    flip_rule: str = "heatbath"

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError(f"temperature must be positive, got T={self.T}")
        if self.thermalization_sweeps < 0 or self.measurement_sweeps < 0:
            raise ValueError("sweep counts must be >= 0")
        if self.measure_every < 1:
            raise ValueError("measure_every must be >= 1")
        if not isinstance(self.initial_state, InitialState):
            object.__setattr__(self, "initial_state", InitialState(self.initial_state))
        if self.flip_rule not in ("heatbath", "metropolis"):
            raise ValueError(f"flip_rule must be 'heatbath' or 'metropolis', got {self.flip_rule!r}")

    @property
    def beta(self) -> float:
        return 1.0 / self.T

    def as_dict(self) -> dict:
        return {
            "Rb": self.Rb,
            "delta": self.delta,
            "R0": self.R0,
            "T": self.T,
            "thermalization_sweeps": self.thermalization_sweeps,
            "measurement_sweeps": self.measurement_sweeps,
            "measure_every": self.measure_every,
            "rng_seed": self.rng_seed,
            "initial_state": self.initial_state.value,
            "n_slices": self.n_slices,
            "allow_half_cutoff": self.allow_half_cutoff,
            "flip_rule": self.flip_rule,
        }


@dataclass
class Schedule:
    """Pre-measurement stages: (parameter overrides, sweeps), applied in order.

    Overrides may change Rb, delta, or R0 (the interaction table is rebuilt);
    the temperature cannot change mid-chain because the worldlines live on a
    fixed imaginary-time circle.
    """

    stages: list[tuple[dict, int]] = field(default_factory=list)

    def __post_init__(self):
        allowed = {"Rb", "delta", "R0"}
        for overrides, sweeps in self.stages:
            if sweeps < 0:
                raise ValueError("stage sweep counts must be >= 0")
            bad = set(overrides) - allowed
            if bad:
                raise ValueError(f"schedule stages may only override {sorted(allowed)}, got {sorted(bad)}")


class _ChainState:
    """Flat-array mirror of a Configuration plus kernel scratch buffers."""

    def __init__(self, spec: LatticeSpec, beta: float, rng: ChainRng):
        self.spec = spec
        self.beta = beta
        self.rng = rng
        n = spec.n_sites
        cap = 16
        self.spin0 = np.zeros(n, dtype=np.uint8)
        self.kinks = np.zeros((n, cap), dtype=np.float64)
        self.kcnt = np.zeros(n, dtype=np.int64)
        self.table: InteractionTable | None = None
        self.delta = 0.0
        self.metropolis = False
        scratch = max(64, 8 + 4 * int(beta))
        self._cand = np.empty(scratch, dtype=np.float64)
        self._cuts = np.empty(2 * scratch, dtype=np.float64)
        self._flags = np.empty(2 * scratch, dtype=np.uint8)
        self._w = np.empty(2 * scratch, dtype=np.float64)
        self._vals = np.empty(2 * scratch, dtype=np.uint8)
        self._perm = np.empty(n, dtype=np.int64)
        self._rng_save = np.empty(4, dtype=np.uint64)
        self._occ = np.empty(n, dtype=np.uint8)
        self._phases = None

    # -- construction / conversion ------------------------------------------------

    @classmethod
    def from_configuration(cls, config: Configuration, rng: ChainRng) -> "_ChainState":
        state = cls(config.spec, config.beta, rng)
        cap = max(16, max((len(l.kinks) for l in config.lines), default=0))
        state.kinks = np.zeros((config.spec.n_sites, cap), dtype=np.float64)
        for i, line in enumerate(config.lines):
            state.spin0[i] = line.spin0
            k = len(line.kinks)
            state.kcnt[i] = k
            state.kinks[i, :k] = line.kinks
        return state

    def to_configuration(self) -> Configuration:
        lines = [
            Worldline(int(self.spin0[i]), self.kinks[i, : self.kcnt[i]].copy())
            for i in range(self.spec.n_sites)
        ]
        return Configuration(beta=self.beta, lines=lines, spec=self.spec)

    def set_couplings(self, table: InteractionTable, delta: float, flip_rule: str = "heatbath"):
        self.table = table
        self.delta = delta
        self.metropolis = flip_rule == "metropolis"

    def init_all_ground(self):
        self.spin0[:] = 0
        self.kcnt[:] = 0

    def init_random_product(self):
        self.kcnt[:] = 0
        for i in range(self.spec.n_sites):
            self.spin0[i] = self.rng.below(2)

    # -- updates ------------------------------------------------------------------

    def _grow_kinks(self, needed: int):
        cap = max(2 * self.kinks.shape[1], needed)
        bigger = np.zeros((self.spec.n_sites, cap), dtype=np.float64)
        bigger[:, : self.kinks.shape[1]] = self.kinks
        self.kinks = bigger

    def site_update(self, i: int) -> float:
        while True:
            self._rng_save[:] = self.rng.state
            need, ds = _kernels.site_update_kernel(
                i,
                self.beta,
                self.delta,
                self.metropolis,
                self.spin0,
                self.kinks,
                self.kcnt,
                self.table.nbr_ptr,
                self.table.nbr_idx,
                self.table.nbr_val,
                self.rng.state,
                self._cand,
                self._cuts,
                self._flags,
                self._w,
                self._vals,
            )
            if need == 0:
                return ds
            self.rng.state[:] = self._rng_save
            self._grow_kinks(need)

    def sweep(self) -> float:
        pos = 0
        ds_total = 0.0
        while True:
            pos, need, ds = _kernels.sweep_kernel(
                self.beta,
                self.delta,
                self.metropolis,
                self.spin0,
                self.kinks,
                self.kcnt,
                self.table.nbr_ptr,
                self.table.nbr_idx,
                self.table.nbr_val,
                self.rng.state,
                self._perm,
                pos,
                self._cand,
                self._cuts,
                self._flags,
                self._w,
                self._vals,
                self._rng_save,
            )
            ds_total += ds
            if pos < 0:
                return ds_total
            self._grow_kinks(need)

    # -- measurement ---------------------------------------------------------------

    def _build_phases(self):
        spec = self.spec
        idx = np.arange(spec.n_sites)
        xs = (idx % spec.Lx).astype(np.float64)
        ys = (idx // spec.Lx).astype(np.float64)
        names = list(ObservableSeries.ORDER_NAMES)
        momenta = [ORDER_MOMENTA[name] for name in names]
        selectors = [np.ones(spec.n_sites)] * len(names)
        norms = [float(spec.n_sites)] * len(names)
        if spec.boundary is Boundary.OBC:
            sel = np.zeros(spec.n_sites)
            sel[boundary_sites(spec)] = 1.0
            names.append("boundary")
            momenta.append((math.pi, math.pi))
            selectors.append(sel)
            norms.append(float(int(sel.sum())))
        n_orders = len(names)
        cos_a = np.zeros((n_orders, spec.n_sites))
        sin_a = np.zeros((n_orders, spec.n_sites))
        cos_b = np.zeros((n_orders, spec.n_sites))
        sin_b = np.zeros((n_orders, spec.n_sites))
        for o, ((kx, ky), sel) in enumerate(zip(momenta, selectors)):
            cos_a[o] = sel * np.cos(kx * xs + ky * ys)
            sin_a[o] = sel * np.sin(kx * xs + ky * ys)
            cos_b[o] = sel * np.cos(ky * xs + kx * ys)
            sin_b[o] = sel * np.sin(ky * xs + kx * ys)
        self._phases = (names, cos_a, sin_a, cos_b, sin_b, np.array(norms))

    def measure(self, n_slices: int) -> dict[str, float]:
        if self._phases is None:
            self._build_phases()
        names, cos_a, sin_a, cos_b, sin_b, norms = self._phases
        out = np.zeros((len(names), 3))
        _kernels.measure_kernel(
            self.beta, self.spin0, self.kinks, self.kcnt, n_slices,
            cos_a, sin_a, cos_b, sin_b, norms, self._occ, out,
        )
        sample: dict[str, float] = {}
        for o, name in enumerate(names):
            key = "F_boundary" if name == "boundary" else f"F_{name}"
            sample[key] = out[o, 0]
            sample[key.replace("F_", "F2_", 1)] = out[o, 1]
            sample[key.replace("F_", "F4_", 1)] = out[o, 2]
        n_a = self.spec.n_sites
        sample["density"] = _kernels.occupied_time_total(self.beta, self.spin0, self.kinks, self.kcnt) / (
            n_a * self.beta
        )
        sample["diag_energy"] = self.diagonal_action() / self.beta
        sample["kink_count"] = float(_kernels.total_kinks(self.kcnt))
        return sample

    def diagonal_action(self) -> float:
        pairs = self.table.pairs
        pi = np.array([p[0] for p in pairs], dtype=np.int64)
        pj = np.array([p[1] for p in pairs], dtype=np.int64)
        pv = np.array([p[2] for p in pairs], dtype=np.float64)
        return _kernels.diagonal_action_kernel(
            self.beta, self.delta, self.spin0, self.kinks, self.kcnt, pi, pj, pv
        )

    def snapshot(self, tau: float) -> np.ndarray:
        _kernels.occupations_at(tau, self.spin0, self.kinks, self.kcnt, self._occ)
        return self._occ.astype(np.int8)


# -- spec-level operations on plain Configurations ---------------------------------


def site_update(
    config: Configuration,
    i: int,
    table: InteractionTable,
    delta: float,
    rng: ChainRng,
    flip_rule: str = "heatbath",
) -> Worldline:
    """Single continuous-time cluster update of site i; mutates and returns its line."""
    config.spec._check_index(i)
    state = _ChainState.from_configuration(config, rng)
    state.set_couplings(table, delta, flip_rule)
    state.site_update(i)
    config.lines[i] = Worldline(int(state.spin0[i]), state.kinks[i, : state.kcnt[i]].copy())
    return config.lines[i]


def sweep(
    config: Configuration,
    table: InteractionTable,
    delta: float,
    rng: ChainRng,
    flip_rule: str = "heatbath",
) -> Configuration:
    """site_update once per site, in a fresh uniform random order; mutates config."""
    state = _ChainState.from_configuration(config, rng)
    state.set_couplings(table, delta, flip_rule)
    state.sweep()
    updated = state.to_configuration()
    config.lines[:] = updated.lines
    return config


# -- full runs ----------------------------------------------------------------------


def _build_table(spec: LatticeSpec, params: QmcParams, overrides: dict | None = None) -> tuple[InteractionTable, float]:
    p = dict(Rb=params.Rb, delta=params.delta, R0=params.R0)
    if overrides:
        p.update(overrides)
    table = build_interactions(spec, p["Rb"], p["R0"], allow_half_cutoff=params.allow_half_cutoff)
    return table, p["delta"]


def run(
    spec: LatticeSpec,
    params: QmcParams,
    schedule: Schedule | None = None,
    hooks=None,
    initial_config: Configuration | None = None,
    rng_state=None,
    start_measurement_sweep: int = 0,
    checkpoint_cb=None,
    checkpoint_every: int = 0,
) -> tuple[ObservableSeries, Configuration]:
    """Execute schedule stages, thermalization, then the measurement loop.

    Fully deterministic given params.rng_seed.  ``hooks`` are callables
    invoked as hook(sweep_index, sample) at every measurement.  Resuming
    from a checkpoint passes initial_config + rng_state +
    start_measurement_sweep; the remaining samples are bit-identical to an
    uninterrupted run.
    """
    rng = ChainRng(seed=params.rng_seed) if rng_state is None else ChainRng(state=rng_state)
    resuming = start_measurement_sweep > 0

    if initial_config is not None:
        if initial_config.spec != spec:
            raise ValueError("initial configuration was built for a different lattice")
        if not math.isclose(initial_config.beta, params.beta, rel_tol=1e-12):
            raise ValueError(
                f"initial configuration has beta={initial_config.beta}, params give {params.beta}"
            )
        state = _ChainState.from_configuration(initial_config, rng)
    else:
        if params.initial_state in (InitialState.FROM_CHECKPOINT, InitialState.FROM_SEED_PHASE):
            raise ValueError(f"initial_state {params.initial_state.value} requires initial_config")
        state = _ChainState(spec, params.beta, rng)
        if params.initial_state is InitialState.RANDOM_PRODUCT:
            state.init_random_product()
        else:
            state.init_all_ground()

    if not resuming:
        if schedule is not None:
            for overrides, sweeps in schedule.stages:
                table, delta = _build_table(spec, params, overrides)
                state.set_couplings(table, delta, params.flip_rule)
                for _ in range(sweeps):
                    state.sweep()
        table, delta = _build_table(spec, params)
        state.set_couplings(table, delta, params.flip_rule)
        for _ in range(params.thermalization_sweeps):
            state.sweep()
    else:
        table, delta = _build_table(spec, params)
        state.set_couplings(table, delta, params.flip_rule)

    sweep_indices = []
    columns: dict[str, list[float]] = {}
    for s in range(start_measurement_sweep + 1, params.measurement_sweeps + 1):
        state.sweep()
        if s % params.measure_every == 0:
            sample = state.measure(params.n_slices)
            sweep_indices.append(s)
            for key, value in sample.items():
                columns.setdefault(key, []).append(value)
            if hooks:
                for hook in hooks:
                    hook(s, sample)
        if checkpoint_cb and checkpoint_every and s % checkpoint_every == 0:
            checkpoint_cb(s, state.to_configuration(), rng.state_tuple())

    config = state.to_configuration()
    if checkpoint_cb:
        checkpoint_cb(params.measurement_sweeps, config, rng.state_tuple())
    series = ObservableSeries(
        spec=spec,
        params=params.as_dict(),
        seed=params.rng_seed,
        sweep_indices=np.array(sweep_indices, dtype=np.int64),
        columns={k: np.array(v) for k, v in columns.items()},
    )
    return series, config


def seeded_run(
    spec: LatticeSpec,
    seed_params: QmcParams,
    target_params: QmcParams,
    schedule: Schedule | None = None,
    initial_config: Configuration | None = None,
) -> ObservableSeries:
    """Phase-seeded run: equilibrate deep in one phase, then slide the couplings.

    Stage 1 equilibrates at seed_params (its thermalization_sweeps); stage 2
    switches the couplings to target_params, rebuilding the interaction
    table but keeping the worldline configuration; stage 3 thermalizes and
    measures at target_params.  Extra pre-stages may be supplied via
    ``schedule``.  For orders that local updates cannot reach from a cold
    start at desk scale (the star), pass the prepared deep-phase
    configuration (e.g. the ideal product pattern) as ``initial_config``.
    """
    if seed_params.T != target_params.T:
        raise ValueError("seed and target runs must share the temperature")
    if seed_params.R0 != target_params.R0:
        raise ValueError("seed and target runs must share the interaction cutoff R0")
    stages = list(schedule.stages) if schedule is not None else []
    stages.append(
        ({"Rb": seed_params.Rb, "delta": seed_params.delta}, seed_params.thermalization_sweeps)
    )
    series, _ = run(spec, target_params, schedule=Schedule(stages), initial_config=initial_config)
    return series


def kink_density(series: ObservableSeries) -> float:
    """Mean kink count per site per beta, an off-diagonal-energy estimator:
    <H_offdiag> = -(mean kink count)/beta."""
    beta = 1.0 / series.params["T"]
    return float(series.column("kink_count").mean()) / (series.spec.n_sites * beta)
