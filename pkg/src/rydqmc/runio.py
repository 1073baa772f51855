"""Run configuration files, checkpoints, and series serialization.

Configs are a single JSON document (round-trippable: parse -> serialize ->
parse is the identity on the normalized form); unknown keys anywhere are
rejected so typos fail before a chain starts.  Checkpoints are JSON too,
with a schema version, the config echo, the generator state, and the full
worldline configuration; Python's repr-based float serialization makes the
round trip bit-exact.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import dataclass, field

import numpy as np

from rydqmc.engine import InitialState, QmcParams, Schedule
from rydqmc.lattice import Boundary, LatticeSpec, build_interactions
from rydqmc.observables import ObservableSeries, binned_error
from rydqmc.worldline import Configuration, Worldline

CHECKPOINT_VERSION = 1

SWEEPABLE = ("delta", "Rb", "L", "T")


class CheckpointVersionError(RuntimeError):
    pass


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, allowed: set, required: set, where: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")
    missing = required - set(section)
    if missing:
        raise ConfigError(f"missing keys in {where}: {sorted(missing)}")


@dataclass
class RunConfig:
    """Validated run description; see README for the documented schema."""

    lattice: dict
    physics: dict
    engine: dict
    output: dict
    analysis: dict = field(default_factory=dict)
    sweep: list = field(default_factory=list)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        _require_keys(
            raw,
            {"lattice", "physics", "engine", "output", "analysis", "sweep"},
            {"lattice", "physics", "engine", "output"},
            "config",
        )
        lattice = dict(raw["lattice"])
        _require_keys(lattice, {"Lx", "Ly", "boundary"}, {"Lx", "Ly", "boundary"}, "lattice")
        physics = dict(raw["physics"])
        _require_keys(
            physics, {"Rb", "delta", "R0", "T", "T_rule"}, {"Rb", "delta", "R0"}, "physics"
        )
        if ("T" in physics) == ("T_rule" in physics):
            raise ConfigError("physics must set exactly one of T or T_rule")
        if "T_rule" in physics:
            _require_keys(dict(physics["T_rule"]), {"c"}, {"c"}, "physics.T_rule")
        engine = dict(raw["engine"])
        _require_keys(
            engine,
            {
                "thermalization_sweeps",
                "measurement_sweeps",
                "measure_every",
                "seeds",
                "initial_state",
                "n_slices",
                "allow_half_cutoff",
                "checkpoint_every",
                "schedule",
                "flip_rule",
            },
            {"thermalization_sweeps", "measurement_sweeps", "seeds"},
            "engine",
        )
        if not isinstance(engine["seeds"], list) or not engine["seeds"]:
            raise ConfigError("engine.seeds must be a non-empty list of integers")
        output = dict(raw["output"])
        _require_keys(output, {"directory", "formats"}, {"directory"}, "output")
        analysis = dict(raw.get("analysis", {}))
        _require_keys(
            analysis, {"histogram_bins", "dip_threshold", "binder_bins"}, set(), "analysis"
        )
        sweep = list(raw.get("sweep", []))
        if len(sweep) > 2:
            raise ConfigError("at most two sweep axes are supported")
        for ax in sweep:
            _require_keys(dict(ax), {"param", "values"}, {"param", "values"}, "sweep axis")
            if ax["param"] not in SWEEPABLE:
                raise ConfigError(f"sweep axis parameter must be one of {SWEEPABLE}")
            if not ax["values"]:
                raise ConfigError("sweep axis has no values")
        cfg = cls(lattice, physics, engine, output, analysis, sweep)
        cfg.spec()  # validate lattice eagerly
        cfg.params(seed=int(engine["seeds"][0]))  # and engine/physics invariants
        return cfg

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        return cls.from_dict(raw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as fh:
            return cls.from_json(fh.read())

    def as_dict(self) -> dict:
        out = {
            "lattice": self.lattice,
            "physics": self.physics,
            "engine": self.engine,
            "output": self.output,
        }
        if self.analysis:
            out["analysis"] = self.analysis
        if self.sweep:
            out["sweep"] = self.sweep
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    # -- materialization ----------------------------------------------------------

    def spec(self, overrides: dict | None = None) -> LatticeSpec:
        lat = dict(self.lattice)
        if overrides and "L" in overrides:
            lat["Lx"] = lat["Ly"] = int(overrides["L"])
        return LatticeSpec(Lx=int(lat["Lx"]), Ly=int(lat["Ly"]), boundary=Boundary(lat["boundary"]))

    def temperature(self, overrides: dict | None = None) -> float:
        if overrides and "T" in overrides:
            return float(overrides["T"])
        if "T" in self.physics:
            return float(self.physics["T"])
        c = float(self.physics["T_rule"]["c"])
        lat = self.spec(overrides)
        return c / lat.Lx

    def params(self, seed: int, overrides: dict | None = None) -> QmcParams:
        phys = dict(self.physics)
        if overrides:
            phys.update({k: v for k, v in overrides.items() if k in ("Rb", "delta", "R0")})
        eng = self.engine
        return QmcParams(
            Rb=float(phys["Rb"]),
            delta=float(phys["delta"]),
            R0=float(phys["R0"]),
            T=self.temperature(overrides),
            thermalization_sweeps=int(eng["thermalization_sweeps"]),
            measurement_sweeps=int(eng["measurement_sweeps"]),
            measure_every=int(eng.get("measure_every", 1)),
            rng_seed=int(seed),
            initial_state=InitialState(eng.get("initial_state", "AllGround")),
            n_slices=int(eng.get("n_slices", 8)),
            allow_half_cutoff=bool(eng.get("allow_half_cutoff", False)),
            flip_rule=str(eng.get("flip_rule", "heatbath")),
        )

    def schedule(self) -> Schedule | None:
        stages = self.engine.get("schedule")
        if not stages:
            return None
        return Schedule(stages=[(dict(o), int(n)) for o, n in stages])

    def validate_point(self, seed: int, overrides: dict | None = None):
        """Run every module precondition for one grid point before launch."""
        spec = self.spec(overrides)
        params = self.params(seed, overrides)
        build_interactions(spec, params.Rb, params.R0, allow_half_cutoff=params.allow_half_cutoff)

    def points(self) -> list[dict]:
        """Grid points of the sweep axes (one empty dict when no sweep)."""
        if not self.sweep:
            return [{}]
        if len(self.sweep) == 1:
            ax = self.sweep[0]
            return [{ax["param"]: v} for v in ax["values"]]
        ax1, ax2 = self.sweep
        return [
            {ax1["param"]: v1, ax2["param"]: v2} for v1 in ax1["values"] for v2 in ax2["values"]
        ]


def params_hash(params: dict) -> str:
    return hashlib.sha1(json.dumps(params, sort_keys=True).encode()).hexdigest()[:12]


# -- series files -------------------------------------------------------------------


def write_series_jsonl(path, series: ObservableSeries):
    ph = params_hash(series.params)
    with open(path, "w") as fh:
        for rec in series.records():
            rec["seed"] = series.seed
            rec["params_hash"] = ph
            fh.write(json.dumps(rec) + "\n")


def read_series_jsonl(path) -> dict[str, np.ndarray]:
    columns: dict[str, list] = {}
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}: bad JSON record at line {ln}: {exc}") from exc
            for key, value in rec.items():
                columns.setdefault(key, []).append(value)
    return {
        k: (np.array(v) if k != "params_hash" else v) for k, v in columns.items()
    }


SUMMARY_OBSERVABLES = (
    "density",
    "diag_energy",
    "kink_count",
    "F_checkerboard",
    "F2_checkerboard",
    "F_striated",
    "F2_striated",
    "F_star",
    "F2_star",
)


def summarize_series(series: ObservableSeries, binder_bins: int = 20) -> dict:
    """Means, binned errors, and Binder ratios of one sample series."""
    out: dict = {"n_samples": len(series), "seed": series.seed}
    for name in SUMMARY_OBSERVABLES + (("F_boundary", "F2_boundary") if series.has_boundary else ()):
        col = series.columns.get(name)
        if col is None or len(col) == 0:
            continue
        if len(col) >= 16:
            mean, err, tau = binned_error(col)
        else:
            mean = float(np.mean(col))
            err = float(np.std(col, ddof=1) / np.sqrt(len(col))) if len(col) > 1 else 0.0
            tau = 0.5
        out[f"{name}_mean"] = mean
        out[f"{name}_err"] = err
        out[f"{name}_tau"] = tau
    orders = list(ObservableSeries.ORDER_NAMES) + (["boundary"] if series.has_boundary else [])
    for order in orders:
        try:
            u4, u4_err = series.binder_ratio(order, n_bins=binder_bins)
        except (ZeroDivisionError, ValueError):
            continue
        out[f"U4_{order}"] = u4
        out[f"U4_{order}_err"] = u4_err
    return out


def write_summary_csv(path, rows: list[dict]):
    keys: list[str] = []
    for row in rows:
        for key in row:
            if key not in keys:
                keys.append(key)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def write_histogram_csv(path, counts: np.ndarray, edges: np.ndarray):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count"])
        if len(edges) == 2 and len(counts) == 1:  # degenerate single-bin histogram
            writer.writerow([repr(float(edges[0])), repr(float(edges[1])), int(counts[0])])
            return
        for k, n in enumerate(counts):
            writer.writerow([repr(float(edges[k])), repr(float(edges[k + 1])), int(n)])


# -- checkpoints ---------------------------------------------------------------------


def save_checkpoint(
    path,
    run_config: dict,
    params: QmcParams,
    config: Configuration,
    rng_state: tuple[int, int, int, int],
    completed_sweep: int,
):
    doc = {
        "version": CHECKPOINT_VERSION,
        "run_config": run_config,
        "params": params.as_dict(),
        "completed_measurement_sweep": completed_sweep,
        "rng_state": list(rng_state),
        "configuration": {
            "beta": config.beta,
            "Lx": config.spec.Lx,
            "Ly": config.spec.Ly,
            "boundary": config.spec.boundary.value,
            "spin0": [int(line.spin0) for line in config.lines],
            "kinks": [[float(t) for t in line.kinks] for line in config.lines],
        },
    }
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh)
    os.replace(tmp, path)


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint {path} has schema version {version}, this build reads {CHECKPOINT_VERSION}"
        )
    return doc


def configuration_from_checkpoint(doc: dict) -> Configuration:
    conf = doc["configuration"]
    spec = LatticeSpec(Lx=conf["Lx"], Ly=conf["Ly"], boundary=Boundary(conf["boundary"]))
    lines = [
        Worldline(int(s0), np.array(kinks, dtype=np.float64))
        for s0, kinks in zip(conf["spin0"], conf["kinks"])
    ]
    return Configuration(beta=float(conf["beta"]), lines=lines, spec=spec)
