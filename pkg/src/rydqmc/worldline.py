"""Continuous-imaginary-time worldlines and exact interval arithmetic.

A worldline is the piecewise-constant occupation trajectory n_i(tau) of one
site over tau in [0, beta).  It is stored as the occupation at tau = 0 plus
the sorted list of flip times ("kinks").  The trace forces periodicity, so
the kink count is always even.  The value at a kink time is the post-kink
value.  Times are plain doubles; there is no imaginary-time grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rydqmc.lattice import LatticeSpec


@dataclass
class Worldline:
    spin0: int
    kinks: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.float64))

    def __post_init__(self):
        self.kinks = np.asarray(self.kinks, dtype=np.float64)
        if self.spin0 not in (0, 1):
            raise ValueError(f"spin0 must be 0 or 1, got {self.spin0}")
        if len(self.kinks) % 2 != 0:
            raise ValueError("kink count must be even (trace periodicity)")
        if len(self.kinks) > 1 and not np.all(np.diff(self.kinks) > 0):
            raise ValueError("kink times must be strictly increasing")

    def validate(self, beta: float):
        if len(self.kinks) and (self.kinks[0] < 0.0 or self.kinks[-1] >= beta):
            raise ValueError("kink times must lie in [0, beta)")


def occupation_at(line: Worldline, tau: float, beta: float) -> int:
    """Occupation n(tau); the value at a kink time is the post-kink value."""
    if not (0.0 <= tau < beta):
        raise ValueError(f"tau={tau} outside [0, {beta})")
    flips = int(np.searchsorted(line.kinks, tau, side="right"))
    return line.spin0 ^ (flips & 1)


def overlap_integral(line_i: Worldline, line_j: Worldline, a: float, b: float, beta: float) -> float:
    """Total length of {tau in [a, b) : n_i(tau) = n_j(tau) = 1}.

    Exact piecewise-constant interval arithmetic; the caller splits windows
    that wrap around beta.
    """
    if not (0.0 <= a < b <= beta):
        raise ValueError(f"need 0 <= a < b <= beta, got a={a}, b={b}, beta={beta}")
    ki, kj = line_i.kinks, line_j.kinks
    pi = int(np.searchsorted(ki, a, side="right"))
    pj = int(np.searchsorted(kj, a, side="right"))
    occ_i = line_i.spin0 ^ (pi & 1)
    occ_j = line_j.spin0 ^ (pj & 1)
    total = 0.0
    t = a
    while t < b:
        next_i = ki[pi] if pi < len(ki) else b
        next_j = kj[pj] if pj < len(kj) else b
        t_next = min(next_i, next_j, b)
        if occ_i and occ_j:
            total += t_next - t
        if t_next == b:
            break
        # advance past every kink at exactly t_next
        while pi < len(ki) and ki[pi] == t_next:
            occ_i ^= 1
            pi += 1
        while pj < len(kj) and kj[pj] == t_next:
            occ_j ^= 1
            pj += 1
        t = t_next
    return total


def site_integral(line: Worldline, beta: float) -> float:
    """Occupied time of one line over the full circle, int_0^beta n(tau) dtau."""
    if len(line.kinks) == 0:
        return beta * line.spin0
    total = 0.0
    prev = 0.0
    occ = line.spin0
    for t in line.kinks:
        if occ:
            total += t - prev
        prev = t
        occ ^= 1
    if occ:
        total += beta - prev
    return total


@dataclass
class Configuration:
    """One full QMC state: one worldline per lattice site at inverse temperature beta."""

    beta: float
    lines: list[Worldline]
    spec: LatticeSpec

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if len(self.lines) != self.spec.n_sites:
            raise ValueError(
                f"{len(self.lines)} worldlines for {self.spec.n_sites} sites"
            )
        for line in self.lines:
            line.validate(self.beta)

    @classmethod
    def all_ground(cls, spec: LatticeSpec, beta: float) -> "Configuration":
        return cls(beta=beta, lines=[Worldline(0) for _ in range(spec.n_sites)], spec=spec)

    def total_kinks(self) -> int:
        return sum(len(line.kinks) for line in self.lines)


def snapshot(config: Configuration, tau: float) -> np.ndarray:
    """Equal-time occupation vector n_i(tau) over all sites."""
    return np.array(
        [occupation_at(line, tau, config.beta) for line in config.lines], dtype=np.int8
    )


def diagonal_action(config: Configuration, table, delta: float) -> float:
    """From-scratch diagonal action S = int_0^beta [sum_{i<j} V_ij n_i n_j - Delta sum_i n_i] dtau.

    Reference implementation in exact interval arithmetic; the engine tracks
    the same quantity incrementally and cross-checks against this.
    """
    beta = config.beta
    s = 0.0
    for i, j, v in table.pairs:
        s += v * overlap_integral(config.lines[i], config.lines[j], 0.0, beta, beta)
    s -= delta * sum(site_integral(line, beta) for line in config.lines)
    return s
