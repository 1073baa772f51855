"""Mean-field Landau analysis of the coupled order-parameter fields.

Two effective potentials are handled (gradient terms dropped, homogeneous
saddle point):

  * the three-real-field theory of the checkerboard/striated sector,

        V = r (P1 + P2) + s Q + g P1f P2f Phi + u1 (P1 + P2)^2 + u2 Q^2
            + v P1 P2 + w Q (P1 + P2),

    with P_i = Psi_i^2 and Q = Phi^2 -- the cubic coupling g ties the
    (pi,0)/(0,pi) fields to the (pi,pi) one, so condensing any two forces
    the third;

  * the two-complex-field quartic theory of the star sector,

        V = r (|Psi1|^2 + |Psi2|^2) + sum_i [ z1 |Psi_i|^4
            + z3 (Psi_i^4 + c.c.) ] + z2 |Psi1|^2 |Psi2|^2.

Global minima are located by damped-Newton descent from a deterministic
star of starting points (origin, axes, diagonals, seeded random batch);
phases are labeled from the condensed fields.  Closed forms for the
second-order checkerboard/striated boundary and the two tricritical points
are evaluated directly, and printed symmetry representations can be checked
against either potential to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.optimize
from numba import njit

EPS_COND = 1e-4  # condensation threshold on |field|
J_MIN = 0.05  # first-order jump threshold on the field-vector norm

DISORDERED, CHECKERBOARD, STRIATED = 0, 1, 2
PHASE_NAMES = {DISORDERED: "disordered", CHECKERBOARD: "checkerboard", STRIATED: "striated"}


class UnboundedPotentialError(ValueError):
    pass


@dataclass(frozen=True)
class LgwCouplings:
    r: float
    s: float
    g: float
    u1: float
    u2: float
    v: float
    w: float


@dataclass(frozen=True)
class FieldPoint:
    psi1: float
    psi2: float
    phi: float

    def as_array(self) -> np.ndarray:
        return np.array([self.psi1, self.psi2, self.phi])


@dataclass(frozen=True)
class StarCouplings:
    r: float
    z1: float
    z2: float
    z3: float

    def stable(self) -> bool:
        return self.z1 - 2 * abs(self.z3) > 0 and 2 * self.z1 + self.z2 - 4 * abs(self.z3) > 0


@dataclass(frozen=True)
class StarFieldPoint:
    psi1: complex
    psi2: complex


def potential(c: LgwCouplings, f: FieldPoint) -> float:
    """The three-field quartic potential at one field point."""
    return float(_value(c.r, c.s, c.g, c.u1, c.u2, c.v, c.w, f.psi1, f.psi2, f.phi))


def potential_star(c: StarCouplings, f: StarFieldPoint) -> float:
    """The star-sector quartic potential of two complex fields."""
    a1 = abs(f.psi1) ** 2
    a2 = abs(f.psi2) ** 2
    quartic = c.z1 * (a1**2 + a2**2) + c.z3 * (
        (f.psi1**4 + np.conj(f.psi1) ** 4).real + (f.psi2**4 + np.conj(f.psi2) ** 4).real
    )
    return float(c.r * (a1 + a2) + quartic + c.z2 * a1 * a2)


# -- bounded-below check (exact, no numerics) --------------------------------------


def is_bounded(c: LgwCouplings) -> bool:
    """Whether the quartic form dominates at infinity in every direction.

    With a = Psi1^2 + Psi2^2 and f = Phi^2, the quartic part is bounded by
    ubar a^2 + w a f + u2 f^2 where ubar = u1 + min(v, 0)/4 (the worst split
    of a between the two Psi components).  Copositivity of that 2x2 form on
    the nonnegative orthant requires ubar > 0, u2 > 0, and w >= 0 or
    w^2 < 4 ubar u2.
    """
    ubar = c.u1 + min(c.v, 0.0) / 4.0
    if ubar <= 0 or c.u2 <= 0:
        return False
    return c.w >= 0 or c.w * c.w < 4.0 * ubar * c.u2


# -- numba minimizer ----------------------------------------------------------------


@njit(cache=True, inline="always")
def _value(r, s, g, u1, u2, v, w, f1, f2, ph):
    p1 = f1 * f1
    p2 = f2 * f2
    q = ph * ph
    return (
        r * (p1 + p2)
        + s * q
        + g * f1 * f2 * ph
        + u1 * (p1 + p2) ** 2
        + u2 * q * q
        + v * p1 * p2
        + w * q * (p1 + p2)
    )


@njit(cache=True, inline="always")
def _grad(r, s, g, u1, u2, v, w, f1, f2, ph):
    p1 = f1 * f1
    p2 = f2 * f2
    q = ph * ph
    g1 = 2.0 * r * f1 + g * f2 * ph + 4.0 * u1 * (p1 + p2) * f1 + 2.0 * v * f1 * p2 + 2.0 * w * q * f1
    g2 = 2.0 * r * f2 + g * f1 * ph + 4.0 * u1 * (p1 + p2) * f2 + 2.0 * v * f2 * p1 + 2.0 * w * q * f2
    g3 = 2.0 * s * ph + g * f1 * f2 + 4.0 * u2 * q * ph + 2.0 * w * ph * (p1 + p2)
    return g1, g2, g3


@njit(cache=True)
def _minimize_from(r, s, g, u1, u2, v, w, x, y, z):
    """Damped Newton descent with gradient-step fallback; returns (x, y, z, V)."""
    lam = 1e-4
    val = _value(r, s, g, u1, u2, v, w, x, y, z)
    for _ in range(400):
        g1, g2, g3 = _grad(r, s, g, u1, u2, v, w, x, y, z)
        gn = math.sqrt(g1 * g1 + g2 * g2 + g3 * g3)
        if gn < 1e-11:
            break
        p1 = x * x
        p2 = y * y
        q = z * z
        h11 = 2.0 * r + 4.0 * u1 * (3.0 * p1 + p2) + 2.0 * v * p2 + 2.0 * w * q
        h22 = 2.0 * r + 4.0 * u1 * (p1 + 3.0 * p2) + 2.0 * v * p1 + 2.0 * w * q
        h33 = 2.0 * s + 12.0 * u2 * q + 2.0 * w * (p1 + p2)
        h12 = 8.0 * u1 * x * y + 2.0 * v * x * y + g * z
        h13 = g * y + 4.0 * w * x * z
        h23 = g * x + 4.0 * w * y * z
        moved = False
        for _trial in range(60):
            a11 = h11 + lam
            a22 = h22 + lam
            a33 = h33 + lam
            det = (
                a11 * (a22 * a33 - h23 * h23)
                - h12 * (h12 * a33 - h23 * h13)
                + h13 * (h12 * h23 - a22 * h13)
            )
            if abs(det) > 1e-300:
                # Cramer's rule for (H + lam I) d = -grad
                b1, b2, b3 = -g1, -g2, -g3
                d1 = (
                    b1 * (a22 * a33 - h23 * h23)
                    - h12 * (b2 * a33 - h23 * b3)
                    + h13 * (b2 * h23 - a22 * b3)
                ) / det
                d2 = (
                    a11 * (b2 * a33 - b3 * h23)
                    - b1 * (h12 * a33 - h23 * h13)
                    + h13 * (h12 * b3 - b2 * h13)
                ) / det
                d3 = (
                    a11 * (a22 * b3 - h23 * b2)
                    - h12 * (h12 * b3 - b2 * h13)
                    + b1 * (h12 * h23 - a22 * h13)
                ) / det
                xn = x + d1
                yn = y + d2
                zn = z + d3
                vn = _value(r, s, g, u1, u2, v, w, xn, yn, zn)
                if vn <= val:
                    x, y, z, val = xn, yn, zn, vn
                    lam = max(lam / 3.0, 1e-12)
                    moved = True
                    break
            lam *= 10.0
        if not moved:
            # plain gradient step with backtracking
            step = 1.0 / (1.0 + gn)
            for _bt in range(60):
                xn = x - step * g1
                yn = y - step * g2
                zn = z - step * g3
                vn = _value(r, s, g, u1, u2, v, w, xn, yn, zn)
                if vn < val:
                    x, y, z, val = xn, yn, zn, vn
                    moved = True
                    break
                step *= 0.5
            if not moved:
                break
    return x, y, z, val


@njit(cache=True)
def _minimize_multi(r, s, g, u1, u2, v, w, starts):
    best_v = 1e300
    bx = 0.0
    by = 0.0
    bz = 0.0
    for k in range(starts.shape[0]):
        x, y, z, val = _minimize_from(r, s, g, u1, u2, v, w, starts[k, 0], starts[k, 1], starts[k, 2])
        if val < best_v:
            best_v = val
            bx, by, bz = x, y, z
    return bx, by, bz, best_v


@njit(cache=True)
def _phase_map_kernel(r_values, s_values, g, u1, u2, v, w, starts, fields, potentials):
    for a in range(r_values.shape[0]):
        for b in range(s_values.shape[0]):
            x, y, z, val = _minimize_multi(r_values[a], s_values[b], g, u1, u2, v, w, starts)
            fields[a, b, 0] = x
            fields[a, b, 1] = y
            fields[a, b, 2] = z
            potentials[a, b] = val


def _default_starts(n_random: int = 64, seed: int = 20,
                    scale: float = 1.0) -> np.ndarray:
    axes = [
        (0.0, 0.0, 0.0),
        (1.0, 0.0, 0.0), (-1.0, 0.0, 0.0),
        (0.0, 1.0, 0.0), (0.0, -1.0, 0.0),
        (0.0, 0.0, 1.0), (0.0, 0.0, -1.0),
        (1.0, 1.0, 0.0), (1.0, -1.0, 0.0),
        (1.0, 0.0, 1.0), (0.0, 1.0, 1.0),
        (1.0, 1.0, 1.0), (1.0, 1.0, -1.0),
        (-1.0, -1.0, 1.0), (0.5, 0.5, 0.5),
        (2.0, 2.0, 2.0),
    ]
    det = np.array(axes) * scale
    rng = np.random.default_rng(seed)
    rand = rng.uniform(-2.0, 2.0, size=(n_random, 3)) * scale
    return np.vstack([det, rand])


_STARTS = _default_starts()


def minimize(c: LgwCouplings) -> tuple[FieldPoint, float, str]:
    """Global minimum of the three-field potential by multi-start descent.

    Returns (minimizer, value, phase label).  Labels: disordered if nothing
    condenses, checkerboard if only Phi does, striated once the Psi pair
    condenses (the cubic term then forces Phi along).
    """
    if not is_bounded(c):
        raise UnboundedPotentialError(
            f"quartic form not bounded below for couplings {c}; refusing to minimize"
        )
    x, y, z, val = _minimize_multi(c.r, c.s, c.g, c.u1, c.u2, c.v, c.w, _STARTS)
    f = FieldPoint(float(x), float(y), float(z))
    return f, float(val), PHASE_NAMES[classify(f)]


def classify(f: FieldPoint, eps: float = EPS_COND) -> int:
    psi = max(abs(f.psi1), abs(f.psi2))
    if psi >= eps:
        return STRIATED
    if abs(f.phi) >= eps:
        return CHECKERBOARD
    return DISORDERED


def second_order_line(c: LgwCouplings, s: float) -> float:
    """The continuous checkerboard-striated boundary r(s), valid for s < 0."""
    if s >= 0:
        raise ValueError(f"the closed-form boundary needs s < 0, got s={s}")
    return 0.5 * (-c.g * math.sqrt(-s / (2.0 * c.u2)) + s * c.w / c.u2)


def _t2_equation(c: LgwCouplings, s: float) -> float:
    return (
        c.g**2 / s
        - 4.0 * c.g * c.w * math.sqrt(2.0 / (-s * c.u2))
        + 8.0 * (4.0 * c.u1 + c.v - c.w**2 / c.u2)
    )


def tricritical_points(
    c: LgwCouplings, s_scan: tuple[float, float] = (-50.0, -1e-12), n_scan: int = 2000
) -> tuple[tuple[float, float], tuple[float, float]]:
    """The endpoints of the first-order segment, ((r1, s1), (r2, s2)).

    The first is the closed form (0, g^2 / (16 u1 + 4 v)); the second comes
    from a bracketed root solve of the quartic-coefficient-vanishing
    condition on s < 0, with r from the second-order line.
    """
    if c.g == 0:
        raise ValueError("tricritical points require a nonzero cubic coupling g")
    denom = 16.0 * c.u1 + 4.0 * c.v
    if denom == 0:
        raise ValueError("16 u1 + 4 v = 0: the first tricritical point is not defined")
    t1 = (0.0, c.g**2 / denom)

    lo, hi = s_scan
    ss = -np.geomspace(-lo, -hi, n_scan)  # from most negative towards 0-
    vals = np.array([_t2_equation(c, s) for s in ss])
    bracket = None
    for k in range(len(ss) - 1):
        if np.sign(vals[k]) != np.sign(vals[k + 1]) and np.isfinite(vals[k]) and np.isfinite(vals[k + 1]):
            bracket = (ss[k], ss[k + 1])
            break
    if bracket is None:
        raise ValueError(
            f"no sign change of the tricritical condition on s in [{lo}, {hi}] "
            f"(endpoint values {vals[0]:.3g}, {vals[-1]:.3g})"
        )
    s2 = scipy.optimize.brentq(lambda s: _t2_equation(c, s), bracket[0], bracket[1], xtol=1e-14, rtol=1e-15)
    r2 = second_order_line(c, s2)
    return t1, (r2, s2)


# -- phase diagram -------------------------------------------------------------------


@dataclass
class PhaseDiagram:
    """Per-cell global minima over an (r, s) grid, with boundary classification."""

    r_values: np.ndarray
    s_values: np.ndarray
    labels: np.ndarray  # (nr, ns) int8
    fields: np.ndarray  # (nr, ns, 3)
    potentials: np.ndarray  # (nr, ns)
    couplings: LgwCouplings
    j_min: float = J_MIN

    def boundary_edges(self) -> list[dict]:
        """Edges between unlike-labeled adjacent cells.

        Each edge records the two labels, the jump of the field-vector norm,
        the first-order flag (jump > j_min), and the midpoint in (r, s).
        """
        norms = np.linalg.norm(self.fields, axis=2)
        edges = []
        nr, ns = self.labels.shape
        for a in range(nr):
            for b in range(ns):
                for da, db in ((1, 0), (0, 1)):
                    a2, b2 = a + da, b + db
                    if a2 >= nr or b2 >= ns:
                        continue
                    if self.labels[a, b] == self.labels[a2, b2]:
                        continue
                    jump = abs(norms[a, b] - norms[a2, b2])
                    edges.append(
                        {
                            "cells": ((a, b), (a2, b2)),
                            "labels": (int(self.labels[a, b]), int(self.labels[a2, b2])),
                            "jump": float(jump),
                            "first_order": bool(jump > self.j_min),
                            "r": 0.5 * (self.r_values[a] + self.r_values[a2]),
                            "s": 0.5 * (self.s_values[b] + self.s_values[b2]),
                        }
                    )
        return edges

    def boundary_points(self, label_a: int, label_b: int) -> list[dict]:
        pair = {label_a, label_b}
        return [e for e in self.boundary_edges() if set(e["labels"]) == pair]

    def first_order_connected(self, p1: tuple[float, float], p2: tuple[float, float], radius: float) -> bool:
        """Whether a contiguous chain of first-order edges joins the two points.

        Edges are chained when their midpoints are within two grid spacings;
        the chain must start within ``radius`` of p1 and reach within
        ``radius`` of p2.
        """
        pts = np.array([(e["r"], e["s"]) for e in self.boundary_edges() if e["first_order"]])
        if len(pts) == 0:
            return False
        dr = np.diff(self.r_values).max() if len(self.r_values) > 1 else 0.0
        ds = np.diff(self.s_values).max() if len(self.s_values) > 1 else 0.0
        link = 2.05 * max(dr, ds)
        start = np.flatnonzero(np.hypot(pts[:, 0] - p1[0], pts[:, 1] - p1[1]) <= radius)
        goal = set(np.flatnonzero(np.hypot(pts[:, 0] - p2[0], pts[:, 1] - p2[1]) <= radius))
        if len(start) == 0 or not goal:
            return False
        seen = set(start.tolist())
        frontier = list(start)
        while frontier:
            k = frontier.pop()
            if k in goal:
                return True
            d = np.hypot(pts[:, 0] - pts[k, 0], pts[:, 1] - pts[k, 1])
            for m in np.flatnonzero(d <= link):
                if m not in seen:
                    seen.add(int(m))
                    frontier.append(int(m))
        return bool(seen & goal)


def phase_diagram(
    c: LgwCouplings,
    r_range: tuple[float, float],
    s_range: tuple[float, float],
    grid: int | tuple[int, int],
    j_min: float = J_MIN,
) -> PhaseDiagram:
    """Minimize on every cell of an (r, s) grid and label the phases.

    The r and s of ``c`` are ignored; the grid supplies them.
    """
    nr, ns = (grid, grid) if isinstance(grid, int) else grid
    r_values = np.linspace(r_range[0], r_range[1], nr)
    s_values = np.linspace(s_range[0], s_range[1], ns)
    if not is_bounded(c):  # boundedness depends only on the quartic couplings
        raise UnboundedPotentialError(f"quartic form not bounded below for couplings {c}")
    fields = np.zeros((nr, ns, 3))
    potentials = np.zeros((nr, ns))
    _phase_map_kernel(r_values, s_values, c.g, c.u1, c.u2, c.v, c.w, _STARTS, fields, potentials)
    psi = np.maximum(np.abs(fields[:, :, 0]), np.abs(fields[:, :, 1]))
    phi = np.abs(fields[:, :, 2])
    labels = np.where(psi >= EPS_COND, STRIATED, np.where(phi >= EPS_COND, CHECKERBOARD, DISORDERED))
    return PhaseDiagram(
        r_values=r_values,
        s_values=s_values,
        labels=labels.astype(np.int8),
        fields=fields,
        potentials=potentials,
        couplings=c,
        j_min=j_min,
    )


# -- star sector ---------------------------------------------------------------------


def tetragonal_map(z1: float, z2: float, z3: float) -> tuple[float, float, float]:
    """Map the star-theory couplings onto the tetragonal (u0, v0, w0) set."""
    return 12.0 * z2, 12.0 * (2.0 * z1 - z2 - 12.0 * z3), 192.0 * z3


def stability_predicates(u0: float, v0: float, w0: float, N: int) -> dict[str, bool]:
    """Printed inequality sets for the coupled-field theories.

    striated_stability: the two positivity conditions of the N-component
    quartic theory; striated_condense: both Psi components condense;
    star_region: the tetragonal stability-and-condensation wedge.
    """
    if N < 1:
        raise ValueError(f"need N >= 1 components, got {N}")
    striated_stability = (u0 + v0 > 0) and (N * u0 + v0 > 0)
    striated_condense = v0 > 0
    if w0 >= 0:
        star_region = u0 > 0 and -(u0 + v0) < w0 / 2.0 < -v0
    else:
        star_region = u0 > 0 and -(u0 + v0) < w0 < -v0
    return {
        "striated_stability": striated_stability,
        "striated_condense": striated_condense,
        "star_region": star_region,
    }


# -- symmetry representations ---------------------------------------------------------


def striated_generators() -> dict[str, np.ndarray]:
    """Matrix generators on (Psi1, Psi2, Phi): translations flip the paired
    signs, reflections act trivially, the fourfold rotation swaps the pair."""
    return {
        "Tx": np.diag([-1.0, 1.0, -1.0]),
        "Ty": np.diag([1.0, -1.0, -1.0]),
        "Rx": np.eye(3),
        "Ry": np.eye(3),
        "C4": np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]]),
    }


def star_generators() -> dict[str, np.ndarray]:
    """Generators on (Psi1, Psi2, Psi1*, Psi2*) for the star sector."""
    i = 1j
    tx = np.diag([i, -1.0, -i, -1.0])
    ty = np.diag([-1.0, i, -1.0, -i])
    rx = np.array(
        [[1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0]], dtype=complex
    )
    ry = np.array(
        [[0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1]], dtype=complex
    )
    c4 = np.array(
        [[0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 1, 0]], dtype=complex
    )
    return {"Tx": tx, "Ty": ty, "Rx": rx, "Ry": ry, "C4": c4}


def symmetry_check(
    functional,
    representation: dict[str, np.ndarray],
    trials: int = 100,
    seed: int = 7,
    complex_fields: bool = False,
    max_word: int = 3,
) -> float:
    """Max |V(O f) - V(f)| over random field points and all generator words
    of length <= max_word.  ``functional`` maps a field vector to a float.
    """
    mats = list(representation.values())
    dim = mats[0].shape[0]
    for m in mats:
        if m.shape != (dim, dim):
            raise ValueError(f"representation matrices must all be {dim} x {dim}")
    # words breadth-first: generators, then pairs, then triples
    dtype = complex if complex_fields else float
    words = [np.eye(dim, dtype=dtype)]
    frontier = [np.asarray(m, dtype=dtype) for m in mats]
    for _ in range(max_word):
        words.extend(frontier)
        frontier = [f @ np.asarray(m, dtype=dtype) for f in frontier for m in mats]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        if complex_fields:
            half = dim // 2
            psi = rng.normal(size=half) + 1j * rng.normal(size=half)
            f = np.concatenate([psi, np.conj(psi)])
        else:
            f = rng.normal(size=dim)
        v0 = functional(f)
        for o in words[1:]:
            worst = max(worst, abs(functional(o @ f) - v0))
    return float(worst)


def striated_potential_fn(c: LgwCouplings):
    """Adapter: field 3-vector -> potential value (for symmetry_check)."""

    def fn(f):
        return potential(c, FieldPoint(float(f[0]), float(f[1]), float(f[2])))

    return fn


def star_potential_fn(c: StarCouplings):
    """Adapter: (Psi1, Psi2, Psi1*, Psi2*) vector -> potential value."""

    def fn(f):
        return potential_star(c, StarFieldPoint(complex(f[0]), complex(f[1])))

    return fn
