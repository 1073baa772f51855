"""Square-lattice geometry, boundary conditions, and truncated van der Waals couplings.

Sites of an Lx x Ly lattice are indexed i = x + Lx * y with coordinates
(x, y), 0 <= x < Lx, 0 <= y < Ly, lattice spacing a = 1.  Pair couplings are
V_ij = (Rb / d_ij)^6 in units of the Rabi frequency, kept for d_ij <= R0
(Heaviside convention Theta(0) = 1, so d = R0 is included).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction

import numpy as np


class Boundary(Enum):
    PBC = "PBC"
    OBC = "OBC"


@dataclass(frozen=True)
class LatticeSpec:
    """Geometry of the atom array.  spacing is fixed to 1 (units of a)."""

    Lx: int
    Ly: int
    boundary: Boundary = Boundary.PBC
    spacing: float = 1.0

    def __post_init__(self):
        if self.Lx < 2 or self.Ly < 2:
            raise ValueError(f"need Lx, Ly >= 2, got {self.Lx} x {self.Ly}")
        if self.spacing != 1.0:
            raise ValueError("lattice spacing is fixed to 1 (units of a)")
        if not isinstance(self.boundary, Boundary):
            object.__setattr__(self, "boundary", Boundary(self.boundary))

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    def coords(self, i: int) -> tuple[int, int]:
        """Site index -> (x, y)."""
        self._check_index(i)
        return i % self.Lx, i // self.Lx

    def index(self, x: int, y: int) -> int:
        """(x, y) -> site index; coordinates wrap under PBC."""
        if self.boundary is Boundary.PBC:
            x %= self.Lx
            y %= self.Ly
        if not (0 <= x < self.Lx and 0 <= y < self.Ly):
            raise IndexError(f"coordinates ({x}, {y}) outside {self.Lx} x {self.Ly} lattice")
        return x + self.Lx * y

    def _check_index(self, i: int):
        if not (0 <= i < self.n_sites):
            raise IndexError(f"site index {i} outside [0, {self.n_sites})")


def pair_distance_sq(spec: LatticeSpec, i: int, j: int) -> int:
    """Squared distance between two distinct sites, as an exact integer.

    Under PBC the minimum-image convention applies to each axis separately.
    """
    if i == j:
        raise ValueError("pair distance requires two distinct sites")
    xi, yi = spec.coords(i)
    xj, yj = spec.coords(j)
    dx = abs(xi - xj)
    dy = abs(yi - yj)
    if spec.boundary is Boundary.PBC:
        dx = min(dx, spec.Lx - dx)
        dy = min(dy, spec.Ly - dy)
    return dx * dx + dy * dy


def pair_distance(spec: LatticeSpec, i: int, j: int) -> float:
    """Euclidean distance between sites i and j (minimum image under PBC)."""
    return float(np.sqrt(pair_distance_sq(spec, i, j)))


@dataclass
class InteractionTable:
    """Precomputed pair couplings V_ij = Rb^6 / d^6 for all pairs with d <= R0.

    ``pairs`` stores (i, j, V_ij) with i < j, each unordered pair once.
    Immutable after construction; safe to share read-only across chains.
    The CSR-style neighbor arrays (both directions) back the sampling kernel.
    """

    pairs: list[tuple[int, int, float]]
    Rb: float
    R0: float
    n_sites: int
    nbr_ptr: np.ndarray = field(repr=False, default=None)
    nbr_idx: np.ndarray = field(repr=False, default=None)
    nbr_val: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.nbr_ptr is None:
            self._build_csr()

    def _build_csr(self):
        counts = np.zeros(self.n_sites, dtype=np.int64)
        for i, j, _ in self.pairs:
            counts[i] += 1
            counts[j] += 1
        ptr = np.zeros(self.n_sites + 1, dtype=np.int64)
        np.cumsum(counts, out=ptr[1:])
        idx = np.zeros(ptr[-1], dtype=np.int64)
        val = np.zeros(ptr[-1], dtype=np.float64)
        cursor = ptr[:-1].copy()
        for i, j, v in self.pairs:
            idx[cursor[i]] = j
            val[cursor[i]] = v
            cursor[i] += 1
            idx[cursor[j]] = i
            val[cursor[j]] = v
            cursor[j] += 1
        self.nbr_ptr = ptr
        self.nbr_idx = idx
        self.nbr_val = val

    def neighbors(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """(neighbor indices, couplings) of site i."""
        lo, hi = self.nbr_ptr[i], self.nbr_ptr[i + 1]
        return self.nbr_idx[lo:hi], self.nbr_val[lo:hi]

    def coupling(self, i: int, j: int) -> float:
        """V_ij, or 0.0 if the pair is beyond the cutoff."""
        nbrs, vals = self.neighbors(i)
        hit = np.nonzero(nbrs == j)[0]
        return float(vals[hit[0]]) if hit.size else 0.0


def build_interactions(
    spec: LatticeSpec, Rb: float, R0: float, allow_half_cutoff: bool = False
) -> InteractionTable:
    """Enumerate all interacting pairs of the lattice.

    Cutoff membership d <= R0 is decided with exact rational arithmetic on
    the integer squared distance, so it is bit-stable for any float R0.

    Under PBC each unordered pair is counted once with its minimum-image
    distance, which is unambiguous only for L > 2*R0.  L == 2*R0 (the
    production setting L = 8, R0 = 4) is accepted with a warning when
    ``allow_half_cutoff`` is set: pairs at distance exactly L/2 then enter
    once, not twice.
    """
    if Rb <= 0:
        raise ValueError(f"blockade radius must be positive, got Rb={Rb}")
    if R0 <= 0:
        raise ValueError(f"interaction cutoff must be positive, got R0={R0}")
    if spec.boundary is Boundary.PBC:
        for name, L in (("Lx", spec.Lx), ("Ly", spec.Ly)):
            if L < 2 * R0 or (L == 2 * R0 and not allow_half_cutoff):
                raise ValueError(
                    f"PBC with {name}={L} <= 2*R0={2 * R0}: minimum-image pair counting is "
                    "ambiguous; increase L, reduce R0, or pass allow_half_cutoff=True "
                    "to count distance-L/2 image pairs once"
                )
            if L == 2 * R0:
                warnings.warn(
                    f"PBC with {name}={L} == 2*R0: pairs at distance exactly L/2 are "
                    "counted once (single minimum-image copy)",
                    stacklevel=2,
                )

    r0_sq = Fraction(R0) ** 2
    rb6 = Rb**6
    pairs = []
    n = spec.n_sites
    for i in range(n):
        for j in range(i + 1, n):
            d2 = pair_distance_sq(spec, i, j)
            if Fraction(d2) <= r0_sq:
                pairs.append((i, j, rb6 / d2**3))
    return InteractionTable(pairs=pairs, Rb=Rb, R0=R0, n_sites=n)


def boundary_sites(spec: LatticeSpec) -> list[int]:
    """Perimeter sites of an OBC lattice (x in {0, Lx-1} or y in {0, Ly-1})."""
    if spec.boundary is not Boundary.OBC:
        raise ValueError("boundary_sites is only defined for open boundary conditions")
    out = []
    for i in range(spec.n_sites):
        x, y = i % spec.Lx, i // spec.Lx
        if x == 0 or x == spec.Lx - 1 or y == 0 or y == spec.Ly - 1:
            out.append(i)
    return out
