"""Order parameters, Binder ratios, histograms, and Monte Carlo error analysis.

Order parameters are symmetrized, normalized Fourier amplitudes of the
occupation pattern,

    F(kx, ky) = | [F~(kx, ky) + F~(ky, kx)] / 2 |,
    F~(kx, ky) = (1/N_a) sum_j n_j exp[i (kx * x_j + ky * y_j)],

with (pi, pi) the checkerboard, (0, pi) the striated, and (pi, pi/2) the star
order.  The complex amplitude is symmetrized first, then the magnitude is
taken; for the checkerboard this reduces exactly to the staggered
magnetization modulus.  The boundary order parameter restricts the sum to the
perimeter sites of an OBC lattice and normalizes by their number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from rydqmc.lattice import Boundary, LatticeSpec, boundary_sites

CHECKERBOARD = (math.pi, math.pi)
STRIATED = (0.0, math.pi)
STAR = (math.pi, math.pi / 2)

ORDER_MOMENTA = {"checkerboard": CHECKERBOARD, "striated": STRIATED, "star": STAR}


class InsufficientDataError(ValueError):
    pass


def _ft(snapshot: np.ndarray, xs: np.ndarray, ys: np.ndarray, kx: float, ky: float) -> complex:
    phase = kx * xs + ky * ys
    amp = np.sum(snapshot * np.exp(1j * phase))
    return amp / len(snapshot)


def fourier_order(snapshot: np.ndarray, spec: LatticeSpec, k: tuple[float, float]) -> float:
    """Symmetrized order parameter F(kx, ky) of an equal-time snapshot."""
    snapshot = np.asarray(snapshot, dtype=np.float64)
    if snapshot.shape != (spec.n_sites,):
        raise ValueError(f"snapshot length {snapshot.shape} does not match {spec.n_sites} sites")
    idx = np.arange(spec.n_sites)
    xs = (idx % spec.Lx).astype(np.float64)
    ys = (idx // spec.Lx).astype(np.float64)
    kx, ky = k
    sym = 0.5 * (_ft(snapshot, xs, ys, kx, ky) + _ft(snapshot, xs, ys, ky, kx))
    return abs(sym)


def boundary_order(snapshot: np.ndarray, spec: LatticeSpec) -> float:
    """Boundary order parameter F_B = |F~_B(pi, pi)| over perimeter sites (OBC only)."""
    if spec.boundary is not Boundary.OBC:
        raise ValueError("boundary order parameter requires open boundary conditions")
    snapshot = np.asarray(snapshot, dtype=np.float64)
    sites = np.array(boundary_sites(spec))
    xs = (sites % spec.Lx).astype(np.float64)
    ys = (sites // spec.Lx).astype(np.float64)
    amp = np.sum(snapshot[sites] * np.exp(1j * math.pi * (xs + ys))) / len(sites)
    return abs(amp)


def binder(F_samples, n_bins: int = 20) -> tuple[float, float]:
    """Binder ratio U4 = (3 - <F^4>/<F^2>^2) / 2 with a jackknife-over-bins error.

    Moments are taken over the sample stream as given (magnitudes, so the
    phase is never treated as an order parameter on finite systems).
    """
    f = np.asarray(F_samples, dtype=np.float64)
    if len(f) < 2:
        raise InsufficientDataError("Binder ratio needs at least 2 samples")
    return binder_from_moments(f**2, f**4, n_bins=n_bins)


def binder_from_moments(F2_samples, F4_samples, n_bins: int = 20) -> tuple[float, float]:
    """Binder ratio from per-sample second and fourth moments.

    The engine records slice-averaged F^2 and F^4 per sweep; feeding those in
    here keeps the estimator an equal-time moment ratio, directly comparable
    to the diagonalization oracle.
    """
    f2 = np.asarray(F2_samples, dtype=np.float64)
    f4 = np.asarray(F4_samples, dtype=np.float64)
    if f2.shape != f4.shape or len(f2) < 2:
        raise InsufficientDataError("need matching moment series of length >= 2")
    m2 = f2.mean()
    if m2 == 0.0:
        raise ZeroDivisionError("all-zero F^2 samples: Binder ratio undefined")
    u4 = 0.5 * (3.0 - f4.mean() / m2**2)

    n_bins = min(n_bins, len(f2))
    edges = np.linspace(0, len(f2), n_bins + 1).astype(int)
    s2 = np.array([f2[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    s4 = np.array([f4[a:b].sum() for a, b in zip(edges[:-1], edges[1:])])
    cnt = np.diff(edges).astype(np.float64)
    jks = []
    for k in range(n_bins):
        m2_k = (s2.sum() - s2[k]) / (cnt.sum() - cnt[k])
        m4_k = (s4.sum() - s4[k]) / (cnt.sum() - cnt[k])
        if m2_k == 0.0:
            continue
        jks.append(0.5 * (3.0 - m4_k / m2_k**2))
    jks = np.array(jks)
    if len(jks) < 2:
        return u4, 0.0
    err = math.sqrt((len(jks) - 1) / len(jks) * np.sum((jks - jks.mean()) ** 2))
    return float(u4), float(err)


def density(config) -> float:
    """Mean Rydberg density (1/(N_a beta)) sum_i int n_i(tau) dtau, exact integrals."""
    from rydqmc.worldline import site_integral

    total = sum(site_integral(line, config.beta) for line in config.lines)
    return total / (config.spec.n_sites * config.beta)


def histogram(samples, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-width bins over the sample range -> (counts, edges).

    A degenerate range (all samples equal) collapses to a single bin.
    """
    x = np.asarray(samples, dtype=np.float64)
    if len(x) == 0:
        raise InsufficientDataError("cannot histogram an empty sample set")
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if x.min() == x.max():
        return np.array([len(x)]), np.array([x.min(), x.max()])
    counts, edges = np.histogram(x, bins=n_bins)
    return counts, edges


def bimodality(
    counts: np.ndarray, dip_threshold: float = 0.2, min_peak_frac: float = 0.2
) -> tuple[bool, float]:
    """Double-peak diagnostic on histogram counts.

    Bimodal iff two local maxima exist whose separating minimum drops below
    (1 - dip_threshold) * min(peak heights); dip_score = 1 - valley/min(peaks).
    Only peaks taller than min_peak_frac * max(counts) are considered, so
    shot noise in the tails of a unimodal histogram does not register.  A
    diagnostic, not a proof.
    """
    c = np.asarray(counts, dtype=np.float64)
    if len(c) < 3:
        return False, 0.0
    floor = min_peak_frac * c.max()
    peaks = [
        k
        for k in range(len(c))
        if c[k] >= floor
        and (k == 0 or c[k] > c[k - 1])
        and (k == len(c) - 1 or c[k] >= c[k + 1])
    ]
    best = 0.0
    for a in range(len(peaks)):
        for b in range(a + 1, len(peaks)):
            p, q = peaks[a], peaks[b]
            if q == p + 1:
                continue  # adjacent bins share no separating minimum
            valley = c[p + 1 : q].min()
            lo = min(c[p], c[q])
            if lo > 0:
                best = max(best, 1.0 - valley / lo)
    return best >= dip_threshold, float(best)


def bin_series(series, bin_size: int) -> np.ndarray:
    """Means of consecutive length-``bin_size`` blocks (trailing remainder dropped).

    Block averages sharpen phase-coexistence histograms: within-basin
    fluctuations shrink like 1/sqrt(bin_size) while basin dwell times,
    which are far longer than a block, keep the peaks apart.
    """
    x = np.asarray(series, dtype=np.float64)
    if bin_size < 1:
        raise ValueError("bin_size must be >= 1")
    n = (len(x) // bin_size) * bin_size
    if n == 0:
        raise InsufficientDataError(f"need at least {bin_size} samples, got {len(x)}")
    return x[:n].reshape(-1, bin_size).mean(axis=1)


def binned_error(series, min_bins: int = 8) -> tuple[float, float, float]:
    """(mean, stderr, tau_int) by logarithmic blocking.

    Bins of size 2^l are formed as long as at least ``min_bins`` survive; the
    standard error is the maximum over levels (the plateau for a converged
    blocking), and tau_int = (stderr/stderr_naive)^2 / 2, which is 1/2 for
    uncorrelated samples.
    """
    x = np.asarray(series, dtype=np.float64)
    if len(x) < 16:
        raise InsufficientDataError(f"binned error analysis needs >= 16 samples, got {len(x)}")
    mean = x.mean()
    if np.all(x == x[0]):
        return float(mean), 0.0, 0.5
    errs = []
    b = x.copy()
    while len(b) >= min_bins:
        errs.append(b.std(ddof=1) / math.sqrt(len(b)))
        if len(b) % 2:
            b = b[1:]
        b = 0.5 * (b[::2] + b[1::2])
    naive = errs[0]
    stderr = max(errs)
    tau_int = 0.5 * (stderr / naive) ** 2 if naive > 0 else 0.5
    return float(mean), float(stderr), float(tau_int)


@dataclass
class ObservableSeries:
    """Time-ordered Monte Carlo samples with run metadata.

    Per-sample columns: slice-averaged |F|, F^2, F^4 for each order
    (checkerboard, striated, star, and the boundary order under OBC), the
    exact-integral density, the diagonal energy estimator, and the total kink
    count.  ``sweep_indices`` records when each sample was taken.
    """

    spec: LatticeSpec
    params: dict
    seed: int
    sweep_indices: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))
    columns: dict[str, np.ndarray] = field(default_factory=dict)

    ORDER_NAMES = ("checkerboard", "striated", "star")

    def __len__(self) -> int:
        return len(self.sweep_indices)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]

    @property
    def has_boundary(self) -> bool:
        return "F_boundary" in self.columns

    def binder_ratio(self, order: str = "checkerboard", n_bins: int = 20) -> tuple[float, float]:
        return binder_from_moments(
            self.columns[f"F2_{order}"], self.columns[f"F4_{order}"], n_bins=n_bins
        )

    def records(self):
        """Iterate samples as plain dicts (used by the JSON-lines writer)."""
        names = list(self.columns)
        for k in range(len(self)):
            rec = {"sweep_index": int(self.sweep_indices[k])}
            for name in names:
                rec[name] = float(self.columns[name][k])
            yield rec
