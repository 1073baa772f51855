"""Dense-diagonalization thermal expectations for small systems.

This is the ground truth the Monte Carlo engine is validated against: the
full 2^N spectrum, nothing iterative, nothing truncated.  Basis convention:
site i is bit i of the basis-state integer and n_i is the bit value.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from rydqmc.lattice import InteractionTable, LatticeSpec
from rydqmc.observables import ORDER_MOMENTA

MAX_ORACLE_SITES = 16


def build_hamiltonian(
    spec: LatticeSpec, table: InteractionTable, delta: float, field_sign: float = -1.0
) -> np.ndarray:
    """Dense H = sum_{i<j} V_ij n_i n_j - Delta sum_i n_i + field_sign * (1/2) sum_i sigma^x_i.

    field_sign = -1 is the worldline-weight convention used by the engine;
    +1 is the laser-drive convention.  The two are unitarily equivalent
    (conjugation by prod_i sigma^z_i) and share all diagonal observables.
    """
    n = spec.n_sites
    if n > MAX_ORACLE_SITES:
        raise ValueError(f"oracle is capped at {MAX_ORACLE_SITES} sites, got {n}")
    if abs(field_sign) != 1.0:
        raise ValueError("field_sign must be +1 or -1")
    dim = 1 << n
    H = np.zeros((dim, dim))
    diag = np.zeros(dim)
    for s in range(dim):
        occ_sum = 0
        for i in range(n):
            occ_sum += (s >> i) & 1
        diag[s] = -delta * occ_sum
    for i, j, v in table.pairs:
        mask = (1 << i) | (1 << j)
        for s in range(dim):
            if (s & mask) == mask:
                diag[s] += v
    H[np.diag_indices(dim)] = diag
    for s in range(dim):
        for i in range(n):
            H[s ^ (1 << i), s] += field_sign * 0.5
    return H


def thermal_expectations(
    H: np.ndarray, beta: float, spec: LatticeSpec, momenta: dict[str, tuple[float, float]] | None = None
) -> dict[str, float]:
    """Boltzmann-weighted expectations from the full spectrum.

    Returns {"n", "energy", and per order k: "F2_<k>", "F4_<k>", "U4_<k>"}.
    All the listed observables except the energy are diagonal in the
    computational basis, so only the diagonal thermal weights
    P(s) = sum_m w_m |<s|m>|^2 are needed.
    """
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    if not np.allclose(H, H.T.conj(), atol=1e-12):
        raise ValueError("Hamiltonian must be Hermitian")
    if momenta is None:
        momenta = ORDER_MOMENTA
    n = spec.n_sites
    dim = H.shape[0]
    if dim != (1 << n):
        raise ValueError(f"H dimension {dim} does not match 2^{n}")

    evals, evecs = scipy.linalg.eigh(H)
    logw = -beta * (evals - evals[0])
    w = np.exp(logw)
    w /= w.sum()
    probs = (np.abs(evecs) ** 2) @ w  # P(s), thermal diagonal in the computational basis

    occ = np.zeros((dim, n))
    for i in range(n):
        occ[:, i] = (np.arange(dim) >> i) & 1

    out = {
        "n": float(probs @ occ.sum(axis=1)) / n,
        "energy": float(w @ evals),
    }
    idx = np.arange(n)
    xs = (idx % spec.Lx).astype(np.float64)
    ys = (idx // spec.Lx).astype(np.float64)
    for name, (kx, ky) in momenta.items():
        amp_a = occ @ np.exp(1j * (kx * xs + ky * ys)) / n
        amp_b = occ @ np.exp(1j * (ky * xs + kx * ys)) / n
        F = np.abs(0.5 * (amp_a + amp_b))
        f2 = float(probs @ F**2)
        f4 = float(probs @ F**4)
        out[f"F2_{name}"] = f2
        out[f"F4_{name}"] = f4
        out[f"U4_{name}"] = 0.5 * (3.0 - f4 / f2**2) if f2 > 0 else float("nan")
    return out
