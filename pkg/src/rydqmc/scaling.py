"""Finite-size-scaling fits near a continuous quantum critical point.

Binder-ratio data are fit to the truncated universal form

    U4(g, L) = sum_{k=0}^K a_k (g - g_c)^k L^{k/nu},

which pins the crossing point g_c and the correlation-length exponent nu.
Order-parameter data then yield the magnetization exponent from

    F(g, L) = sum_{k=0}^K b_k (g - g_c)^k L^{(k - beta)/nu},

with (g_c, nu) held at the Binder-fit values.  Both fits are weighted least
squares; the polynomial coefficients enter linearly, so they are projected
out exactly and the outer optimization runs only over the nonlinear
parameters.  Temperature is assumed scaled as T = c/L (dynamical exponent
z = 1), which is the convention of the datasets this module ingests.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.optimize

DEFAULT_K = 4
NU_STARTS = (0.5, 0.63, 0.8, 1.0)


class FitFailureError(RuntimeError):
    pass


@dataclass
class ScalingDataset:
    """Rows of (L, g, y, y_err) for one observable kind ("binder" or "order")."""

    L: np.ndarray
    g: np.ndarray
    y: np.ndarray
    y_err: np.ndarray
    kind: str = "binder"
    temperature_rule: str = "T=c/L"

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=np.float64)
        self.g = np.asarray(self.g, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        self.y_err = np.asarray(self.y_err, dtype=np.float64)
        n = len(self.L)
        if not (len(self.g) == len(self.y) == len(self.y_err) == n):
            raise ValueError("columns L, g, y, y_err must have equal length")
        if np.any(self.y_err <= 0):
            raise ValueError("all y_err must be positive")
        if self.kind not in ("binder", "order"):
            raise ValueError(f"unknown dataset kind {self.kind!r}")

    def restrict(self, L_min: int | None) -> "ScalingDataset":
        if L_min is None:
            return self
        keep = self.L >= L_min
        return ScalingDataset(self.L[keep], self.g[keep], self.y[keep], self.y_err[keep], self.kind)

    @classmethod
    def from_csv(cls, path, kind: str = "binder") -> "ScalingDataset":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            required = {"L", "g", "y", "y_err"}
            if reader.fieldnames is None or not required.issubset(reader.fieldnames):
                raise ValueError(f"{path}: need CSV header with columns {sorted(required)}")
            for ln, rec in enumerate(reader, start=2):
                try:
                    rows.append((float(rec["L"]), float(rec["g"]), float(rec["y"]), float(rec["y_err"])))
                except (TypeError, ValueError) as exc:
                    raise ValueError(f"{path}: malformed row at line {ln}: {exc}") from exc
        if not rows:
            raise ValueError(f"{path}: no data rows")
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], kind)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["L", "g", "y", "y_err"])
            for L, g, y, err in zip(self.L, self.g, self.y, self.y_err):
                writer.writerow([f"{L:g}", repr(float(g)), repr(float(y)), repr(float(err))])


@dataclass
class FitResult:
    kind: str
    g_c: float
    g_c_err: float
    nu: float
    nu_err: float
    coeffs: np.ndarray
    coeff_errs: np.ndarray
    chi2: float
    dof: int
    beta_exp: float | None = None
    beta_err: float | None = None
    n_points: int = 0
    extras: dict = field(default_factory=dict)

    @property
    def chi2_per_dof(self) -> float:
        return self.chi2 / self.dof if self.dof > 0 else math.inf

    def as_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "g_c": self.g_c,
            "g_c_err": self.g_c_err,
            "nu": self.nu,
            "nu_err": self.nu_err,
            "coeffs": list(map(float, self.coeffs)),
            "coeff_errs": list(map(float, self.coeff_errs)),
            "chi2": self.chi2,
            "dof": self.dof,
            "chi2_per_dof": self.chi2_per_dof,
            "n_points": self.n_points,
        }
        if self.beta_exp is not None:
            out["beta"] = self.beta_exp
            out["beta_err"] = self.beta_err
        out.update(self.extras)
        return out


def _binder_design(g, L, g_c, nu, K):
    dg = g - g_c
    cols = [dg**k * L ** (k / nu) for k in range(K + 1)]
    return np.column_stack(cols)


def _order_design(g, L, g_c, nu, beta_exp, K):
    dg = g - g_c
    cols = [dg**k * L ** ((k - beta_exp) / nu) for k in range(K + 1)]
    return np.column_stack(cols)


def _projected_residual(design, y, wgt):
    """Weighted residual after solving exactly for the linear coefficients."""
    Xw = design * wgt[:, None]
    yw = y * wgt
    coef, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    return yw - Xw @ coef, coef


def _covariance_from_jacobian(jac):
    _, sv, vt = np.linalg.svd(jac, full_matrices=False)
    tol = np.finfo(float).eps * max(jac.shape) * (sv[0] if len(sv) else 0.0)
    inv_sq = np.where(sv > tol, 1.0 / sv**2, 0.0)
    return (vt.T * inv_sq) @ vt


def _numeric_jacobian(fn, x, scale=1e-6):
    f0 = fn(x)
    jac = np.empty((len(f0), len(x)))
    for k in range(len(x)):
        h = scale * max(1.0, abs(x[k]))
        xp = x.copy()
        xp[k] += h
        jac[:, k] = (fn(xp) - f0) / h
    return jac


def fit_binder(
    data: ScalingDataset,
    K: int = DEFAULT_K,
    L_min: int | None = None,
    nu_starts=NU_STARTS,
    bootstrap: int = 0,
    bootstrap_seed: int = 1,
) -> FitResult:
    """Weighted fit of the Binder scaling form for (g_c, nu, a_0..a_K).

    Deterministic multi-start over g_c on the data's coupling grid and nu on
    ``nu_starts``.  Parameter errors come from the covariance at the
    optimum; bootstrap > 0 adds row-resampled errors in ``extras``.
    """
    if data.kind != "binder":
        raise ValueError(f"fit_binder needs a binder-kind dataset, got {data.kind!r}")
    d = data.restrict(L_min)
    sizes = np.unique(d.L)
    if len(sizes) < 2:
        raise FitFailureError(
            "nu is unidentifiable from a single system size: need >= 2 distinct L"
        )
    n_par = K + 3
    if len(d.y) <= n_par:
        raise FitFailureError(f"{len(d.y)} points cannot constrain {n_par} parameters")
    wgt = 1.0 / d.y_err

    def residual(theta):
        g_c, nu = theta
        if nu <= 0.01:
            return np.full(len(d.y), 1e6)
        r, _ = _projected_residual(_binder_design(d.g, d.L, g_c, nu, K), d.y, wgt)
        return r

    g_starts = np.quantile(np.unique(d.g), [0.25, 0.5, 0.75])
    best = None
    for g0 in g_starts:
        for nu0 in nu_starts:
            try:
                sol = scipy.optimize.least_squares(
                    residual, x0=[g0, nu0], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15
                )
            except Exception:
                continue
            if best is None or sol.cost < best.cost:
                best = sol
    if best is None or not np.all(np.isfinite(best.x)):
        raise FitFailureError("no start of the Binder fit converged")
    g_c, nu = best.x
    _, coeffs = _projected_residual(_binder_design(d.g, d.L, g_c, nu, K), d.y, wgt)

    def full_residual(params):
        gc_, nu_ = params[0], params[1]
        a = params[2:]
        model = _binder_design(d.g, d.L, gc_, nu_, K) @ a
        return (d.y - model) * wgt

    x_full = np.concatenate([[g_c, nu], coeffs])
    jac = _numeric_jacobian(full_residual, x_full)
    cov = _covariance_from_jacobian(jac)
    errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    chi2 = float(np.sum(full_residual(x_full) ** 2))
    result = FitResult(
        kind="binder",
        g_c=float(g_c),
        g_c_err=float(errs[0]),
        nu=float(abs(nu)),
        nu_err=float(errs[1]),
        coeffs=coeffs,
        coeff_errs=errs[2:],
        chi2=chi2,
        dof=len(d.y) - n_par,
        n_points=len(d.y),
    )
    if bootstrap > 0:
        result.extras["bootstrap"] = _bootstrap_errors(
            lambda ds: fit_binder(ds, K=K, nu_starts=(nu,)),
            d,
            ("g_c", "nu"),
            bootstrap,
            bootstrap_seed,
        )
    return result


def fit_order(
    data: ScalingDataset,
    g_c: float,
    nu: float,
    K: int = DEFAULT_K,
    L_min: int | None = None,
    beta_bounds: tuple[float, float] = (-1.0, 3.0),
    bootstrap: int = 0,
    bootstrap_seed: int = 1,
) -> FitResult:
    """Weighted fit of the order-parameter scaling form for (beta, b_0..b_K).

    (g_c, nu) are held fixed at the Binder-fit values; the model is linear
    in the b_k, so the only nonlinear parameter is beta, found by a 1-D
    bounded search.
    """
    if data.kind != "order":
        raise ValueError(f"fit_order needs an order-kind dataset, got {data.kind!r}")
    if nu <= 0:
        raise ValueError(f"nu must be positive, got {nu}")
    d = data.restrict(L_min)
    n_par = K + 2
    if len(d.y) <= n_par:
        raise FitFailureError(f"{len(d.y)} points cannot constrain {n_par} parameters")
    if len(np.unique(d.L)) < 2:
        raise FitFailureError("beta is unidentifiable from a single system size")
    wgt = 1.0 / d.y_err

    def cost(beta_exp):
        r, _ = _projected_residual(_order_design(d.g, d.L, g_c, nu, beta_exp, K), d.y, wgt)
        return float(np.sum(r**2))

    sol = scipy.optimize.minimize_scalar(
        cost, bounds=beta_bounds, method="bounded", options={"xatol": 1e-12}
    )
    if not sol.success:
        raise FitFailureError(f"beta search failed: {sol.message}; best residual {sol.fun:.3g}")
    beta_exp = float(sol.x)
    _, coeffs = _projected_residual(_order_design(d.g, d.L, g_c, nu, beta_exp, K), d.y, wgt)

    def full_residual(params):
        b = params[0]
        bk = params[1:]
        model = _order_design(d.g, d.L, g_c, nu, b, K) @ bk
        return (d.y - model) * wgt

    x_full = np.concatenate([[beta_exp], coeffs])
    jac = _numeric_jacobian(full_residual, x_full)
    cov = _covariance_from_jacobian(jac)
    errs = np.sqrt(np.maximum(np.diag(cov), 0.0))
    chi2 = float(np.sum(full_residual(x_full) ** 2))
    result = FitResult(
        kind="order",
        g_c=float(g_c),
        g_c_err=0.0,
        nu=float(nu),
        nu_err=0.0,
        coeffs=coeffs,
        coeff_errs=errs[1:],
        chi2=chi2,
        dof=len(d.y) - n_par,
        beta_exp=beta_exp,
        beta_err=float(errs[0]),
        n_points=len(d.y),
    )
    if bootstrap > 0:
        result.extras["bootstrap"] = _bootstrap_errors(
            lambda ds: fit_order(ds, g_c, nu, K=K),
            d,
            ("beta_exp",),
            bootstrap,
            bootstrap_seed,
        )
    return result


def _bootstrap_errors(fit_fn, data: ScalingDataset, attrs, n_boot: int, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    draws = {a: [] for a in attrs}
    n = len(data.y)
    for _ in range(n_boot):
        idx = rng.integers(0, n, size=n)
        resampled = ScalingDataset(data.L[idx], data.g[idx], data.y[idx], data.y_err[idx], data.kind)
        try:
            res = fit_fn(resampled)
        except (FitFailureError, ValueError):
            continue
        for a in attrs:
            draws[a].append(getattr(res, a))
    return {a: float(np.std(v)) if len(v) > 1 else math.nan for a, v in draws.items()}


def collapse_score(
    data: ScalingDataset,
    g_c: float,
    nu: float,
    beta_exp: float | None = None,
    poly_degree: int | None = None,
) -> float:
    """Quality of the universal collapse: pooled points are rescaled to
    (x, y) = ((g - g_c) L^{1/nu}, y L^{beta/nu}), a smooth reference curve
    (least-squares polynomial) is fit through all of them, and the score is
    the variance-normalized mean squared deviation.  Lower is better.
    """
    x = (data.g - g_c) * data.L ** (1.0 / nu)
    y = data.y * data.L ** (beta_exp / nu) if beta_exp is not None else data.y.copy()
    lo = max(x[data.L == L].min() for L in np.unique(data.L))
    hi = min(x[data.L == L].max() for L in np.unique(data.L))
    n_overlap = int(np.sum((x >= lo) & (x <= hi)))
    if hi <= lo or n_overlap < 3:
        raise ValueError(
            f"collapse needs >= 3 points in the shared x-range, found {n_overlap}"
        )
    degree = poly_degree if poly_degree is not None else min(8, len(x) - 2)
    order = np.argsort(x)
    coef = np.polynomial.polynomial.polyfit(x[order], y[order], degree)
    resid = y - np.polynomial.polynomial.polyval(x, coef)
    var = float(np.var(y))
    if var == 0.0:
        return float(np.mean(resid**2))
    return float(np.mean(resid**2) / var)


def binder_crossing(g: np.ndarray, u4_small: np.ndarray, u4_large: np.ndarray) -> float:
    """Coupling where the Binder curves of two sizes cross (linear interpolation).

    Expects a common, sorted coupling grid; raises if the difference never
    changes sign.
    """
    g = np.asarray(g, dtype=float)
    diff = np.asarray(u4_large, dtype=float) - np.asarray(u4_small, dtype=float)
    sign_change = np.flatnonzero(np.sign(diff[:-1]) * np.sign(diff[1:]) < 0)
    if diff[0] == 0.0:
        return float(g[0])
    if len(sign_change) == 0:
        zero_hits = np.flatnonzero(diff == 0.0)
        if len(zero_hits):
            return float(g[zero_hits[0]])
        raise ValueError("Binder curves do not cross on the given grid")
    k = sign_change[0]
    frac = diff[k] / (diff[k] - diff[k + 1])
    return float(g[k] + frac * (g[k + 1] - g[k]))


# -- synthetic self-test data ----------------------------------------------------------


def synthetic_binder_dataset(
    g_c: float,
    nu: float,
    coeffs,
    L_values,
    g_values,
    noise_frac: float = 0.0,
    seed: int = 0,
) -> ScalingDataset:
    """Generate Binder-form data, optionally with relative Gaussian noise."""
    return _synthetic(g_c, nu, None, coeffs, L_values, g_values, noise_frac, seed, "binder")


def synthetic_order_dataset(
    g_c: float,
    nu: float,
    beta_exp: float,
    coeffs,
    L_values,
    g_values,
    noise_frac: float = 0.0,
    seed: int = 0,
) -> ScalingDataset:
    """Generate order-parameter-form data, optionally with relative noise."""
    return _synthetic(g_c, nu, beta_exp, coeffs, L_values, g_values, noise_frac, seed, "order")


def _synthetic(g_c, nu, beta_exp, coeffs, L_values, g_values, noise_frac, seed, kind):
    coeffs = np.asarray(coeffs, dtype=float)
    K = len(coeffs) - 1
    rows_L = []
    rows_g = []
    for L in L_values:
        for g in g_values:
            rows_L.append(L)
            rows_g.append(g)
    L = np.array(rows_L, dtype=float)
    g = np.array(rows_g, dtype=float)
    if kind == "binder":
        y = _binder_design(g, L, g_c, nu, K) @ coeffs
    else:
        y = _order_design(g, L, g_c, nu, beta_exp, K) @ coeffs
    if noise_frac > 0:
        rng = np.random.default_rng(seed)
        err = noise_frac * np.maximum(np.abs(y), 1e-12)
        y = y + err * rng.standard_normal(len(y))
    else:
        err = np.maximum(1e-8 * np.maximum(np.abs(y), 1.0), 1e-12)
    return ScalingDataset(L, g, y, err, kind)
