"""Closed-form sigmoid models for P_LoS(theta) and their least-squares fits.

``sig1``: 1 / (1 + a * exp(-b * (theta_deg - a)))        (theta in degrees)
``sig2``: 1 / (1 + exp(x1*t^3 + x2*t^2 + x3*t + x4))      (t = theta in radians)

Fits minimise the unweighted sum of squared probability residuals over bins
that have at least ``min_count`` samples.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from .errors import EmptySupport, InsufficientData
from .montecarlo import THETA, PlosCurve

log = logging.getLogger(__name__)

MIN_BINS = 5
LOGIT_CLAMP = 1e-4
MAX_ITER = 500
REL_TOL = 1e-9
DEFAULT_MIN_COUNT = 30


@dataclass(frozen=True)
class Sig1Params:
    a: float
    b: float


@dataclass(frozen=True)
class Sig2Params:
    x1: float
    x2: float
    x3: float
    x4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3, self.x4])


@dataclass(frozen=True)
class FitResult:
    model: str
    params: Sig1Params | Sig2Params
    rmse: float
    support: tuple[int, ...]
    converged: bool = True
    iterations: int = 0
    initial_rmse: float = math.nan

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": asdict(self.params),
            "rmse": self.rmse,
            "support": list(self.support),
            "converged": self.converged,
        }

    def curve(self) -> PlosCurve:
        return model_curve(self.params)


@dataclass(frozen=True)
class Metrics:
    rmse: float
    mae: float
    r2: float
    n: int


class NonConvergenceWarning(RuntimeWarning):
    pass


def sig1_eval(p: Sig1Params, theta_deg):
    theta_deg = np.asarray(theta_deg, dtype=float)
    # 1/(1 + a e^{-b(θ-a)}) = expit(b(θ-a) - ln a)
    return expit(p.b * (theta_deg - p.a) - math.log(p.a))


def _cubic(x: np.ndarray, t: np.ndarray) -> np.ndarray:
    return ((x[0] * t + x[1]) * t + x[2]) * t + x[3]


def sig2_eval(p: Sig2Params, theta_rad):
    t = np.asarray(theta_rad, dtype=float)
    return expit(-_cubic(p.as_array(), t))


def model_curve(params: Sig1Params | Sig2Params, meta: dict | None = None) -> PlosCurve:
    if isinstance(params, Sig1Params):
        values = sig1_eval(params, THETA)
    else:
        values = sig2_eval(params, np.radians(THETA))
    return PlosCurve.from_values(values, meta)


def _fit_data(curve: PlosCurve, min_count: int):
    mask = curve.eligible(min_count)
    if mask.sum() < MIN_BINS:
        raise InsufficientData(
            f"need at least {MIN_BINS} bins with >= {min_count} samples, have {int(mask.sum())}"
        )
    return THETA[mask], curve.plos[mask]


def _rmse(res: np.ndarray) -> float:
    return float(np.sqrt(np.mean(res**2)))


def levenberg_marquardt(fun, jac, x0, max_iter: int = MAX_ITER, rel_tol: float = REL_TOL):
    """Damped Gauss-Newton with Marquardt diagonal scaling.

    Returns ``(x, rmse, iterations, converged)``; only cost-decreasing steps
    are accepted, so the result is never worse than ``x0``.
    """
    x = np.asarray(x0, dtype=float)
    r = fun(x)
    cost = _rmse(r)
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = jac(x)
        A = J.T @ J
        g = J.T @ r
        D = np.diag(np.maximum(np.diag(A), 1e-300))
        try:
            step = np.linalg.solve(A + lam * D, -g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        x_new = x + step
        r_new = fun(x_new)
        new_cost = _rmse(r_new)
        if np.isfinite(new_cost) and new_cost < cost:
            improvement = (cost - new_cost) / cost
            x, r, cost = x_new, r_new, new_cost
            lam = max(lam / 10.0, 1e-15)
            if improvement < rel_tol or cost == 0.0:
                return x, cost, it, True
        else:
            lam *= 10.0
            if lam > 1e16:
                # no descent direction left at working precision
                return x, cost, it, True
    return x, cost, max_iter, False


def logit_cubic_init(theta_rad: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Least-squares cubic through ln((1-P)/P), P clamped away from 0 and 1."""
    pc = np.clip(p, LOGIT_CLAMP, 1.0 - LOGIT_CLAMP)
    z = np.log((1.0 - pc) / pc)
    V = np.vander(theta_rad, 4)
    coef, *_ = np.linalg.lstsq(V, z, rcond=None)
    return coef


def fit_sig2(curve: PlosCurve, min_count: int = DEFAULT_MIN_COUNT) -> FitResult:
    theta_deg, y = _fit_data(curve, min_count)
    t = np.radians(theta_deg)
    V = np.vander(t, 4)

    def fun(x):
        return expit(-(V @ x)) - y

    def jac(x):
        p = expit(-(V @ x))
        return -(p * (1.0 - p))[:, None] * V

    x0 = logit_cubic_init(t, y)
    init = _rmse(fun(x0))
    x, rmse, iters, ok = levenberg_marquardt(fun, jac, x0)
    if not ok:
        warnings.warn(f"sig2 fit stopped after {iters} iterations", NonConvergenceWarning, stacklevel=2)
    return FitResult("sig2", Sig2Params(*map(float, x)), rmse, tuple(int(v) for v in theta_deg), ok, iters, init)


def _sig1_grid(theta: np.ndarray, y: np.ndarray, n: int = 80):
    a = np.geomspace(0.5, 50.0, n)[:, None, None]
    b = np.geomspace(0.005, 0.5, n)[None, :, None]
    pred = expit(b * (theta - a) - np.log(a))
    sse = ((pred - y) ** 2).sum(axis=2)
    i, j = np.unravel_index(np.argmin(sse), sse.shape)
    return float(a[i, 0, 0]), float(b[0, j, 0])


def fit_sig1(curve: PlosCurve, min_count: int = DEFAULT_MIN_COUNT) -> FitResult:
    theta, y = _fit_data(curve, min_count)
    theta = theta.astype(float)

    def sse(v):
        a, b = v
        if a <= 0 or b <= 0:
            return np.inf
        return float(np.sum((expit(b * (theta - a) - math.log(a)) - y) ** 2))

    a0, b0 = _sig1_grid(theta, y)
    init = math.sqrt(sse((a0, b0)) / len(y))
    res = minimize(
        sse,
        np.array([a0, b0]),
        method="Nelder-Mead",
        options={"maxiter": MAX_ITER, "xatol": 1e-10, "fatol": 1e-20},
    )
    best = res.x if res.fun <= sse((a0, b0)) else np.array([a0, b0])
    rmse = math.sqrt(sse(best) / len(y))
    f_simplex = res.final_simplex[1]
    spread = float(f_simplex.max() - f_simplex.min())
    ok = bool(res.success) or spread <= REL_TOL * max(float(f_simplex.min()), 1e-300)
    if not ok:
        warnings.warn(f"sig1 fit stopped after {res.nit} iterations", NonConvergenceWarning, stacklevel=2)
    return FitResult(
        "sig1", Sig1Params(float(best[0]), float(best[1])), rmse, tuple(int(v) for v in theta), ok, int(res.nit), init
    )


def fit(curve: PlosCurve, model: str, min_count: int = DEFAULT_MIN_COUNT) -> FitResult:
    if model == "sig1":
        return fit_sig1(curve, min_count)
    if model == "sig2":
        return fit_sig2(curve, min_count)
    raise ValueError(f"unknown model {model!r}; expected sig1 or sig2")


def compare(model_curve: PlosCurve, ref_curve: PlosCurve, support=None) -> Metrics:
    """RMSE, MAE and R^2 of ``model_curve`` against ``ref_curve`` on bins defined in both.

    ``support`` optionally narrows the comparison to an iterable of integer angles.
    R^2 is taken about the reference mean and is not clamped.
    """
    mask = model_curve.defined & ref_curve.defined
    if support is not None:
        sel = np.zeros_like(mask)
        sel[np.asarray(list(support), dtype=int)] = True
        mask &= sel
    if not mask.any():
        raise EmptySupport("curves share no defined angle bins")
    m = model_curve.plos[mask]
    r = ref_curve.plos[mask]
    e = m - r
    ss_res = float(np.sum(e**2))
    ss_tot = float(np.sum((r - r.mean()) ** 2))
    if ss_tot > 0:
        r2 = 1.0 - ss_res / ss_tot
    else:
        r2 = 1.0 if ss_res == 0 else -math.inf
    return Metrics(_rmse(e), float(np.mean(np.abs(e))), r2, int(mask.sum()))
