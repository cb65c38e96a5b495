"""
Figures of Merit
================
Fidelity, moments, Mandel Q and noise reduction factor (NRF) of photon-number
distributions, plus the two model fits used in the analysis:
- fit_source_model: (r, n_th_s, n_th_i) maximizing fidelity with a reconstruction
- fit_power_scaling: (a, b_s, b_i) from click probabilities measured over pump power
"""
import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator
from scipy.optimize import least_squares, minimize_scalar
from scipy.stats import linregress

from pndlab.errors import DomainError, ShapeMismatchError, UndefinedRatioError
from pndlab.fock import AnyPnd, Arm, JointPnd, Pnd, SourceModelParams, marginal, source_model_pnd
from pndlab.forward import click_probs_joint

logger = logging.getLogger(__name__)

# 20 r log10(e): power squeezing of a two-mode squeezer with gain r
SQUEEZING_DB_PER_R = 20.0 * math.log10(math.e)


# ============================================================
# MODELS
# ============================================================

class JointMoments(BaseModel):
    mean_s: float
    mean_i: float
    var_s: float
    var_i: float
    cross: float = Field(..., description="<n_s n_i>")

    @property
    def covariance(self) -> float:
        return self.cross - self.mean_s * self.mean_i


class NrfReport(BaseModel):
    v_diff: float = Field(..., ge=0)
    n_tot: float = Field(..., gt=0)
    nrf: float
    nrf_db: Optional[float] = Field(None, description="10 log10(nrf); None when nrf is exactly 0")


class FitBounds(BaseModel):
    r: Tuple[float, float] = (0.0, 1.5)
    n_th_s: Tuple[float, float] = (0.0, 0.5)
    n_th_i: Tuple[float, float] = (0.0, 0.5)

    @model_validator(mode="after")
    def _ordered(self) -> "FitBounds":
        for name in ("r", "n_th_s", "n_th_i"):
            lo, hi = getattr(self, name)
            if lo < 0 or hi < lo:
                raise ValueError(f"bounds for {name} must satisfy 0 <= low <= high, got ({lo}, {hi})")
        return self


class GridConfig(BaseModel):
    points_per_axis: int = Field(50, ge=2)
    refine_tol: float = Field(1e-4, gt=0)
    max_sweeps: int = Field(200, ge=1)


class ScalingBounds(BaseModel):
    a: Tuple[float, float] = (0.0, 1.0)
    b_s: Tuple[float, float] = (0.0, 0.3)
    b_i: Tuple[float, float] = (0.0, 0.3)


class FitResult(BaseModel):
    kind: str
    params: Dict[str, float]
    objective: float
    grid_points: int = 0
    iterations: int = 0


class LinearFit(BaseModel):
    slope: float
    intercept: float
    slope_err: float
    r_squared: float


class LossSpread(BaseModel):
    nominal: float
    low: float
    high: float
    spread: float
    delta_db: float


class MetricsReport(BaseModel):
    mean_s: float
    mean_i: float
    v_diff: float
    n_tot: float
    nrf: Optional[float] = None
    nrf_db: Optional[float] = None
    mandel_q_s: Optional[float] = None
    mandel_q_i: Optional[float] = None
    fit: Optional[Dict[str, float]] = None


# ============================================================
# DISTRIBUTION METRICS
# ============================================================

def fidelity(p: AnyPnd, q: AnyPnd) -> float:
    """Classical fidelity sum sqrt(p q), elementwise over the (joint) grid."""
    if type(p) is not type(q) or p.probs.shape != q.probs.shape:
        raise ShapeMismatchError(f"cannot compare distributions of shape {p.probs.shape} and {q.probs.shape}")
    return float(min(max(np.sum(np.sqrt(p.probs * q.probs)), 0.0), 1.0))


def moments(p: JointPnd) -> JointMoments:
    n = np.arange(p.truncation + 1)
    ps = p.probs.sum(axis=1)
    pi = p.probs.sum(axis=0)
    mean_s = float(n @ ps)
    mean_i = float(n @ pi)
    return JointMoments(
        mean_s=mean_s,
        mean_i=mean_i,
        var_s=float((n ** 2) @ ps - mean_s ** 2),
        var_i=float((n ** 2) @ pi - mean_i ** 2),
        cross=float(n @ p.probs @ n),
    )


def _nrf_from_moments(m: JointMoments) -> NrfReport:
    n_tot = m.mean_s + m.mean_i
    if n_tot <= 0:
        raise UndefinedRatioError("NRF of the vacuum is undefined (no photons)")
    # round-off can push a perfectly correlated variance a hair below zero
    v_diff = max(m.var_s + m.var_i - 2.0 * m.covariance, 0.0)
    ratio = v_diff / n_tot
    return NrfReport(
        v_diff=v_diff,
        n_tot=n_tot,
        nrf=ratio,
        nrf_db=10.0 * math.log10(ratio) if ratio > 0 else None,
    )


def nrf(p: JointPnd) -> NrfReport:
    """Variance of n_s - n_i over the total mean photon number."""
    return _nrf_from_moments(moments(p))


def mandel_q(p: Pnd) -> float:
    if p.mean <= 0:
        raise UndefinedRatioError("Mandel Q of the vacuum is undefined")
    return (p.variance - p.mean) / p.mean


def model_nrf(params: SourceModelParams, eta: float = 1.0) -> NrfReport:
    """
    NRF of the TMS + thermal model behind transmission eta, from closed-form
    moments (no truncation). TMS marginals are thermal with mean sinh^2 r and
    the pair covariance scales with eta^2.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmission must lie in (0, 1], got {eta}")
    m = math.sinh(params.r) ** 2
    pair = eta * m
    bg_s = eta * params.n_th_s
    bg_i = eta * params.n_th_i
    var_s = pair * (1 + pair) + bg_s * (1 + bg_s)
    var_i = pair * (1 + pair) + bg_i * (1 + bg_i)
    mean_s = pair + bg_s
    mean_i = pair + bg_i
    covariance = eta ** 2 * m * (m + 1)
    return _nrf_from_moments(JointMoments(
        mean_s=mean_s,
        mean_i=mean_i,
        var_s=var_s,
        var_i=var_i,
        cross=covariance + mean_s * mean_i,
    ))


def squeezing_db(r: float) -> float:
    if not math.isfinite(r) or r < 0:
        raise DomainError(f"squeezing parameter must be >= 0, got {r}")
    return SQUEEZING_DB_PER_R * r


def escape_efficiency(q_loaded: float, q_intrinsic: float) -> float:
    """eta_e = (Q_int - Q) / Q_int; an infinite intrinsic Q gives 1."""
    if not q_loaded > 0 or q_intrinsic < q_loaded:
        raise DomainError(f"need 0 < Q_loaded <= Q_intrinsic, got ({q_loaded}, {q_intrinsic})")
    if math.isinf(q_intrinsic):
        return 1.0
    return (q_intrinsic - q_loaded) / q_intrinsic


def linear_fit(xs: Sequence[float], ys: Sequence[float]) -> LinearFit:
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise DomainError("linear fit needs at least 2 (x, y) pairs of equal length")
    if np.ptp(x) == 0:
        raise DomainError("linear fit is degenerate: all x values are equal")
    fit = linregress(x, y)
    r_squared = fit.rvalue ** 2 if np.isfinite(fit.rvalue) else 1.0
    return LinearFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        slope_err=float(fit.stderr) if x.size > 2 else 0.0,
        r_squared=float(r_squared),
    )


def loss_spread(evaluate: Callable[[float], float], eta: float, delta_db: float = 0.5) -> LossSpread:
    """
    Evaluate a scalar at eta and at eta shifted by +/- delta_db.
    The upper shift is capped at unit transmission.
    """
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmission must lie in (0, 1], got {eta}")
    factor = 10.0 ** (delta_db / 10.0)
    nominal = float(evaluate(eta))
    low = float(evaluate(eta / factor))
    high = float(evaluate(min(eta * factor, 1.0)))
    values = [nominal, low, high]
    return LossSpread(
        nominal=nominal,
        low=low,
        high=high,
        spread=(max(values) - min(values)) / 2.0,
        delta_db=delta_db,
    )


# ============================================================
# SOURCE MODEL FIT
# ============================================================

def _shifted_thermals(means: np.ndarray, trunc: int) -> np.ndarray:
    """S[a, j, n] = thermal_a(n - j) for n >= j, else 0; thermals renormalized on 0..N."""
    n = np.arange(trunc + 1)
    q = means[:, None] / (1.0 + means[:, None])
    base = (1.0 - q) * q ** n[None, :]
    base = base / base.sum(axis=1, keepdims=True)
    shift = n[None, :] - n[:, None]
    return np.where(shift >= 0, base[:, np.clip(shift, 0, None)], 0.0)


def _grid_fidelities(p: JointPnd, rs: np.ndarray, ths: np.ndarray, thi: np.ndarray) -> np.ndarray:
    trunc = p.truncation
    j = np.arange(trunc + 1)
    tms = np.tanh(rs[:, None]) ** (2 * j[None, :])
    tms = tms / tms.sum(axis=1, keepdims=True)
    s = _shifted_thermals(ths, trunc)
    i = _shifted_thermals(thi, trunc)
    sqrt_p = np.sqrt(p.probs)
    out = np.empty((rs.size, ths.size, thi.size))
    for idx, weights in enumerate(tms):
        grid = np.einsum("j,ajn,bjk->abnk", weights, s, i)
        grid = grid / grid.sum(axis=(2, 3), keepdims=True)
        out[idx] = np.einsum("abnk,nk->ab", np.sqrt(grid), sqrt_p)
    return out


def fit_source_model(
    p: JointPnd,
    bounds: Optional[FitBounds] = None,
    grid: Optional[GridConfig] = None,
) -> FitResult:
    """
    Grid search over (r, n_th_s, n_th_i) followed by coordinate-descent refinement.
    Ties on the grid resolve to the lexicographically smallest parameters.
    """
    bounds = bounds or FitBounds()
    grid = grid or GridConfig()
    names = ("r", "n_th_s", "n_th_i")
    axes = [np.linspace(*getattr(bounds, name), grid.points_per_axis) for name in names]

    scores = _grid_fidelities(p, *axes)
    best = np.unravel_index(int(np.argmax(scores)), scores.shape)
    x = [float(axis[k]) for axis, k in zip(axes, best)]
    logger.debug(f"Grid best {dict(zip(names, x))} with F={scores[best]:.6f}")

    def objective(values: List[float]) -> float:
        return -fidelity(p, source_model_pnd(*values, p.truncation))

    sweeps = 0
    for sweeps in range(1, grid.max_sweeps + 1):
        largest_move = 0.0
        for axis, name in enumerate(names):
            lo, hi = getattr(bounds, name)
            if hi == lo:
                continue

            def along(v: float, axis: int = axis) -> float:
                trial = list(x)
                trial[axis] = v
                return objective(trial)

            res = minimize_scalar(along, bounds=(lo, hi), method="bounded", options={"xatol": grid.refine_tol / 10})
            if res.fun <= objective(x):
                largest_move = max(largest_move, abs(res.x - x[axis]))
                x[axis] = float(res.x)
        if largest_move < grid.refine_tol:
            break

    achieved = -objective(x)
    logger.info(f"Source model fit: r={x[0]:.4f}, n_th_s={x[1]:.4f}, n_th_i={x[2]:.4f}, F={achieved:.5f}")
    return FitResult(
        kind="source_model",
        params=dict(zip(names, x)),
        objective=achieved,
        grid_points=int(scores.size),
        iterations=sweeps,
    )


# ============================================================
# POWER SCALING FIT
# ============================================================

PowerPoint = Union[Tuple[float, float], Tuple[float, float, float, float]]


def fit_power_scaling(
    points: Sequence[PowerPoint],
    eta: float,
    bounds: Optional[ScalingBounds] = None,
    trunc: int = 9,
) -> FitResult:
    """
    Least-squares fit of click probabilities measured at several pump powers
    to the source model with r = aP and n_th = bP.

    Points are (P, p11) or (P, p10, p01, p11). With p11 alone the two arms
    cannot be told apart, so b_s = b_i is enforced.
    """
    bounds = bounds or ScalingBounds()
    data = np.asarray(points, dtype=float)
    if data.ndim != 2 or data.shape[1] not in (2, 4) or data.shape[0] < 3:
        raise DomainError("power scaling needs at least 3 points of (P, p11) or (P, p10, p01, p11)")
    powers = data[:, 0]
    if np.ptp(powers) == 0:
        raise DomainError("power scaling is degenerate: all pump powers are equal")
    if np.any(powers < 0):
        raise DomainError("pump powers must be non-negative")
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmission must lie in (0, 1], got {eta}")
    full = data.shape[1] == 4
    measured = data[:, 1:]

    def predict(a: float, b_s: float, b_i: float) -> np.ndarray:
        rows = []
        for power in powers:
            probs = click_probs_joint(source_model_pnd(a * power, b_s * power, b_i * power, trunc), eta)
            rows.append([probs.p10, probs.p01, probs.p11] if full else [probs.p11])
        return np.asarray(rows)

    if full:
        lower = [bounds.a[0], bounds.b_s[0], bounds.b_i[0]]
        upper = [bounds.a[1], bounds.b_s[1], bounds.b_i[1]]

        def residuals(v: np.ndarray) -> np.ndarray:
            return (predict(*v) - measured).ravel()
    else:
        lower = [bounds.a[0], max(bounds.b_s[0], bounds.b_i[0])]
        upper = [bounds.a[1], min(bounds.b_s[1], bounds.b_i[1])]

        def residuals(v: np.ndarray) -> np.ndarray:
            return (predict(v[0], v[1], v[1]) - measured).ravel()

    x0 = [(lo + hi) / 2.0 for lo, hi in zip(lower, upper)]
    res = least_squares(residuals, x0, bounds=(lower, upper), xtol=1e-12, ftol=1e-12, gtol=1e-12)
    a, b_s = float(res.x[0]), float(res.x[1])
    b_i = float(res.x[2]) if full else b_s
    rms = float(np.sqrt(np.mean(res.fun ** 2)))
    logger.info(f"Power scaling fit: a={a:.4f}/mW, b_s={b_s:.4f}, b_i={b_i:.4f} (rms residual {rms:.3e})")
    return FitResult(
        kind="power_scaling",
        params={"a": a, "b_s": b_s, "b_i": b_i},
        objective=rms,
        iterations=int(res.nfev),
    )


# ============================================================
# REPORT
# ============================================================

def metrics_report(p: JointPnd, fit: Optional[FitResult] = None) -> MetricsReport:
    """Metrics JSON body; the NRF needs photons, per-arm Mandel Q only needs that arm."""
    m = moments(p)
    report = _nrf_from_moments(m)
    qs = {}
    for arm in (Arm.SIGNAL, Arm.IDLER):
        side = marginal(p, arm)
        qs[arm] = mandel_q(side) if side.mean > 0 else None
    fit_block = None
    if fit is not None:
        fit_block = dict(fit.params)
        fit_block["fidelity" if fit.kind == "source_model" else "residual"] = fit.objective
    return MetricsReport(
        mean_s=m.mean_s,
        mean_i=m.mean_i,
        v_diff=report.v_diff,
        n_tot=report.n_tot,
        nrf=report.nrf,
        nrf_db=report.nrf_db,
        mandel_q_s=qs[Arm.SIGNAL],
        mandel_q_i=qs[Arm.IDLER],
        fit=fit_block,
    )
