"""
Photon-Number Distributions
===========================
Model photon-number distributions (single mode and bipartite), the source
model of the squeezed-light resonator and the binomial loss channel.

Everything here works on the photon-number diagonal only.
"""
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Union

import numpy as np
from pydantic import BaseModel, Field
from scipy.signal import convolve2d
from scipy.special import comb, gammaln
from scipy.stats import geom, poisson

from pndlab.errors import DomainError, ShapeMismatchError

NORM_TOL = 1e-9
# exact integer binomials below this truncation, log-gamma above
EXACT_BINOMIAL_MAX = 20


class Arm(str, Enum):
    SIGNAL = "signal"
    IDLER = "idler"


def _as_probability_array(values, ndim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ShapeMismatchError(f"expected a {ndim}-d probability array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("probabilities must be finite")
    # round-off from matrix products can leave -1e-17 entries
    arr[(arr < 0) & (arr > -1e-12)] = 0.0
    if np.any(arr < 0):
        raise DomainError("probabilities must be non-negative")
    return arr


def _renormalized(arr: np.ndarray) -> np.ndarray:
    total = arr.sum()
    if total <= 0:
        raise DomainError("distribution has no probability mass inside the truncation")
    return arr / total


@dataclass(frozen=True)
class Pnd:
    """Single-mode photon-number distribution over n = 0..N."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_probability_array(self.probs, 1)
        if arr.size < 2:
            raise DomainError("truncation must be at least 1 photon")
        if abs(arr.sum() - 1.0) > NORM_TOL:
            raise DomainError(f"probabilities sum to {arr.sum():.12f}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def normalized(cls, values) -> "Pnd":
        return cls(_renormalized(_as_probability_array(values, 1)))

    @property
    def truncation(self) -> int:
        return self.probs.size - 1

    @property
    def photon_numbers(self) -> np.ndarray:
        return np.arange(self.probs.size)

    @property
    def mean(self) -> float:
        return float(self.photon_numbers @ self.probs)

    @property
    def variance(self) -> float:
        n = self.photon_numbers
        return float((n ** 2) @ self.probs - self.mean ** 2)


@dataclass(frozen=True)
class JointPnd:
    """Bipartite distribution; rows index the signal photon number, columns the idler."""

    probs: np.ndarray

    def __post_init__(self):
        arr = _as_probability_array(self.probs, 2)
        if arr.shape[0] != arr.shape[1] or arr.shape[0] < 2:
            raise ShapeMismatchError(f"joint grid must be square with N >= 1, got {arr.shape}")
        if abs(arr.sum() - 1.0) > NORM_TOL:
            raise DomainError(f"probabilities sum to {arr.sum():.12f}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    @classmethod
    def normalized(cls, values) -> "JointPnd":
        return cls(_renormalized(_as_probability_array(values, 2)))

    @classmethod
    def from_vector(cls, vec, trunc: int) -> "JointPnd":
        """Inverse of vectorize(): entry p = k + n(N+1) holds rho[n, k]."""
        return cls.normalized(np.asarray(vec, dtype=float).reshape(trunc + 1, trunc + 1))

    @property
    def truncation(self) -> int:
        return self.probs.shape[0] - 1

    def vectorize(self) -> np.ndarray:
        return self.probs.reshape(-1).copy()


AnyPnd = Union[Pnd, JointPnd]


# ============================================================
# CONSTRUCTORS
# ============================================================

def _check_mean(mean: float, what: str = "mean") -> float:
    if not math.isfinite(mean) or mean < 0:
        raise DomainError(f"{what} must be a finite non-negative photon number, got {mean}")
    return float(mean)


def _check_trunc(trunc: int) -> int:
    if int(trunc) != trunc or trunc < 1:
        raise DomainError(f"truncation must be an integer >= 1, got {trunc}")
    return int(trunc)


def thermal_pnd(mean: float, trunc: int) -> Pnd:
    """Thermal (geometric) statistics, renormalized over 0..N."""
    mean = _check_mean(mean)
    n = np.arange(_check_trunc(trunc) + 1)
    return Pnd.normalized(geom.pmf(n + 1, 1.0 / (1.0 + mean)))


def coherent_pnd(mean: float, trunc: int) -> Pnd:
    """Poisson statistics, renormalized over 0..N."""
    mean = _check_mean(mean)
    n = np.arange(_check_trunc(trunc) + 1)
    return Pnd.normalized(poisson.pmf(n, mean))


def fock_pnd(photons: int, trunc: int) -> Pnd:
    trunc = _check_trunc(trunc)
    if int(photons) != photons or not 0 <= photons <= trunc:
        raise DomainError(f"Fock level {photons} outside 0..{trunc}")
    probs = np.zeros(trunc + 1)
    probs[int(photons)] = 1.0
    return Pnd(probs)


def tms_joint_pnd(r: float, trunc: int) -> JointPnd:
    """Two-mode squeezed vacuum: rho[n, n'] = delta(n, n') tanh^2n(r) / cosh^2(r)."""
    r = _check_mean(r, "squeezing parameter")
    n = np.arange(_check_trunc(trunc) + 1)
    diag = np.tanh(r) ** (2 * n) / np.cosh(r) ** 2
    return JointPnd.normalized(np.diag(diag))


def product_pnd(p_s: Pnd, p_i: Pnd) -> JointPnd:
    if p_s.truncation != p_i.truncation:
        raise ShapeMismatchError("signal and idler truncations differ")
    return JointPnd.normalized(np.outer(p_s.probs, p_i.probs))


def coherent_pair_pnd(mean_total: float, trunc: int) -> JointPnd:
    """A coherent pulse split on a balanced beamsplitter: two independent Poisson arms."""
    half = _check_mean(mean_total) / 2.0
    return product_pnd(coherent_pnd(half, trunc), coherent_pnd(half, trunc))


def convolve_with_thermal(tms: JointPnd, n_th_s: float, n_th_i: float) -> JointPnd:
    """Add independent thermal backgrounds to each arm (2-d convolution, cropped and renormalized)."""
    trunc = tms.truncation
    th_s = thermal_pnd(_check_mean(n_th_s, "n_th_s"), trunc).probs
    th_i = thermal_pnd(_check_mean(n_th_i, "n_th_i"), trunc).probs
    grid = convolve2d(tms.probs, np.outer(th_s, th_i))[: trunc + 1, : trunc + 1]
    return JointPnd.normalized(grid)


class SourceModelParams(BaseModel):
    """TMS + thermal background model of the resonator output, optionally power-scaled."""

    r: float = Field(0.0, ge=0)
    n_th_s: float = Field(0.0, ge=0)
    n_th_i: float = Field(0.0, ge=0)
    a: float = Field(0.0, ge=0, description="squeezing slope, 1/mW")
    b_s: float = Field(0.0, ge=0, description="signal background slope, photons/pulse/mW")
    b_i: float = Field(0.0, ge=0, description="idler background slope, photons/pulse/mW")

    def at_power(self, power_mw: float) -> "SourceModelParams":
        """r = aP and n_th = bP at the given pump power."""
        power_mw = _check_mean(power_mw, "pump power")
        return self.model_copy(update={
            "r": self.a * power_mw,
            "n_th_s": self.b_s * power_mw,
            "n_th_i": self.b_i * power_mw,
        })

    def joint_pnd(self, trunc: int) -> JointPnd:
        return source_model_pnd(self.r, self.n_th_s, self.n_th_i, trunc)


def source_model_pnd(r: float, n_th_s: float, n_th_i: float, trunc: int) -> JointPnd:
    return convolve_with_thermal(tms_joint_pnd(r, trunc), n_th_s, n_th_i)


# ============================================================
# LOSS CHANNEL
# ============================================================

@lru_cache(maxsize=64)
def _binomial_table(trunc: int) -> np.ndarray:
    """C[n, m] = n choose m for 0 <= m <= n <= N, zero above the diagonal."""
    n = np.arange(trunc + 1)[:, None]
    m = np.arange(trunc + 1)[None, :]
    lower = m <= n
    if trunc <= EXACT_BINOMIAL_MAX:
        table = np.array(
            [[float(comb(i, j, exact=True)) if j <= i else 0.0 for j in range(trunc + 1)] for i in range(trunc + 1)]
        )
    else:
        logs = gammaln(n + 1) - gammaln(m + 1) - gammaln(np.where(lower, n - m, 0) + 1)
        table = np.where(lower, np.exp(logs), 0.0)
    table.setflags(write=False)
    return table


def _check_eta(eta: float) -> float:
    if not math.isfinite(eta) or not 0.0 <= eta <= 1.0:
        raise DomainError(f"transmission must lie in [0, 1], got {eta}")
    return float(eta)


def loss_matrix(eta: float, trunc: int) -> np.ndarray:
    """L[m, n] = C(n, m) eta^m (1-eta)^(n-m): probability that n photons leave m."""
    eta = _check_eta(eta)
    trunc = _check_trunc(trunc)
    n = np.arange(trunc + 1)[None, :]
    m = np.arange(trunc + 1)[:, None]
    lower = m <= n
    kept = np.power(eta, m)
    lost = np.power(1.0 - eta, np.where(lower, n - m, 0))
    return np.where(lower, _binomial_table(trunc).T * kept * lost, 0.0)


def apply_loss(p: Pnd, eta: float) -> Pnd:
    return Pnd.normalized(loss_matrix(eta, p.truncation) @ p.probs)


def apply_loss_joint(p: JointPnd, eta_s: float, eta_i: float) -> JointPnd:
    trunc = p.truncation
    grid = loss_matrix(eta_s, trunc) @ p.probs @ loss_matrix(eta_i, trunc).T
    return JointPnd.normalized(grid)


def marginal(p: JointPnd, arm: Union[Arm, str]) -> Pnd:
    axis = 1 if Arm(arm) == Arm.SIGNAL else 0
    return Pnd.normalized(p.probs.sum(axis=axis))
