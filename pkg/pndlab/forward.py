"""
On/Off Detection Forward Model
==============================
Click probabilities of threshold detectors behind a ladder of known
transmissions, the linear-system matrices used by the EM reconstruction, and
seeded finite-count sampling of click tables.

Detector x reads the signal arm, detector y the idler arm; p10 is a signal
click without an idler click.
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.random import SeedSequence, default_rng
from pydantic import BaseModel, Field, field_validator, model_validator

from pndlab.errors import DomainError
from pndlab.fock import Arm, JointPnd, Pnd

logger = logging.getLogger(__name__)


def eta_from_loss_db(loss_db: float) -> float:
    if not math.isfinite(loss_db) or loss_db < 0:
        raise DomainError(f"loss must be a non-negative number of dB, got {loss_db}")
    return 10.0 ** (-loss_db / 10.0)


def loss_db_from_eta(eta: float) -> float:
    if not 0.0 < eta <= 1.0:
        raise DomainError(f"transmission must lie in (0, 1], got {eta}")
    return -10.0 * math.log10(eta)


class EfficiencyLadder(BaseModel):
    """Total transmissions eta_mu = eta_exp * eta_VOA,mu of the M measurement settings."""

    etas: List[float] = Field(..., min_length=2)

    @field_validator("etas")
    @classmethod
    def _in_unit_interval(cls, v: List[float]) -> List[float]:
        for eta in v:
            if not math.isfinite(eta) or not 0.0 < eta <= 1.0:
                raise ValueError(f"every transmission must lie in (0, 1], got {eta}")
        return v

    @classmethod
    def voa_linear(cls, eta_exp: float, voa_min: float = 0.05, voa_max: float = 0.95, steps: int = 50) -> "EfficiencyLadder":
        """Equal steps in VOA transmission."""
        return cls(etas=list(eta_exp * np.linspace(voa_min, voa_max, steps)))

    @classmethod
    def voa_db(cls, eta_exp: float, voa_min: float = 0.05, voa_max: float = 0.95, steps: int = 50) -> "EfficiencyLadder":
        """Equal steps in VOA attenuation expressed in dB."""
        return cls(etas=list(eta_exp * np.geomspace(voa_min, voa_max, steps)))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.etas, dtype=float)

    def scaled(self, factor: float) -> "EfficiencyLadder":
        scaled = self.as_array() * factor
        if np.any(scaled > 1.0 + 1e-12):
            raise DomainError(
                f"scaling by {factor:.6g} pushes transmission to {scaled.max():.6g} > 1: "
                "the reference plane lies upstream of more loss than the setup has"
            )
        return EfficiencyLadder(etas=list(np.minimum(scaled, 1.0)))


class ClickProbs(BaseModel):
    p00: float
    p01: float
    p10: float
    p11: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p00, self.p01, self.p10, self.p11])


class ClickRow(BaseModel):
    eta: float = Field(..., gt=0, le=1)
    trials: int = Field(..., gt=0)
    c00: int = Field(..., ge=0)
    c01: int = Field(..., ge=0)
    c10: int = Field(..., ge=0)
    c11: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _counts_add_up(self) -> "ClickRow":
        total = self.c00 + self.c01 + self.c10 + self.c11
        if total != self.trials:
            raise ValueError(f"event counts add up to {total}, expected {self.trials} trials")
        return self


class ClickTable(BaseModel):
    rows: List[ClickRow] = Field(..., min_length=1)

    @property
    def etas(self) -> np.ndarray:
        return np.array([row.eta for row in self.rows])

    @property
    def trials(self) -> np.ndarray:
        return np.array([row.trials for row in self.rows], dtype=float)

    def counts(self) -> np.ndarray:
        """(M, 4) array ordered c00, c01, c10, c11."""
        return np.array([[row.c00, row.c01, row.c10, row.c11] for row in self.rows], dtype=float)

    def frequencies(self) -> np.ndarray:
        return self.counts() / self.trials[:, None]

    def data_vector(self) -> np.ndarray:
        """The 3M frequencies (f00 block, f01 block, f10 block); f11 is dependent and left out."""
        freqs = self.frequencies()
        return np.concatenate([freqs[:, 0], freqs[:, 1], freqs[:, 2]])


# ============================================================
# FORWARD MODEL
# ============================================================

def _etas_array(ladder: Union[EfficiencyLadder, Sequence[float]]) -> np.ndarray:
    if isinstance(ladder, EfficiencyLadder):
        return ladder.as_array()
    etas = np.asarray(ladder, dtype=float)
    if etas.ndim != 1 or np.any(~np.isfinite(etas)) or np.any((etas < 0) | (etas > 1)):
        raise DomainError("transmissions must be a vector of values in [0, 1]")
    return etas


def p_off(p: Pnd, eta: float) -> float:
    """Probability that an on/off detector behind transmission eta stays silent."""
    return float(b_matrix_single([eta], p.truncation)[0] @ p.probs)


def b_matrix_single(ladder: Union[EfficiencyLadder, Sequence[float]], trunc: int) -> np.ndarray:
    """B[mu, n] = (1 - eta_mu)^n."""
    etas = _etas_array(ladder)
    return np.power(1.0 - etas[:, None], np.arange(trunc + 1)[None, :])


def click_probs_joint(p: JointPnd, eta: float, eta_i: Optional[float] = None) -> ClickProbs:
    """Four coincidence outcomes; both arms share eta unless eta_i is given."""
    eta_i = eta if eta_i is None else eta_i
    off_s = b_matrix_single([eta], p.truncation)[0]
    off_i = b_matrix_single([eta_i], p.truncation)[0]
    p00 = float(off_s @ p.probs @ off_i)
    p01 = float(off_s @ p.probs @ (1.0 - off_i))
    p10 = float((1.0 - off_s) @ p.probs @ off_i)
    p11 = min(max(1.0 - p00 - p01 - p10, 0.0), 1.0)
    return ClickProbs(p00=p00, p01=p01, p10=p10, p11=p11)


def b_matrix_joint(ladder: Union[EfficiencyLadder, Sequence[float]], trunc: int) -> np.ndarray:
    """
    3M x (N+1)^2 system matrix of the bipartite model.
    Row blocks: p00, p01, p10. Column p = k + n(N+1) for signal n, idler k.
    """
    off = b_matrix_single(ladder, trunc)
    on = 1.0 - off
    m = off.shape[0]
    block00 = np.einsum("mn,mk->mnk", off, off).reshape(m, -1)
    block01 = np.einsum("mn,mk->mnk", off, on).reshape(m, -1)
    block10 = np.einsum("mn,mk->mnk", on, off).reshape(m, -1)
    return np.vstack([block00, block01, block10])


def off_frequencies(table: ClickTable, arm: Union[Arm, str] = Arm.SIGNAL) -> List[Tuple[float, float]]:
    """Single-detector (eta, f0) pairs extracted from a coincidence table."""
    counts = table.counts()
    silent = counts[:, 0] + (counts[:, 1] if Arm(arm) == Arm.SIGNAL else counts[:, 2])
    return list(zip(table.etas.tolist(), (silent / table.trials).tolist()))


# ============================================================
# SAMPLING
# ============================================================

def sample_click_table(p: JointPnd, ladder: EfficiencyLadder, trials_per_setting: int, seed: int) -> ClickTable:
    """
    Multinomial click counts for every setting.
    Row mu draws from its own generator spawned from the master seed, so row
    order and scheduling never change a row's counts.
    """
    if trials_per_setting < 1:
        raise DomainError("trials per setting must be >= 1")
    children = SeedSequence(seed).spawn(len(ladder.etas))
    rows = []
    for eta, child in zip(ladder.etas, children):
        probs = click_probs_joint(p, eta).as_array()
        draw = default_rng(child).multinomial(trials_per_setting, probs / probs.sum())
        c00, c01, c10, c11 = (int(c) for c in draw)
        rows.append(ClickRow(eta=eta, trials=trials_per_setting, c00=c00, c01=c01, c10=c10, c11=c11))
    logger.debug(f"Sampled {len(rows)} settings x {trials_per_setting} trials (seed={seed})")
    return ClickTable(rows=rows)


def exact_click_table(p: JointPnd, ladder: EfficiencyLadder, trials_per_setting: int) -> ClickTable:
    """Noiseless table: counts are the rounded expectations."""
    rows = []
    for eta in ladder.etas:
        expected = click_probs_joint(p, eta).as_array() * trials_per_setting
        counts = np.floor(expected[:3] + 0.5).astype(int)
        overflow = counts.sum() - trials_per_setting
        if overflow > 0:
            counts[int(np.argmax(counts))] -= overflow
        c00, c01, c10 = (int(c) for c in counts)
        rows.append(ClickRow(
            eta=eta, trials=trials_per_setting,
            c00=c00, c01=c01, c10=c10, c11=trials_per_setting - c00 - c01 - c10,
        ))
    return ClickTable(rows=rows)
