"""
Two-Mode Lindblad Evolution
===========================
Signal and idler resonator modes driven by the classical pump through

    H = -[lambda_bar <a_p>*^2 a_s^dag a_i^dag + h.c.] - 2 lambda_bar |<a_p>|^2 (n_s + n_i)

with decay D[sqrt(2 gamma_tot) a] on each mode. The density matrix lives on
the truncated space n_s, n_i = 0..nf with basis index n (nf+1) + k.

The cross-phase term is diagonal in photon number, so it is moved into the
interaction picture: the pair coupling picks up the phase exp(-2i G(t)),
G(t) = integral of 2 lambda_bar |<a_p>|^2. Populations are unchanged by the
transformation and RK4 no longer has to resolve the XPM rotation.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid

from pndlab.dynamics.models import CountingMoments, EvolutionResult, PumpSeries, ResonatorParams
from pndlab.errors import DomainError, TruncationError

logger = logging.getLogger(__name__)

TOP_LEVEL_LIMIT = 1e-4
DEFAULT_NF = 12


@dataclass(frozen=True)
class TwoModeOperators:
    nf: int
    a_s: sparse.csr_matrix
    a_i: sparse.csr_matrix
    n_s_diag: np.ndarray
    n_i_diag: np.ndarray
    pair: sparse.csr_matrix
    pair_dag: sparse.csr_matrix

    @property
    def dim(self) -> int:
        return (self.nf + 1) ** 2

    def vacuum(self) -> np.ndarray:
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[0, 0] = 1.0
        return rho

    def mean_numbers(self, rho: np.ndarray) -> Tuple[float, float]:
        diag = np.real(np.diagonal(rho))
        return float(self.n_s_diag @ diag), float(self.n_i_diag @ diag)

    def top_population(self, rho: np.ndarray) -> float:
        """Largest population of the highest Fock level of either mode."""
        grid = np.real(np.diagonal(rho)).reshape(self.nf + 1, self.nf + 1)
        return float(max(grid[self.nf, :].sum(), grid[:, self.nf].sum()))


@lru_cache(maxsize=8)
def two_mode_operators(nf: int) -> TwoModeOperators:
    if int(nf) != nf or nf < 1:
        raise DomainError(f"Fock truncation must be an integer >= 1, got {nf}")
    lowering = sparse.diags(np.sqrt(np.arange(1, nf + 1)), offsets=1, format="csr")
    eye = sparse.identity(nf + 1, format="csr")
    a_s = sparse.kron(lowering, eye, format="csr")
    a_i = sparse.kron(eye, lowering, format="csr")
    n = np.arange(nf + 1)
    pair = (a_s @ a_i).tocsr()
    return TwoModeOperators(
        nf=nf,
        a_s=a_s,
        a_i=a_i,
        n_s_diag=np.repeat(n, nf + 1).astype(float),
        n_i_diag=np.tile(n, nf + 1).astype(float),
        pair=pair,
        pair_dag=pair.T.tocsr(),
    )


def _right(rho: np.ndarray, op: sparse.csr_matrix) -> np.ndarray:
    """rho @ op with a sparse right factor."""
    return (op.T @ rho.T).T


class TwoModeGenerator:
    """
    Right-hand side of the master equation.

    With monitored=True the monitored part of each decay channel loses its
    recycling term a rho a^dag: this is the no-jump generator of the
    photodetection unravelling, and it does not preserve the trace.
    """

    def __init__(
        self,
        res: ResonatorParams,
        pump: PumpSeries,
        nf: int = DEFAULT_NF,
        xpm_on: bool = True,
        monitored: bool = False,
    ):
        self.ops = two_mode_operators(nf)
        self.pump = pump
        self.lam = res.lambda_bar_ps
        if xpm_on and self.lam > 0:
            self.xpm_phase: Optional[np.ndarray] = cumulative_trapezoid(2.0 * self.lam * pump.intensity, pump.times, initial=0.0)
        else:
            self.xpm_phase = None
        ops = self.ops
        rate_s = 2.0 * res.gamma_tot_s
        rate_i = 2.0 * res.gamma_tot_i
        recycle_s = 2.0 * (1.0 - res.eta_es) * res.gamma_tot_s if monitored else rate_s
        recycle_i = 2.0 * (1.0 - res.eta_ei) * res.gamma_tot_i if monitored else rate_i
        self.channels: List[Tuple[sparse.csr_matrix, np.ndarray, float, float]] = [
            (ops.a_s, ops.n_s_diag, recycle_s, rate_s),
            (ops.a_i, ops.n_i_diag, recycle_i, rate_i),
        ]

    def coupling(self, t: float) -> complex:
        """Coefficient of a_s^dag a_i^dag in -H."""
        a_p = self.pump.at(t)
        c = self.lam * a_p.conjugate() ** 2
        if self.xpm_phase is not None:
            phase = np.interp(t, self.pump.times, self.xpm_phase)
            c *= np.exp(-2j * phase)
        return complex(c)

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        c = self.coupling(t)
        out = np.zeros_like(rho)
        if c != 0:
            hamiltonian = -(c * self.ops.pair_dag + c.conjugate() * self.ops.pair)
            out += -1j * (hamiltonian @ rho - _right(rho, hamiltonian))
        for a, number, recycle, rate in self.channels:
            if recycle > 0:
                out += recycle * (a @ (a @ rho).T).T
            # {n, rho} with diagonal n
            out -= 0.5 * rate * (number[:, None] * rho + rho * number[None, :])
        return out

    def step(self, t: float, rho: np.ndarray, h: float) -> np.ndarray:
        k1 = self(t, rho)
        k2 = self(t + h / 2, rho + h / 2 * k1)
        k3 = self(t + h / 2, rho + h / 2 * k2)
        k4 = self(t + h, rho + h * k3)
        return rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def check_truncation(ops: TwoModeOperators, rho: np.ndarray, t: float) -> float:
    top = ops.top_population(rho)
    if top > TOP_LEVEL_LIMIT:
        raise TruncationError(
            f"population {top:.2e} in Fock level {ops.nf} at t={t:.1f} ps exceeds {TOP_LEVEL_LIMIT:g}; raise nf"
        )
    return top


def evolve(res: ResonatorParams, pump: PumpSeries, nf: int = DEFAULT_NF, xpm_on: bool = True) -> EvolutionResult:
    """
    Unconditioned evolution from the two-mode vacuum over the pump window.
    Steps span two pump samples so every RK4 midpoint is a pump grid point.
    """
    if pump.times.size < 3 or (pump.times.size - 1) % 2:
        raise DomainError("pump series must hold an even number of steps")
    generator = TwoModeGenerator(res, pump, nf=nf, xpm_on=xpm_on)
    ops = generator.ops
    times = pump.times[::2]
    h = 2.0 * pump.dt

    rho = ops.vacuum()
    mean_s = np.zeros(times.size)
    mean_i = np.zeros(times.size)
    trace = np.ones(times.size)
    worst = 0.0
    for k in range(1, times.size):
        rho = generator.step(times[k - 1], rho, h)
        rho = 0.5 * (rho + rho.conj().T)
        mean_s[k], mean_i[k] = ops.mean_numbers(rho)
        trace[k] = float(np.real(np.trace(rho)))
        worst = max(worst, check_truncation(ops, rho, times[k]))

    logger.debug(f"Evolved {times.size - 1} steps at nf={nf}; peak <n_s>={mean_s.max():.4g}, top level {worst:.1e}")
    return EvolutionResult(
        times=times,
        mean_s=mean_s,
        mean_i=mean_i,
        trace=trace,
        nf=nf,
        final_diagonal=np.real(np.diagonal(rho)).reshape(nf + 1, nf + 1),
        max_top_population=worst,
    )


# ============================================================
# PHOTOCOUNT MOMENTS
# ============================================================

class _CountingSystem:
    """
    Master equation with a counting field on the bus emission of each arm.

    sigma_x is the first derivative of the counted state in its field, so
    sigma_x' = L sigma_x + J_x rho with J_x X = 2 gamma_ex a_x X a_x^dag.
    Integrating the traces of J_x rho, J_x sigma_x and J_s sigma_i + J_i sigma_s
    gives <N_x>, <N_x (N_x - 1)> / 2 and <N_s N_i>.
    """

    def __init__(self, generator: TwoModeGenerator, res: ResonatorParams):
        self.generator = generator
        ops = generator.ops
        self.emit = [
            (ops.a_s, ops.n_s_diag, 2.0 * res.gamma_es),
            (ops.a_i, ops.n_i_diag, 2.0 * res.gamma_ei),
        ]

    @staticmethod
    def _jump(a: sparse.csr_matrix, rate: float, x: np.ndarray) -> np.ndarray:
        return rate * (a @ (a @ x).T).T

    @staticmethod
    def _rate(number: np.ndarray, rate: float, x: np.ndarray) -> float:
        return float(rate * np.real(number @ np.diagonal(x)))

    def __call__(self, t: float, state: Tuple[np.ndarray, ...]) -> Tuple[np.ndarray, ...]:
        rho, sigma_s, sigma_i, _ = state
        (a_s, num_s, rate_s), (a_i, num_i, rate_i) = self.emit
        d_rho = self.generator(t, rho)
        d_sigma_s = self.generator(t, sigma_s) + self._jump(a_s, rate_s, rho)
        d_sigma_i = self.generator(t, sigma_i) + self._jump(a_i, rate_i, rho)
        rates = np.array([
            self._rate(num_s, rate_s, rho),
            self._rate(num_i, rate_i, rho),
            2.0 * self._rate(num_s, rate_s, sigma_s),
            2.0 * self._rate(num_i, rate_i, sigma_i),
            self._rate(num_s, rate_s, sigma_i) + self._rate(num_i, rate_i, sigma_s),
        ])
        return d_rho, d_sigma_s, d_sigma_i, rates

    def step(self, t: float, state: Tuple[np.ndarray, ...], h: float) -> Tuple[np.ndarray, ...]:
        def shift(scale, k):
            return tuple(x + scale * dx for x, dx in zip(state, k))

        k1 = self(t, state)
        k2 = self(t + h / 2, shift(h / 2, k1))
        k3 = self(t + h / 2, shift(h / 2, k2))
        k4 = self(t + h, shift(h, k3))
        return tuple(x + h / 6 * (a + 2 * b + 2 * c + d) for x, a, b, c, d in zip(state, k1, k2, k3, k4))


def counting_moments(res: ResonatorParams, pump: PumpSeries, nf: int = DEFAULT_NF, xpm_on: bool = True) -> CountingMoments:
    """
    Exact first and second photocount moments per pulse of the unconditioned
    evolution, on the same grid and truncation checks as evolve().
    """
    if pump.times.size < 3 or (pump.times.size - 1) % 2:
        raise DomainError("pump series must hold an even number of steps")
    generator = TwoModeGenerator(res, pump, nf=nf, xpm_on=xpm_on)
    system = _CountingSystem(generator, res)
    ops = generator.ops
    times = pump.times[::2]
    h = 2.0 * pump.dt

    zero = np.zeros((ops.dim, ops.dim), dtype=complex)
    state: Tuple[np.ndarray, ...] = (ops.vacuum(), zero, zero.copy(), np.zeros(5))
    for k in range(1, times.size):
        state = system.step(times[k - 1], state, h)
        check_truncation(ops, state[0], times[k])

    mean_s, mean_i, factorial_s, factorial_i, cross = (float(v) for v in state[3])
    residual_s, residual_i = ops.mean_numbers(state[0])
    logger.debug(f"Counting moments at nf={nf}: <N_s>={mean_s:.4g}, <N_s(N_s-1)>={factorial_s:.4g}")
    return CountingMoments(
        mean_s=mean_s,
        mean_i=mean_i,
        factorial_s=factorial_s,
        factorial_i=factorial_i,
        cross=cross,
        residual_s=residual_s,
        residual_i=residual_i,
        nf=nf,
    )
