"""Time-domain simulation of the pulsed squeezed-light microresonator."""
from pndlab.dynamics.analysis import (
    fit_sinh2,
    g2_from_moments,
    g2bar,
    mean_scattered,
    pnd_from_trajectories,
    power_sweep,
    scan_detuning,
    simulate_counting,
    simulate_mean,
)
from pndlab.dynamics.lindblad import counting_moments, evolve, two_mode_operators
from pndlab.dynamics.models import (
    CountingMoments,
    EvolutionResult,
    PulseParams,
    PumpSeries,
    ResonatorParams,
    SweepPoint,
    TrajectoryRecord,
)
from pndlab.dynamics.pump import lambda_bar_from_classical, solve_pump, steady_state_intensity
from pndlab.dynamics.trajectories import simulate_trajectories

__all__ = [
    "CountingMoments",
    "EvolutionResult",
    "PulseParams",
    "PumpSeries",
    "ResonatorParams",
    "SweepPoint",
    "TrajectoryRecord",
    "counting_moments",
    "evolve",
    "fit_sinh2",
    "g2_from_moments",
    "g2bar",
    "lambda_bar_from_classical",
    "mean_scattered",
    "pnd_from_trajectories",
    "power_sweep",
    "scan_detuning",
    "simulate_counting",
    "simulate_mean",
    "simulate_trajectories",
    "solve_pump",
    "steady_state_intensity",
    "two_mode_operators",
]
