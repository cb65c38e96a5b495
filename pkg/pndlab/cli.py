"""
pndlab command line
===================
    pndlab synth        sample a click table from a model source
    pndlab reconstruct  EM reconstruction of a click table
    pndlab fit          source-model fit + metrics of a joint PND
    pndlab metrics      metrics of a joint PND
    pndlab simulate     trajectory simulation of the pulsed resonator
    pndlab sweep        per-power pipeline and slope fits

Every command accepts --config <json> holding its config block; explicit flags
override the file. Exit codes: 0 ok, 1 invalid input, 2 numerical failure.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import pandas as pd
from pydantic import ValidationError

from pndlab import io, pipeline, settings
from pndlab.errors import PndLabError, error_payload, exit_code_for
from pndlab.forward import eta_from_loss_db
from pndlab.models import (
    FitConfig,
    Plane,
    ReconstructConfig,
    ReconstructMode,
    SimulateConfig,
    SourceKind,
    SweepConfig,
    SweepMode,
    SynthConfig,
)

logger = logging.getLogger(__name__)


# ============================================================
# HELPERS
# ============================================================

def _load_config(args: argparse.Namespace) -> Dict[str, Any]:
    if getattr(args, "config", None):
        return io.read_json(args.config)
    return {}


def _set(data: Dict[str, Any], dotted: str, value: Any) -> None:
    """Apply a flag onto a nested config dict; None means the flag was not given."""
    if value is None:
        return
    node = data
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
    node[keys[-1]] = value


def _eta_flag(args: argparse.Namespace) -> Optional[float]:
    if getattr(args, "eta", None) is not None:
        return args.eta
    if getattr(args, "loss_db", None) is not None:
        return eta_from_loss_db(args.loss_db)
    return None


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out) if args.out else settings.OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    return out


def _finish(args: argparse.Namespace, prov, outputs: List[Path], started: float) -> None:
    prov.wall_time_s = round(time.perf_counter() - started, 3)
    prov.outputs = [str(p) for p in outputs]
    sidecar = _out_dir(args) / f"{args.command}.provenance.json"
    io.write_json(prov, sidecar)
    for path in outputs:
        print(path)


def _add_loss_flags(parser: argparse.ArgumentParser, what: str) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--eta", type=float, help=f"{what} as a linear transmission")
    group.add_argument("--loss-db", type=float, help=f"{what} as a loss in dB")


# ============================================================
# COMMANDS
# ============================================================

def cmd_synth(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    data = _load_config(args)
    _set(data, "source.kind", args.source)
    _set(data, "source.r", args.r)
    _set(data, "source.n_th_s", args.n_th_s)
    _set(data, "source.n_th_i", args.n_th_i)
    _set(data, "source.mean", args.mean)
    _set(data, "source.power", args.power)
    _set(data, "ladder.eta_exp", _eta_flag(args))
    _set(data, "ladder.steps", args.steps)
    _set(data, "trials", args.trials)
    _set(data, "trunc", args.trunc)
    _set(data, "seed", args.seed)
    if args.exact:
        data["exact"] = True
    result = pipeline.synth(SynthConfig.model_validate(data))

    out = _out_dir(args)
    outputs = [
        io.write_click_table(result.table, out / "clicks.csv"),
        io.write_pnd(result.truth, out / "truth_pnd.csv"),
    ]
    _finish(args, result.provenance, outputs, started)


def cmd_reconstruct(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    data = _load_config(args)
    _set(data, "em.trunc", args.trunc)
    _set(data, "em.rel_tol", args.rel_tol)
    _set(data, "em.max_iters", args.max_iters)
    _set(data, "em.window", args.window)
    _set(data, "plane.plane", args.plane)
    _set(data, "plane.eta_chip", args.eta_chip)
    _set(data, "plane.eta_exp", _eta_flag(args))
    _set(data, "mode", args.mode)
    config = ReconstructConfig.model_validate(data)
    result = pipeline.reconstruct(io.read_click_table(args.table), config)

    out = _out_dir(args)
    outputs = [io.write_pnd(result.pnd, out / "pnd.csv"), io.write_json(result.diagnostics, out / "diagnostics.json")]
    _finish(args, pipeline.provenance("reconstruct", config), outputs, started)


def cmd_fit(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    data = _load_config(args)
    _set(data, "grid.points_per_axis", args.points_per_axis)
    config = FitConfig.model_validate(data)
    report = pipeline.fit(io.read_pnd(args.pnd), config)
    outputs = [io.write_json(report, _out_dir(args) / "metrics.json")]
    _finish(args, pipeline.provenance("fit", config), outputs, started)


def cmd_metrics(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    report = pipeline.metrics(io.read_pnd(args.pnd))
    outputs = [io.write_json(report, _out_dir(args) / "metrics.json")]
    _finish(args, pipeline.provenance("metrics", {"pnd": str(args.pnd)}), outputs, started)


def cmd_simulate(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    data = _load_config(args)
    if args.params:
        data["resonator"] = io.read_json(args.params)
    _set(data, "pulse.power", args.power)
    _set(data, "pulse.detuning", args.detuning)
    _set(data, "n_traj", args.n_traj)
    _set(data, "nf", args.nf)
    _set(data, "hist_trunc", args.hist_trunc)
    _set(data, "dt", args.dt)
    _set(data, "seed", args.seed)
    if args.no_shifts:
        data["spm_on"] = False
        data["xpm_on"] = False
    result = pipeline.simulate(SimulateConfig.model_validate(data), workers=args.workers)

    out = _out_dir(args)
    outputs = [
        io.write_trajectories(result.record, out / "trajectories.csv"),
        io.write_pnd(result.pnd, out / "sim_pnd.csv"),
        io.write_json(result.summary(), out / "simulation.json"),
    ]
    _finish(args, result.provenance, outputs, started)


def cmd_sweep(args: argparse.Namespace) -> None:
    started = time.perf_counter()
    data = _load_config(args)
    _set(data, "powers", args.powers)
    _set(data, "mode", args.mode)
    _set(data, "trials", args.trials)
    _set(data, "seed", args.seed)
    _set(data, "ladder.eta_exp", _eta_flag(args))
    _set(data, "simulate.n_traj", args.n_traj)
    _set(data, "simulate.nf", args.nf)
    if args.exact:
        data["exact"] = True
    result = pipeline.sweep(SweepConfig.model_validate(data), workers=args.workers)

    out = _out_dir(args)
    r_path = out / "r_vs_power.csv"
    nrf_path = out / "nrf_vs_ntot.csv"
    pd.DataFrame(result.r_vs_power).to_csv(r_path, index=False)
    pd.DataFrame(result.nrf_vs_ntot).to_csv(nrf_path, index=False)
    outputs = [r_path, nrf_path, io.write_json(result.slopes, out / "slopes.json")]
    _finish(args, result.provenance, outputs, started)


# ============================================================
# PARSER
# ============================================================

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pndlab", description=__doc__.split("\n")[1].strip())
    parser.add_argument("--log-level", default=settings.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with the command's config block")
        p.add_argument("--out", help=f"output directory (default {settings.OUTPUT_DIR})")
        p.set_defaults(handler=handler)
        return p

    p = command("synth", cmd_synth, "sample a click table")
    p.add_argument("--source", choices=[k.value for k in SourceKind])
    p.add_argument("--r", type=float)
    p.add_argument("--n-th-s", type=float)
    p.add_argument("--n-th-i", type=float)
    p.add_argument("--mean", type=float, help="mean photons of coherent/thermal sources")
    p.add_argument("--power", type=float, help="pump power (mW) for the scaled source")
    p.add_argument("--steps", type=int, help="number of VOA settings")
    p.add_argument("--trials", type=int)
    p.add_argument("--trunc", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true", help="rounded expectations instead of sampling")
    _add_loss_flags(p, "resonator-to-detector efficiency")

    p = command("reconstruct", cmd_reconstruct, "EM reconstruction of a click table")
    p.add_argument("table", help="click table CSV")
    p.add_argument("--trunc", type=int)
    p.add_argument("--rel-tol", type=float)
    p.add_argument("--max-iters", type=int)
    p.add_argument("--window", type=int, help="iterations the EM stop test looks back over")
    p.add_argument("--plane", choices=[k.value for k in Plane])
    p.add_argument("--eta-chip", type=float)
    p.add_argument("--mode", choices=[k.value for k in ReconstructMode])
    _add_loss_flags(p, "resonator-to-detector efficiency (detector plane)")

    p = command("fit", cmd_fit, "fit the source model to a joint PND")
    p.add_argument("pnd", help="PND CSV (n,k,prob)")
    p.add_argument("--points-per-axis", type=int)

    p = command("metrics", cmd_metrics, "metrics of a joint PND")
    p.add_argument("pnd", help="PND CSV (n,k,prob)")

    p = command("simulate", cmd_simulate, "trajectory simulation")
    p.add_argument("params", nargs="?", help="resonator parameter JSON")
    p.add_argument("--power", type=float)
    p.add_argument("--detuning", type=float)
    p.add_argument("--n-traj", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--hist-trunc", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--no-shifts", action="store_true", help="switch off SPM and XPM")
    p.add_argument("--workers", type=int)

    p = command("sweep", cmd_sweep, "per-power pipeline and slope fits")
    p.add_argument("--powers", type=float, nargs="+")
    p.add_argument("--mode", choices=[k.value for k in SweepMode])
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--n-traj", type=int)
    p.add_argument("--nf", type=int)
    p.add_argument("--workers", type=int)
    _add_loss_flags(p, "resonator-to-detector efficiency")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    try:
        args.handler(args)
    except (PndLabError, ValidationError) as e:
        code = exit_code_for(e)
        logger.error(f"❌ {args.command} failed: {e}")
        print(json.dumps(error_payload(e, args.command)), file=sys.stderr)
        return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
