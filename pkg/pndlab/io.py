"""
File formats
============
- click table CSV:   eta,trials,c00,c01,c10,c11
- PND CSV:           n,k,prob (joint) or n,prob (single mode)
- trajectory CSV:    traj_id,n_s_clicks,n_i_clicks
- JSON:              diagnostics, metrics, provenance and parameter files
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from pndlab.dynamics.models import TrajectoryRecord
from pndlab.errors import ConfigError
from pndlab.fock import AnyPnd, JointPnd, Pnd
from pndlab.forward import ClickRow, ClickTable

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
ModelT = TypeVar("ModelT", bound=BaseModel)

CLICK_COLUMNS = ["eta", "trials", "c00", "c01", "c10", "c11"]
TRAJECTORY_COLUMNS = ["traj_id", "n_s_clicks", "n_i_clicks"]


def _read_csv(path: PathLike, required) -> pd.DataFrame:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        frame = pd.read_csv(path)
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise ConfigError(f"{path} is missing columns {missing}")
    return frame


def _prepare(path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# ============================================================
# CLICK TABLES
# ============================================================

def write_click_table(table: ClickTable, path: PathLike) -> Path:
    path = _prepare(path)
    frame = pd.DataFrame([row.model_dump() for row in table.rows], columns=CLICK_COLUMNS)
    frame.to_csv(path, index=False)
    return path


def read_click_table(path: PathLike) -> ClickTable:
    frame = _read_csv(path, CLICK_COLUMNS)
    rows = [
        ClickRow(
            eta=float(r.eta),
            trials=int(r.trials),
            c00=int(r.c00),
            c01=int(r.c01),
            c10=int(r.c10),
            c11=int(r.c11),
        )
        for r in frame.itertuples(index=False)
    ]
    return ClickTable(rows=rows)


# ============================================================
# DISTRIBUTIONS
# ============================================================

def pnd_records(p: AnyPnd) -> list:
    if isinstance(p, JointPnd):
        n, k = np.indices(p.probs.shape)
        return [
            {"n": int(a), "k": int(b), "prob": float(c)}
            for a, b, c in zip(n.ravel(), k.ravel(), p.probs.ravel())
        ]
    return [{"n": int(a), "prob": float(c)} for a, c in enumerate(p.probs)]


def pnd_from_records(records: list) -> AnyPnd:
    frame = pd.DataFrame(records)
    return _pnd_from_frame(frame, "request body")


def _pnd_from_frame(frame: pd.DataFrame, where: str) -> AnyPnd:
    if "n" not in frame.columns or "prob" not in frame.columns:
        raise ConfigError(f"{where} must provide n and prob columns")
    if frame.empty:
        raise ConfigError(f"{where} holds no probabilities")
    n = frame["n"].to_numpy(dtype=int)
    probs = frame["prob"].to_numpy(dtype=float)
    if np.any(n < 0):
        raise ConfigError(f"{where} has negative photon numbers")
    if "k" not in frame.columns:
        values = np.zeros(n.max() + 1)
        np.add.at(values, n, probs)
        return Pnd.normalized(values)
    k = frame["k"].to_numpy(dtype=int)
    if np.any(k < 0):
        raise ConfigError(f"{where} has negative photon numbers")
    size = max(n.max(), k.max()) + 1
    grid = np.zeros((size, size))
    np.add.at(grid, (n, k), probs)
    return JointPnd.normalized(grid)


def write_pnd(p: AnyPnd, path: PathLike) -> Path:
    path = _prepare(path)
    pd.DataFrame(pnd_records(p)).to_csv(path, index=False)
    return path


def read_pnd(path: PathLike) -> AnyPnd:
    frame = _read_csv(path, ["n", "prob"])
    return _pnd_from_frame(frame, str(path))


def read_joint_pnd(path: PathLike) -> JointPnd:
    p = read_pnd(path)
    if not isinstance(p, JointPnd):
        raise ConfigError(f"{path} holds a single-mode distribution; a joint n,k,prob grid is required")
    return p


# ============================================================
# TRAJECTORIES
# ============================================================

def write_trajectories(rec: TrajectoryRecord, path: PathLike) -> Path:
    path = _prepare(path)
    counts = rec.as_array()
    frame = pd.DataFrame({
        "traj_id": np.arange(counts.shape[0]),
        "n_s_clicks": counts[:, 0],
        "n_i_clicks": counts[:, 1],
    })
    frame.to_csv(path, index=False)
    return path


def read_trajectories(path: PathLike, seed: int = 0, nf: int = 1) -> TrajectoryRecord:
    frame = _read_csv(path, TRAJECTORY_COLUMNS).sort_values("traj_id")
    counts = list(zip(frame["n_s_clicks"].astype(int).tolist(), frame["n_i_clicks"].astype(int).tolist()))
    return TrajectoryRecord(counts=counts, seed=seed, nf=nf)


# ============================================================
# JSON
# ============================================================

def write_json(payload: Union[BaseModel, Dict[str, Any]], path: PathLike) -> Path:
    path = _prepare(path)
    data = payload.model_dump(mode="json") if isinstance(payload, BaseModel) else payload
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def read_json(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"input file not found: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e


def read_model(path: PathLike, model: Type[ModelT]) -> ModelT:
    """Load a JSON file into a pydantic model; validation errors surface as ConfigError."""
    try:
        return model.model_validate(read_json(path))
    except ValidationError as e:
        raise ConfigError(f"{path}: {e}") from e
