import json

import numpy as np
import pytest

from pndlab import io
from pndlab.dynamics.models import ResonatorParams, TrajectoryRecord
from pndlab.em import EmConfig
from pndlab.errors import ConfigError
from pndlab.fock import JointPnd, Pnd, source_model_pnd, thermal_pnd
from pndlab.forward import EfficiencyLadder, exact_click_table


def test_click_table_csv(tmp_path):
    table = exact_click_table(source_model_pnd(0.5, 0.1, 0.1, 6), EfficiencyLadder(etas=[0.2, 0.4]), 1000)
    path = io.write_click_table(table, tmp_path / "clicks.csv")
    assert path.read_text().splitlines()[0] == "eta,trials,c00,c01,c10,c11"
    assert io.read_click_table(path) == table


def test_joint_pnd_csv(tmp_path):
    p = source_model_pnd(0.5, 0.1, 0.1, 4)
    path = io.write_pnd(p, tmp_path / "pnd.csv")
    assert path.read_text().splitlines()[0] == "n,k,prob"
    loaded = io.read_joint_pnd(path)
    assert isinstance(loaded, JointPnd)
    assert np.allclose(loaded.probs, p.probs)


def test_single_mode_pnd_csv(tmp_path):
    path = io.write_pnd(thermal_pnd(0.5, 5), tmp_path / "single.csv")
    assert isinstance(io.read_pnd(path), Pnd)
    with pytest.raises(ConfigError):
        io.read_joint_pnd(path)


def test_records_accept_sparse_grids():
    p = io.pnd_from_records([{"n": 0, "k": 0, "prob": 0.5}, {"n": 2, "k": 1, "prob": 0.5}])
    assert p.truncation == 2
    assert p.probs[2, 1] == pytest.approx(0.5)


def test_trajectory_csv(tmp_path):
    record = TrajectoryRecord(counts=[(0, 1), (2, 2), (1, 0)], seed=9, nf=4)
    path = io.write_trajectories(record, tmp_path / "traj.csv")
    assert path.read_text().splitlines()[0] == "traj_id,n_s_clicks,n_i_clicks"
    assert io.read_trajectories(path).counts == record.counts


def test_missing_and_malformed_inputs(tmp_path):
    with pytest.raises(ConfigError):
        io.read_click_table(tmp_path / "absent.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("eta,trials\n0.5,10\n")
    with pytest.raises(ConfigError):
        io.read_click_table(bad)
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        io.read_json(broken)


def test_json_models(tmp_path):
    path = io.write_json(EmConfig(trunc=7), tmp_path / "em.json")
    assert json.loads(path.read_text())["trunc"] == 7
    assert io.read_model(path, EmConfig).trunc == 7
    invalid = io.write_json({"gamma_tot_p": -1.0}, tmp_path / "res.json")
    with pytest.raises(ConfigError):
        io.read_model(invalid, ResonatorParams)
