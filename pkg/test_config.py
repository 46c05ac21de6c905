#!/usr/bin/env python
"""
Configuration and persistence tests
"""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import json
import math

import numpy as np
import pandas as pd
import pytest
import yaml

from core.exceptions import ConfigError
from experiments.config import (ExperimentConfig, config_hash, load_config, parse_epsilon, parse_seed,
                                resolve_threads)
from experiments.persistence import ResultWriter, RunLedger, build_header, read_csv


def write_yaml(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


@pytest.mark.parametrize("entry", [8, 0.125, "1/8", "0.125"])
def test_epsilon_entries(entry):
    assert parse_epsilon(entry) == 8


def test_bad_epsilon_entries():
    with pytest.raises(ValueError):
        parse_epsilon(0.3)
    with pytest.raises(ValueError):
        parse_epsilon("1/x")


def test_seed_is_hex():
    assert parse_seed("0x5EED") == 0x5EED
    assert parse_seed("ff") == 255
    assert parse_seed(12) == 12
    with pytest.raises(ValueError):
        parse_seed("zz")


def test_base_config_loads():
    cfg = load_config()
    assert cfg.epsilons == [4, 8, 16]
    assert cfg.seed == 0x5EED
    assert cfg.epsilon_values == [0.25, 0.125, 0.0625]


def test_overrides_and_file_merge(tmp_path):
    path = write_yaml(tmp_path / "run.yaml", {"eigen": {"count": 4}, "epsilons": ["1/2"]})
    cfg = load_config(path, {"output_dir": str(tmp_path / "out")})
    assert cfg.eigen.count == 4
    assert cfg.eigen.inclusion_modes == 60
    assert cfg.epsilons == [2]
    assert cfg.output_dir == str(tmp_path / "out")


def test_missing_file_names_the_path(tmp_path):
    missing = tmp_path / "nope.yaml"
    with pytest.raises(ConfigError) as info:
        load_config(missing)
    assert str(missing) in str(info.value)


@pytest.mark.parametrize("data", [
    {"eigen": {"count": 0}},
    {"eigen": {"cuont": 3}},
    {"contrast": {"law": "fixed"}},
    {"epsilons": ["1/64"], "subcells": 8},
    {"geometry": {"dim": 2, "lower": [0.25], "upper": [0.75]}},
])
def test_invalid_configs(tmp_path, data):
    with pytest.raises(ConfigError):
        load_config(write_yaml(tmp_path / "bad.yaml", data))


def test_contrast_laws():
    cfg = ExperimentConfig.model_validate({"contrast": {"law": "power", "p": 3.0}})
    assert cfg.contrast.delta_for(0.5) == pytest.approx(0.125)
    cfg = ExperimentConfig.model_validate({"contrast": {"law": "fixed", "delta": 0.01}})
    assert cfg.contrast.delta_for(0.5) == pytest.approx(0.01)


def test_config_hash_is_stable():
    a = ExperimentConfig()
    b = ExperimentConfig.model_validate(a.model_dump())
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(ExperimentConfig(seed=1))


def test_thread_resolution(monkeypatch):
    cfg = ExperimentConfig(threads=3)
    monkeypatch.delenv("HOMOGLAB_THREADS", raising=False)
    assert resolve_threads(2, cfg) == 2
    assert resolve_threads(None, cfg) == 3
    monkeypatch.setenv("HOMOGLAB_THREADS", "5")
    assert resolve_threads(None, cfg) == 5
    monkeypatch.setenv("HOMOGLAB_THREADS", "many")
    with pytest.raises(ConfigError):
        resolve_threads(None, cfg)
    with pytest.raises(ConfigError):
        resolve_threads(0, cfg)


def test_result_writer_headers_and_values(tmp_path):
    cfg = ExperimentConfig()
    writer = ResultWriter(tmp_path, build_header(cfg, "sweep"))
    frame = pd.DataFrame({"epsilon": [0.25, 0.125], "error": [1 / 3, math.nan]})
    path = writer.write_csv("rates.csv", frame)
    lines = path.read_text().splitlines()
    assert lines[0] == "# homoglab sweep"
    assert any(line.startswith("# config_hash: ") for line in lines)
    back = read_csv(path)
    assert back["error"][0] == 1 / 3
    assert np.isnan(back["error"][1])

    json_path = writer.write_json("slopes.json", {"slope": math.nan, "values": np.array([1.0, math.inf])})
    body = json.loads(json_path.read_text())
    assert body["slope"] is None
    assert body["values"] == [1.0, "inf"]
    assert body["header"]["seed"] == "0x5EED"
    assert [p.name for p in writer.written] == ["rates.csv", "slopes.json"]


def test_run_ledger(tmp_path):
    ledger = RunLedger(tmp_path / "runs.jsonl")
    assert ledger.entries() == []
    ledger.log_stage("sweep", "ok", {"epsilon": np.float64(0.25)})
    ledger.log_stage("sweep", "failed")
    entries = ledger.entries()
    assert [e["status"] for e in entries] == ["ok", "failed"]
    assert entries[0]["details"]["epsilon"] == 0.25
