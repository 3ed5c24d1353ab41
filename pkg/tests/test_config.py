"""Tests for experiment configuration parsing and seed resolution."""

import numpy as np
import pytest

from metabayes.config import (
    SEED_ENV_VAR,
    CellConfig,
    ExperimentConfig,
    ModelSettings,
    load_config,
    parse_experiment,
    resolve_seeds,
)
from metabayes.data import CAUCHY_DEFAULT, SPLIT_PLANS
from metabayes.exceptions import InvalidConfig
from metabayes.serialize import canonical_hash, canonical_json
from metabayes.trainer import OptimHyper


class TestLoadConfig:
    def test_reads_json_object(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"seeds": [1, 2]}')
        assert load_config(path) == {"seeds": [1, 2]}

    def test_missing_file(self, tmp_path):
        with pytest.raises(InvalidConfig):
            load_config(tmp_path / "nope.json")

    def test_bad_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{seeds: }")
        with pytest.raises(InvalidConfig):
            load_config(path)

    def test_non_object_root(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(InvalidConfig):
            load_config(path)


class TestModelSettings:
    def test_defaults(self):
        m = ModelSettings()
        assert m.hidden == (32, 32)
        assert m.n_latent == 32
        assert m.activation == "tanh"
        assert m.learn_lambda0 is False
        assert m.learn_noise is True

    def test_validation(self):
        with pytest.raises(InvalidConfig):
            ModelSettings(hidden=(0,))
        with pytest.raises(InvalidConfig):
            ModelSettings(n_latent=0)
        with pytest.raises(InvalidConfig):
            ModelSettings(activation="sigmoid")

    def test_from_dict_ignores_method_key(self):
        m = ModelSettings.from_dict({"method": "BLR-PR-FC", "n_latent": 8})
        assert m.n_latent == 8
        with pytest.raises(InvalidConfig):
            ModelSettings.from_dict({"layers": 3})

    def test_round_trip(self):
        m = ModelSettings(hidden=(4, 4), n_latent=2, activation="relu")
        assert ModelSettings.from_dict(m.to_dict()) == m


class TestParseExperiment:
    def test_empty_config_defaults(self):
        exp = parse_experiment({})
        assert exp.datasets == ("sinusoid-easy",)
        assert exp.methods == ("BLR-PR-FC",)
        assert exp.seeds == (0, 1, 2)
        assert exp.output_dir == "runs"
        assert exp.model == ModelSettings()
        assert exp.trainer == OptimHyper()
        assert exp.splits["sinusoid-easy"] == SPLIT_PLANS["sinusoid-easy"]

    def test_lists_and_overrides(self):
        exp = parse_experiment({
            "dataset": {
                "name": ["sinusoid-easy", "sinusoid-hard"],
                "split": {"n_test_tasks": 10},
            },
            "model": {"method": ["BLR-PR-FC", "GPR-SE-IN"], "n_latent": 4},
            "trainer": {"max_steps": 100},
            "seeds": [5],
            "output_dir": "out",
        })
        assert exp.datasets == ("sinusoid-easy", "sinusoid-hard")
        assert exp.methods == ("BLR-PR-FC", "GPR-SE-IN")
        assert exp.splits["sinusoid-easy"].n_test_tasks == 10
        assert exp.splits["sinusoid-easy"].train_samples == 5
        assert exp.trainer.max_steps == 100
        assert exp.model.n_latent == 4
        assert exp.seeds == (5,)
        assert exp.output_dir == "out"

    def test_scalar_forms(self):
        exp = parse_experiment({
            "dataset": {"name": "cauchy"},
            "model": {"method": "GPR-DL-SN"},
            "seeds": 7,
        })
        assert exp.datasets == ("cauchy",)
        assert exp.dataset_configs["cauchy"] == CAUCHY_DEFAULT
        assert exp.methods == ("GPR-DL-SN",)
        assert exp.seeds == (7,)

    def test_dataset_config_override(self):
        exp = parse_experiment({
            "dataset": {"name": "cauchy", "config": {"noise_std": 0.3}},
        })
        assert exp.dataset_configs["cauchy"].noise_std == 0.3

    def test_unknown_keys_rejected_everywhere(self):
        with pytest.raises(InvalidConfig):
            parse_experiment({"optimizer": {}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"dataset": {"title": "x"}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"dataset": {"name": "volterra"}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"dataset": {"config": {"wavelength": 1}}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"dataset": {"split": {"n_folds": 2}}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"model": {"method": "BLR-MAP"}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"model": {"depth": 2}})
        with pytest.raises(InvalidConfig):
            parse_experiment({"trainer": {"momentum": 0.9}})

    def test_seed_validation(self):
        with pytest.raises(InvalidConfig):
            parse_experiment({"seeds": []})
        with pytest.raises(InvalidConfig):
            parse_experiment({"seeds": ["a"]})
        with pytest.raises(InvalidConfig):
            parse_experiment({"output_dir": 3})

    def test_cells_method_major_order(self):
        exp = parse_experiment({
            "dataset": {"name": ["sinusoid-easy", "cauchy"]},
            "model": {"method": ["BLR-PR-FC", "GPR-SE-IN"]},
            "seeds": [0, 1],
        })
        cells = exp.cells()
        combos = [(c.method, c.dataset, c.seed) for c in cells]
        assert combos == [
            ("BLR-PR-FC", "sinusoid-easy", 0),
            ("BLR-PR-FC", "sinusoid-easy", 1),
            ("BLR-PR-FC", "cauchy", 0),
            ("BLR-PR-FC", "cauchy", 1),
            ("GPR-SE-IN", "sinusoid-easy", 0),
            ("GPR-SE-IN", "sinusoid-easy", 1),
            ("GPR-SE-IN", "cauchy", 0),
            ("GPR-SE-IN", "cauchy", 1),
        ]

    def test_cells_seed_override(self):
        exp = parse_experiment({})
        cells = exp.cells(seeds=(9,))
        assert [c.seed for c in cells] == [9]


class TestCellConfig:
    def _cell(self, seed: int) -> CellConfig:
        exp = parse_experiment({"seeds": [seed]})
        return exp.cells()[0]

    def test_hash_excludes_seed(self):
        assert self._cell(0).config_hash == self._cell(123).config_hash

    def test_hash_tracks_settings(self):
        base = self._cell(0)
        other = parse_experiment({"model": {"n_latent": 2}}).cells()[0]
        assert base.config_hash != other.config_hash

    def test_to_dict_structure(self):
        d = self._cell(0).to_dict()
        assert set(d) == {"dataset", "method", "model", "trainer"}
        assert set(d["dataset"]) == {"name", "config", "split"}
        assert "seed" not in canonical_json(d)


class TestCanonicalSerialization:
    def test_canonical_json_is_stable(self):
        a = canonical_json({"b": 1, "a": [1.5, 2]})
        b = canonical_json({"a": [1.5, 2], "b": 1})
        assert a == b == '{"a":[1.5,2],"b":1}'

    def test_canonical_hash_properties(self):
        h = canonical_hash({"x": 1})
        assert len(h) == 12
        assert h == canonical_hash({"x": 1})
        assert h != canonical_hash({"x": 2})

    def test_nan_rejected(self):
        with pytest.raises(ValueError):
            canonical_json({"x": float("nan")})


class TestResolveSeeds:
    def test_precedence(self):
        exp = parse_experiment({"seeds": [1, 2]})
        assert resolve_seeds(exp, env={}) == (1, 2)
        assert resolve_seeds(exp, flag_seeds=[5, 6], env={}) == (5, 6)
        assert resolve_seeds(exp, flag_seeds=[5, 6],
                             env={SEED_ENV_VAR: "9"}) == (9,)
        assert resolve_seeds(exp, env={SEED_ENV_VAR: "4"}) == (4,)

    def test_bad_env_value(self):
        exp = parse_experiment({})
        with pytest.raises(InvalidConfig):
            resolve_seeds(exp, env={SEED_ENV_VAR: "three"})

    def test_reads_process_environment(self, monkeypatch):
        exp = parse_experiment({"seeds": [1]})
        monkeypatch.setenv(SEED_ENV_VAR, "42")
        assert resolve_seeds(exp) == (42,)
        monkeypatch.delenv(SEED_ENV_VAR)
        assert resolve_seeds(exp) == (1,)
