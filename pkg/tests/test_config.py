import json

import pytest

from vderain.config import (DEFAULTS, ConfigError, echo_config,
                            langevin_config, load_config, network_configs,
                            parse_override, prior_config, rain_recipe,
                            train_config)


class TestDefaults:
    def test_load_without_file(self):
        cfg = load_config()
        assert cfg["seed"] == 0
        assert cfg["prior"]["rho"] == 0.5
        assert cfg["train"]["epochs"] == 60
        assert cfg["train"]["pretrain_epochs"] == 5
        assert cfg["train"]["lr_decay_epoch"] == 30
        assert cfg["langevin"]["steps"] == 5

    def test_defaults_not_mutated(self):
        cfg = load_config(overrides=["seed=9"])
        assert cfg["seed"] == 9
        assert DEFAULTS["seed"] == 0


class TestFileMerge:
    def test_file_overrides_defaults(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"prior": {"rho": 2.0}, "seed": 4}))
        cfg = load_config(p)
        assert cfg["prior"]["rho"] == 2.0
        assert cfg["seed"] == 4
        assert cfg["prior"]["gamma"] == [1.0, 1.0, 2.0]

    def test_unknown_key_rejected(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"prior": {"rho_typo": 1.0}}))
        with pytest.raises(ConfigError, match="rho_typo"):
            load_config(p)

    def test_type_mismatch_rejected(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"train": {"epochs": "sixty"}}))
        with pytest.raises(ConfigError):
            load_config(p)

    def test_bool_is_not_int(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"train": {"epochs": True}}))
        with pytest.raises(ConfigError):
            load_config(p)

    def test_enum_checked(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"train": {"mode": "totally-supervised"}}))
        with pytest.raises(ConfigError):
            load_config(p)

    def test_schema_version_checked(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"schema_version": 2}))
        with pytest.raises(ConfigError):
            load_config(p)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text("{nope")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.json")

    def test_path_field_accepts_string_only(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"data": {"labeled_dir": 5}}))
        with pytest.raises(ConfigError):
            load_config(p)


class TestOverrides:
    def test_parse_json_values(self):
        assert parse_override("prior.rho=2.5") == ("prior.rho", 2.5)
        assert parse_override("train.mode=semi") == ("train.mode", "semi")
        assert parse_override("langevin.noise_enabled=false") == \
            ("langevin.noise_enabled", False)
        assert parse_override("prior.gamma=[1,1,3]") == ("prior.gamma", [1, 1, 3])

    def test_missing_equals(self):
        with pytest.raises(ConfigError):
            parse_override("prior.rho")

    def test_override_applies_after_file(self, tmp_path):
        p = tmp_path / "run.json"
        p.write_text(json.dumps({"prior": {"rho": 2.0}}))
        cfg = load_config(p, overrides=["prior.rho=0.25"])
        assert cfg["prior"]["rho"] == 0.25

    def test_unknown_override_key(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["prior.rho_typo=1"])

    def test_override_cannot_target_section(self):
        with pytest.raises(ConfigError):
            load_config(overrides=['prior={"rho": 1}'])

    def test_bad_type_in_override(self):
        with pytest.raises(ConfigError):
            load_config(overrides=["train.epochs=sixty"])


class TestEcho:
    def test_echo_is_a_fixed_point(self, tmp_path):
        cfg = load_config(overrides=["prior.rho=1.25", "seed=3",
                                     "data.labeled_dir=/x"])
        out = tmp_path / "echo.json"
        echo_config(cfg, out)
        again = load_config(out)
        assert again == cfg


class TestTypedViews:
    def test_views_mirror_dict(self):
        cfg = load_config(overrides=[
            "prior.rho=1.5", "langevin.delta=0.02", "train.mode=baseline2",
            "derainer.width=16", "emission.seed_channels=32",
        ])
        assert prior_config(cfg).rho == 1.5
        assert langevin_config(cfg).delta == 0.02
        tc = train_config(cfg)
        assert tc.mode == "baseline2"
        assert tc.prior.rho == 1.5
        nets = network_configs(cfg)
        assert nets.derainer.width == 16
        assert nets.emission.seed_channels == 32

    def test_rain_recipe_seed_falls_back_to_global(self):
        cfg = load_config(overrides=["seed=77"])
        assert rain_recipe(cfg).seed == 77
        cfg2 = load_config(overrides=["seed=77", "rain.recipe.seed=5"])
        assert rain_recipe(cfg2).seed == 5

    def test_dataclass_validation_surfaces(self):
        cfg = load_config(overrides=["prior.rho=-1.0"])
        with pytest.raises(ValueError):
            prior_config(cfg)
