#!/usr/bin/env python3
"""
Tests for configuration records, the key = value file format and overrides.
"""

import os
import sys

import pytest
from pydantic import ValidationError

# Add src directory to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from config import (SEED_ENV_VAR, RiceConfig, TrainConfig, apply_overrides, dump_config,
                    load_config, parse_config_text, parse_set_arguments, save_config)
from exceptions import ConfigError


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def test_defaults():
    cfg = TrainConfig()
    assert (cfg.crop, cfg.batch) == (256, 4)
    assert (cfg.lr_fred, cfg.lr_rice) == (1e-4, 3e-4)
    assert (cfg.iters_fred, cfg.iters_rice) == (2000, 1000)
    assert (cfg.weights_deblur.beta, cfg.weights_deblur.gamma) == (0.1, 0.01)
    assert cfg.weights_illum.alpha == 1.5
    assert cfg.weights_illum.exposure_target == 0.6
    assert cfg.rice.epsilon_r == 0.05
    assert cfg.fred.levels == cfg.fred.supervision_scales == 3


def test_parse_config_text_skips_comments_and_blanks():
    text = "# header\n\ncrop = 64   # inline\nblur.kernel_kind=motion\n"
    assert parse_config_text(text) == {"crop": "64", "blur.kernel_kind": "motion"}
    with pytest.raises(ConfigError):
        parse_config_text("crop 64\n")


def test_load_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "crop = 64\n"
        "weights_deblur.beta = 0.2\n"
        "blur.sigma_range = 1.0, 2.0\n"
        "ablation.use_aci = false\n"
        "fred.channel_multipliers = 1, 2, 2\n",
        encoding="utf-8",
    )
    cfg = load_config(path)
    assert cfg.crop == 64
    assert cfg.weights_deblur.beta == 0.2
    assert cfg.blur.sigma_range == (1.0, 2.0)
    assert cfg.fred.channel_multipliers == (1, 2, 2)
    assert cfg.ablation.use_aci is False
    assert cfg.fred.use_aci is False


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as exc_info:
        apply_overrides(TrainConfig(), {"weights_deblur.delta": "1"})
    assert exc_info.value.key == "weights_deblur.delta"
    assert "weights_deblur.delta" in str(exc_info.value)

    with pytest.raises(ConfigError):
        apply_overrides(TrainConfig(), {"fred": "1"})


def test_bad_values_are_config_errors():
    with pytest.raises(ConfigError):
        apply_overrides(TrainConfig(), {"crop": "big"})
    with pytest.raises(ConfigError):
        apply_overrides(TrainConfig(), {"ablation.use_cpu": "maybe"})
    with pytest.raises(ConfigError) as exc_info:
        apply_overrides(TrainConfig(), {"crop": "60"})
    assert "crop" in str(exc_info.value)


def test_crop_must_hold_the_largest_blur_kernel():
    with pytest.raises(ConfigError) as exc_info:
        apply_overrides(TrainConfig(), {"crop": "16"})
    assert exc_info.value.key == "crop"
    assert "blur.kernel_size_range" in str(exc_info.value)

    cfg = apply_overrides(TrainConfig(), {"crop": "16", "blur.kernel_size_range": "3, 15"})
    assert cfg.crop == 16


def test_network_switch_conflicting_with_ablation_is_rejected():
    for key, switch in (("fred.use_aci", "ablation.use_aci"), ("rice.use_cpu", "ablation.use_cpu")):
        with pytest.raises(ConfigError) as exc_info:
            apply_overrides(TrainConfig(), {key: "false"})
        assert exc_info.value.key == key
        assert switch in str(exc_info.value)

        cfg = apply_overrides(TrainConfig(), {key: "false", switch: "false"})
        assert cfg.ablation.model_dump()[switch.split(".")[1]] is False


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.cfg")


def test_set_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("crop = 64\nseed = 3\n", encoding="utf-8")
    cfg = load_config(path, ["crop=128", "lr_rice = 0.001"])
    assert cfg.crop == 128
    assert cfg.lr_rice == 0.001
    assert cfg.seed == 3
    with pytest.raises(ConfigError):
        parse_set_arguments(["crop"])


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "42")
    assert load_config().seed == 42
    assert load_config(None, ["seed=7"]).seed == 7


def test_dump_and_reload_round_trip(tmp_path):
    cfg = apply_overrides(TrainConfig(), {
        "crop": "64",
        "blur.kernel_kind": "mixed",
        "ablation.use_cpu": "false",
        "perceptual_extractor": "vgg16",
    })
    path = tmp_path / "dumped.cfg"
    save_config(cfg, path)
    assert load_config(path) == cfg
    assert "ablation.use_cpu = false" in dump_config(cfg)


def test_ablation_switches_reach_network_configs():
    cfg = TrainConfig(ablation={"use_aci": False, "use_cpu": False})
    assert cfg.fred.use_aci is False
    assert cfg.rice.use_cpu is False


def test_network_config_validation():
    with pytest.raises(ValidationError):
        RiceConfig(epsilon_r=0.0)
    with pytest.raises(ValidationError):
        TrainConfig(unknown_field=1)
