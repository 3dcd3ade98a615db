import pytest

from vfptrack import config as cfgmod
from vfptrack.config import Config, config_text, parse_config_text, paper_scale, resolve_layers
from vfptrack.errors import ConfigError
from vfptrack.mfpg import bottleneck_width


def test_default_constants_match_published_values():
    cfg = Config()
    assert cfg.loss_lambda_giou == 2.0
    assert cfg.loss_lambda_l1 == 5.0
    assert cfg.prompts_alpha == 0.2
    assert cfg.optim_lr == 4e-4
    assert cfg.optim_weight_decay == 1e-4


def test_paper_scale_projects_768_to_8_channels():
    cfg = paper_scale()
    assert cfg.encoder_dim == 768
    assert cfg.mfpg_beta == 96
    assert bottleneck_width(cfg.encoder_dim, cfg.mfpg_beta) == 8
    assert cfg.encoder_template == 128
    assert cfg.encoder_search == 256
    cfgmod.validate(cfg)


def test_text_round_trip():
    cfg = Config(prompts_alpha=0.4, train_steps=77, prompts_adaptive_alpha=True)
    text = config_text(cfg)
    back = parse_config_text(text)
    assert back == cfg


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown config key"):
        parse_config_text("prompts.bogus = 3\n")


def test_malformed_line_rejected():
    with pytest.raises(ConfigError, match="key = value"):
        parse_config_text("just words\n")


def test_bad_value_reports_key():
    with pytest.raises(ConfigError, match="prompts.alpha"):
        parse_config_text("prompts.alpha = banana\n")


def test_comments_and_blanks_ignored():
    cfg = parse_config_text("# a comment\n\nseed = 42  # trailing\n")
    assert cfg.seed == 42


def test_validation_rules():
    with pytest.raises(ConfigError):
        parse_config_text("prompts.alpha = 1.5\n")
    with pytest.raises(ConfigError):
        parse_config_text("encoder.dim = 66\n")  # not divisible by heads=4? 66/4
    with pytest.raises(ConfigError):
        parse_config_text("track.gamma = 2\n")
    with pytest.raises(ConfigError):
        parse_config_text("encoder.mfpg_layers = 9\n")  # outside 1..4


def test_resolve_layers():
    assert resolve_layers("all", 4) == (1, 2, 3, 4)
    assert resolve_layers("none", 4) == ()
    assert resolve_layers("1,3", 4) == (1, 3)
    assert resolve_layers("2-4", 6) == (2, 3, 4)
    assert resolve_layers("1-2,4", 4) == (1, 2, 4)
    with pytest.raises(ConfigError):
        resolve_layers("0-2", 4)
    with pytest.raises(ConfigError):
        resolve_layers("3-1", 4)


def test_base_override_merge():
    base = Config(train_steps=10)
    cfg = parse_config_text("seed = 7\n", base=base)
    assert cfg.train_steps == 10
    assert cfg.seed == 7
