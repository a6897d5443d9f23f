"""Experiment configuration: the key=value grammar, value typing,
defaults/file/override precedence, canonical rendering, and the chained
stage hashes that drive pipeline caching."""

import pytest

from fairadapt.config import (
    DEFAULTS,
    load_config,
    parse_config_text,
    parse_value,
    render_config,
    stage_hash,
)


class TestParseValue:
    def test_int(self):
        assert parse_value("42") == 42
        assert isinstance(parse_value("42"), int)

    def test_float(self):
        assert parse_value("1e-4") == pytest.approx(1e-4)
        assert parse_value("0.5") == 0.5

    def test_bool(self):
        assert parse_value("true") is True
        assert parse_value("False") is False

    def test_string_fallback(self):
        assert parse_value("uniform_group") == "uniform_group"
        assert parse_value("full") == "full"


class TestGrammar:
    def test_basic_lines(self):
        cfg = parse_config_text("seed = 3\nadapt.lr = 1e-2\n")
        assert cfg == {"seed": 3, "adapt.lr": 0.01}

    def test_comments_and_blanks(self):
        text = "# full-line comment\n\nseed = 5  # trailing\n"
        assert parse_config_text(text) == {"seed": 5}

    def test_missing_equals_cites_line(self):
        with pytest.raises(ValueError, match=r"custom\.cfg:2"):
            parse_config_text("seed = 1\nbroken line\n", source="custom.cfg")

    def test_unknown_key_cites_line(self):
        with pytest.raises(ValueError, match=r":1: unknown key 'sead'"):
            parse_config_text("sead = 1\n")

    def test_value_may_contain_equals(self):
        cfg = parse_config_text("out = runs/a=b\n")
        assert cfg["out"] == "runs/a=b"


class TestLoadConfig:
    def test_defaults_alone(self):
        cfg = load_config()
        assert cfg == DEFAULTS
        assert cfg is not DEFAULTS  # caller may mutate

    def test_file_overrides_defaults(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("adapt.epochs = 5\n")
        cfg = load_config(path)
        assert cfg["adapt.epochs"] == 5
        assert cfg["adapt.lr"] == DEFAULTS["adapt.lr"]

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "exp.cfg"
        path.write_text("seed = 1\nadapt.epochs = 5\n")
        cfg = load_config(path, overrides={"seed": 2})
        assert cfg["seed"] == 2
        assert cfg["adapt.epochs"] == 5

    def test_none_overrides_ignored(self):
        cfg = load_config(overrides={"seed": None})
        assert cfg["seed"] == DEFAULTS["seed"]

    def test_unknown_override_rejected(self):
        with pytest.raises(ValueError, match="unknown config key"):
            load_config(overrides={"adapt.dropout": 0.5})


class TestRender:
    def test_round_trip(self):
        cfg = load_config(overrides={"seed": 99, "adapt.target":
                                     "uniform_provider"})
        text = render_config(cfg)
        assert parse_config_text(text) == cfg

    def test_sorted_and_newline_terminated(self):
        text = render_config(load_config())
        lines = text.splitlines()
        assert lines == sorted(lines)
        assert text.endswith("\n")


class TestStageHash:
    def test_stable_for_same_config(self):
        cfg = load_config()
        assert stage_hash(cfg, "adapt") == stage_hash(dict(cfg), "adapt")

    def test_scoped_to_stage_keys(self):
        base = load_config()
        changed = load_config(overrides={"eval.k": 10})
        # an eval-only change must not invalidate upstream stages
        for stage in ("prepare", "pretrain", "adapt"):
            assert stage_hash(base, stage) == stage_hash(changed, stage)
        assert stage_hash(base, "evaluate") != stage_hash(changed, "evaluate")

    def test_upstream_change_cascades(self):
        base = load_config()
        changed = load_config(overrides={"seed": 1234})
        for stage in ("prepare", "pretrain", "adapt", "evaluate"):
            assert stage_hash(base, stage) != stage_hash(changed, stage)

    def test_adapt_change_spares_pretrain(self):
        base = load_config()
        changed = load_config(overrides={"adapt.lambda_acc": 0.1})
        assert stage_hash(base, "pretrain") == stage_hash(changed, "pretrain")
        assert stage_hash(base, "adapt") != stage_hash(changed, "adapt")

    def test_unknown_stage_rejected(self):
        with pytest.raises(ValueError, match="unknown stage"):
            stage_hash(load_config(), "deploy")
