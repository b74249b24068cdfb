import json

import pytest

from factdial.config import DEFAULTS, config_get, load_config


def test_defaults_have_expected_sections():
    cfg = load_config(env={})
    assert set(cfg) >= {"model", "search", "fr", "rerank", "server"}
    assert cfg["server"]["context_window"] == 5
    assert cfg["search"]["lambda_div"] == 0.4
    assert cfg["fr"]["limit"] == 10


def test_result_is_independent_of_defaults():
    cfg = load_config(env={})
    cfg["server"]["port"] = 1
    cfg["model"]["checkpoint"] = "elsewhere"
    assert DEFAULTS["server"]["port"] == 8080
    assert DEFAULTS["model"]["checkpoint"] == "artifacts/mhred.ckpt"


def test_file_overlay_merges_deeply(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"server": {"port": 9999}}))
    cfg = load_config(p, env={})
    assert cfg["server"]["port"] == 9999
    # untouched siblings survive the merge
    assert cfg["server"]["host"] == "127.0.0.1"
    assert cfg["search"]["beam_width"] == 5


def test_file_must_be_json_object(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text("[1, 2]")
    with pytest.raises(ValueError, match="JSON object"):
        load_config(p, env={})
    p.write_text("{nope")
    with pytest.raises(ValueError, match="not valid JSON"):
        load_config(p, env={})


def test_env_override_with_nesting():
    cfg = load_config(env={"FACTDIAL_SERVER__PORT": "9001",
                           "FACTDIAL_SEARCH__LAMBDA_DIV": "0.7",
                           "FACTDIAL_SERVER__DEBUG": "true",
                           "FACTDIAL_MODEL__CHECKPOINT": "/elsewhere/m.ckpt"})
    assert cfg["server"]["port"] == 9001
    assert cfg["search"]["lambda_div"] == 0.7
    assert cfg["server"]["debug"] is True
    # non-JSON values stay strings
    assert cfg["model"]["checkpoint"] == "/elsewhere/m.ckpt"


def test_env_beats_file(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps({"server": {"port": 7000}}))
    cfg = load_config(p, env={"FACTDIAL_SERVER__PORT": "7001"})
    assert cfg["server"]["port"] == 7001


def test_unrelated_env_ignored():
    cfg = load_config(env={"PATH": "/bin", "FACTDIALX_SERVER__PORT": "1"})
    assert cfg["server"]["port"] == 8080


def test_config_get_dotted():
    cfg = load_config(env={})
    assert config_get(cfg, "server.port") == 8080
    assert config_get(cfg, "fr.w_r") == 2.0
    with pytest.raises(KeyError):
        config_get(cfg, "server.nope")
    with pytest.raises(KeyError):
        config_get(cfg, "nothing")
