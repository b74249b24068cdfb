"""Layered configuration: defaults < JSON file < environment.

Environment overrides use the FACTDIAL_ prefix with double underscores
for nesting: FACTDIAL_SERVER__PORT=9000 sets server.port. Values parse
as JSON when possible, otherwise stay strings.
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

ENV_PREFIX = "FACTDIAL_"

DEFAULTS: dict = {
    "model": {
        "checkpoint": "artifacts/mhred.ckpt",
        "vocab": "artifacts/vocab.json",
        "embeddings": "artifacts/embeddings.ckpt",
        "facts": "artifacts/facts.jsonl",
    },
    "search": {
        "beam_width": 5,
        "groups": 5,
        "lambda_div": 0.4,
        "gamma_fact": 10.0,
        "max_len": 16,
    },
    "fr": {
        "index": "artifacts/fr.idx",
        "limit": 10,
        "k1": 1.2,
        "b_s": 0.75,
        "b_r": 0.75,
        "w_s": 1.0,
        "w_r": 2.0,
    },
    "rerank": {
        "bundle": "artifacts/rerank",
    },
    "server": {
        "host": "127.0.0.1",
        "port": 8080,
        "context_window": 5,
        "decode_timeout": 10.0,
        "request_log": "",
        "debug": False,
        "static_dir": "",
    },
}


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def _parse_env_value(raw: str):
    try:
        return json.loads(raw)
    except (json.JSONDecodeError, ValueError):
        return raw


def _env_overlay(env: dict[str, str]) -> dict:
    overlay: dict = {}
    for key, raw in env.items():
        if not key.startswith(ENV_PREFIX):
            continue
        path = key[len(ENV_PREFIX):].lower().split("__")
        if not all(path):
            continue
        node = overlay
        for part in path[:-1]:
            node = node.setdefault(part, {})
        node[path[-1]] = _parse_env_value(raw)
    return overlay


def load_config(path=None, env: dict[str, str] | None = None) -> dict:
    # deep copy so callers can mutate the result without touching DEFAULTS
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            file_cfg = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValueError(f"config: {path} is not valid JSON: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ValueError(f"config: {path} must hold a JSON object")
        cfg = _deep_merge(cfg, file_cfg)
    cfg = _deep_merge(cfg, _env_overlay(os.environ if env is None else env))
    return cfg


def config_get(cfg: dict, dotted: str):
    node = cfg
    for part in dotted.split("."):
        if not isinstance(node, dict) or part not in node:
            raise KeyError(f"config: unknown key '{dotted}'")
        node = node[part]
    return node
