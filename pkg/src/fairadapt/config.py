"""Flat key=value experiment configuration.

Grammar: one `key = value` per line; `#` starts a comment (full line or
trailing); blank lines ignored; keys are dot-separated lowercase words.
Values parse as int, then float, then the literals true/false, otherwise
they stay strings.  CLI flags override file values; defaults fill the
rest.  The fully resolved config is written next to the outputs, and each
pipeline stage is keyed by a hash of the settings that affect it (plus the
upstream stage's hash) so reruns skip stages whose inputs are unchanged.
"""

import hashlib

DEFAULTS = {
    "seed": 12,
    "out": "runs/exp",
    "data.path": "",
    "data.synthetic": False,
    "data.users": 200,
    "data.items": 300,
    "data.providers": 20,
    "data.skew": 1.5,
    "data.taste_blocks": 3,
    "data.taste_frac": 0.85,
    "data.popularity_floor": 0.05,
    "data.min_per_user": 20,
    "data.max_per_user": 40,
    "data.k_core": 5,
    "data.val_frac": 0.1,
    "data.test_frac": 0.2,
    "pretrain.lr": 0.01,
    "pretrain.epochs": 80,
    "pretrain.batch_size": 256,
    "pretrain.dim": 32,
    "pretrain.l2": 1e-4,
    "adapt.lr": 1e-3,
    "adapt.epochs": 60,
    "adapt.batch_size": 256,
    "adapt.beta": 10.0,
    "adapt.k": 20,
    "adapt.candidates": 128,
    "adapt.lambda_acc": 1e-4,
    "adapt.lambda_inter": 1.0,
    "adapt.lambda_intra": 1.0,
    "adapt.target": "uniform_group",
    "adapt.group_target": "aggregated",
    "adapt.fairness": "hierarchical",
    "adapt.ndcg_floor": 0.1,
    "adapt.hidden": 32,
    "adapt.layers": 2,
    "adapt.init_scale": "",
    "eval.k": 20,
}

_STAGE_KEYS = {
    "prepare": ("seed", "data."),
    "pretrain": ("pretrain.",),
    "adapt": ("adapt.",),
    "evaluate": ("eval.",),
}
_STAGE_ORDER = ("prepare", "pretrain", "adapt", "evaluate")


def parse_value(text):
    text = text.strip()
    for caster in (int, float):
        try:
            return caster(text)
        except ValueError:
            pass
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    return text


def parse_config_text(text, source="<config>"):
    """Parse the key=value grammar into a dict; unknown keys are errors."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ValueError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = parse_value(val)
    return values


def load_config(path=None, overrides=None):
    """defaults <- file <- overrides; returns the resolved flat dict."""
    resolved = dict(DEFAULTS)
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            resolved.update(parse_config_text(fh.read(), source=str(path)))
    for key, val in (overrides or {}).items():
        if val is None:
            continue
        if key not in DEFAULTS:
            raise ValueError(f"unknown config key {key!r}")
        resolved[key] = val
    return resolved


def render_config(cfg):
    """Canonical text form (sorted keys); parses back to the same dict."""
    lines = [f"{key} = {cfg[key]}" for key in sorted(cfg)]
    return "\n".join(lines) + "\n"


def stage_hash(cfg, stage):
    """Hash of the settings affecting `stage`, chained through the hashes
    of every upstream stage so a change invalidates all downstream work."""
    if stage not in _STAGE_KEYS:
        raise ValueError(f"unknown stage {stage!r}")
    parts = []
    for name in _STAGE_ORDER:
        prefixes = _STAGE_KEYS[name]
        keys = sorted(k for k in cfg
                      if any(k == p or k.startswith(p) for p in prefixes))
        parts.append("\n".join(f"{k}={cfg[k]}" for k in keys))
        if name == stage:
            break
    digest = hashlib.sha256("\n--\n".join(parts).encode("utf-8"))
    return digest.hexdigest()
