"""JSON run configuration: strict schema, defaults, dotted overrides.

Precedence: built-in defaults < config file < --set overrides.  Unknown
keys and type mismatches are rejected (silent hyperparameter typos are a
classic way to lose a training run).  Every field has a default except
the data paths, which commands check when they actually need them.
"""

import copy
import json

from .inference import LangevinConfig
from .networks import DerainerConfig, EmissionConfig, TransitionConfig
from .priors import PriorConfig
from .rain import RainRecipe
from .training import MODES, NetworkConfigs, TrainConfig

SCHEMA_VERSION = 1

# None marks a path-like field with no default; type checks then accept str.
DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "seed": 0,
    "data": {
        "labeled_dir": None,
        "unlabeled_dir": None,
        "val_dir": None,
        "output_dir": None,
        "patch_size": 64,
        "chunk_len": 20,
        "batch_size": 12,
    },
    "derainer": {
        "shuffle": 2, "width": 32, "blocks": 4, "kernel": 3,
        "channels": 3, "temporal_pad": "zero", "global_skip": True,
    },
    "transition": {
        "state_dim": 64, "noise_dim": 32, "appearance_dim": 64, "hidden": 128,
    },
    "emission": {
        "seed_size": 8, "seed_channels": 64, "stages": 3,
        "out_channels": 1, "target_size": 64,
    },
    "prior": {
        "rho": 0.5, "gamma": [1.0, 1.0, 2.0],
        "epsilon0_sq": 1e-6, "charbonnier_eps": 1e-3,
    },
    "langevin": {
        "delta": 0.01, "steps": 5, "sigma": 0.05, "noise_enabled": True,
    },
    "train": {
        "lr_transition": 1e-3, "lr_emission": 1e-4, "lr_derainer": 2e-4,
        "lr_decay_epoch": 30, "lr_decay_factor": 0.5,
        "pretrain_epochs": 5, "epochs": 60, "mode": "semi",
        "grad_clip": 10.0, "checkpoint_every": 0,
    },
    "fit": {
        "iterations": 2000,
    },
    "rain": {
        "frames": 20, "height": 64, "width": 64,
        "recipe": {
            "direction_deg": 10.0, "speed": 2.0, "density": 4.0,
            "length": 9.0, "width": 1.2, "intensity": 0.8,
            "wind_jitter": 0.0, "seed": None,   # None: fall back to top-level seed
        },
    },
}

_ENUMS = {
    "train.mode": MODES,
    "derainer.temporal_pad": ("zero", "replicate"),
}

# None-default slots fall in two families: filesystem paths and one
# optional integer (the rain seed, which falls back to the global seed)
_OPTIONAL_INT = {"rain.recipe.seed"}


class ConfigError(Exception):
    pass


def _check_type(path, default, value):
    if default is None:
        if path in _OPTIONAL_INT:
            if value is not None and (isinstance(value, bool) or not isinstance(value, int)):
                raise ConfigError(f"{path}: expected an integer or null, got {value!r}")
            return value
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{path}: expected a path string or null, got {value!r}")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} numbers")
        return [float(v) for v in value]
    raise ConfigError(f"{path}: unsupported schema slot")


def _merge(path, base, update):
    for key, value in update.items():
        here = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key '{here}'")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{here}: expected an object")
            _merge(here, base[key], value)
        else:
            base[key] = _check_type(here, DEFAULTS_FLAT[here], value)
            if here in _ENUMS and base[key] not in _ENUMS[here]:
                raise ConfigError(
                    f"{here}: must be one of {list(_ENUMS[here])}, got {base[key]!r}"
                )


def _flatten(prefix, node, out):
    for k, v in node.items():
        p = f"{prefix}.{k}" if prefix else k
        if isinstance(v, dict):
            _flatten(p, v, out)
        else:
            out[p] = v
    return out

DEFAULTS_FLAT = _flatten("", DEFAULTS, {})


def parse_override(text):
    """'a.b.c=value' -> (key, parsed value); values parse as JSON, else string."""
    if "=" not in text:
        raise ConfigError(f"override '{text}' is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"override '{text}' has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(path=None, overrides=()):
    """Resolve defaults, optional JSON file, and dotted overrides, in order."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path} is not valid JSON: {e}") from e
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        if user.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
            raise ConfigError(
                f"{path}: schema_version {user['schema_version']} unsupported "
                f"(this build speaks {SCHEMA_VERSION})"
            )
        _merge("", cfg, user)
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"unknown config key '{key}'")
            node = node[part]
        leaf = parts[-1]
        if not isinstance(node, dict) or leaf not in node or isinstance(node[leaf], dict):
            raise ConfigError(f"unknown config key '{key}'")
        _merge("", cfg, _nest(key, value))
    return cfg


def _nest(dotted, value):
    out = {}
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node[p] = {}
        node = node[p]
    node[parts[-1]] = value
    return out


def echo_config(cfg, path):
    with open(path, "w") as fh:
        json.dump(cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# typed views

def prior_config(cfg):
    p = cfg["prior"]
    return PriorConfig(rho=p["rho"], gamma=tuple(p["gamma"]),
                       epsilon0_sq=p["epsilon0_sq"],
                       charbonnier_eps=p["charbonnier_eps"])


def langevin_config(cfg):
    l = cfg["langevin"]
    return LangevinConfig(delta=l["delta"], steps=l["steps"], sigma=l["sigma"],
                          noise_enabled=l["noise_enabled"])


def network_configs(cfg):
    return NetworkConfigs(
        derainer=DerainerConfig(**cfg["derainer"]),
        transition=TransitionConfig(**cfg["transition"]),
        emission=EmissionConfig(**cfg["emission"]),
    )


def train_config(cfg):
    t = cfg["train"]
    return TrainConfig(
        prior=prior_config(cfg), langevin=langevin_config(cfg),
        lr_transition=t["lr_transition"], lr_emission=t["lr_emission"],
        lr_derainer=t["lr_derainer"], lr_decay_epoch=t["lr_decay_epoch"],
        lr_decay_factor=t["lr_decay_factor"], pretrain_epochs=t["pretrain_epochs"],
        epochs=t["epochs"], mode=t["mode"], grad_clip=t["grad_clip"],
        seed=cfg["seed"],
    )


def rain_recipe(cfg):
    r = dict(cfg["rain"]["recipe"])
    if r["seed"] is None:
        r["seed"] = cfg["seed"]
    return RainRecipe(**r)
