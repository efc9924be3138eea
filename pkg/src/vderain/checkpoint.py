"""Checkpoint archive: tensor containers + JSON manifest in a zip.

Everything needed to continue a run bitwise is captured: derainer and
per-batch generator parameters, every latent chain, Adam moments, the
epoch counter, and the config snapshot.  Randomness needs no evolving
state on disk because all streams are derived from (seed, tags); the
manifest records the base seed and the derivation scheme tag.
"""

import dataclasses
import json
import zipfile

import torch

from .inference import LatentChain
from .video import decode_array, encode_array

RNG_SCHEME = "derived-streams-v1"
FORMAT_NAME = "vderain-checkpoint"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


@dataclasses.dataclass
class Checkpoint:
    epoch: int
    seed: int
    config: dict                 # {"train": ..., "networks": ...}
    registry_meta: list          # [{"index", "labeled", "clip_ids"}, ...]
    tensors: dict                # logical name -> float32 ndarray
    scalars: dict                # logical name -> number (Adam step counts)
    rng_scheme: str = RNG_SCHEME


def save_checkpoint(path, ckpt):
    names = sorted(ckpt.tensors)
    entries = {name: f"t/{i:05d}" for i, name in enumerate(names)}
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "epoch": int(ckpt.epoch),
        "seed": int(ckpt.seed),
        "rng_scheme": ckpt.rng_scheme,
        "config": ckpt.config,
        "registry": ckpt.registry_meta,
        "scalars": ckpt.scalars,
        "tensors": {
            name: {"entry": entries[name], "shape": list(ckpt.tensors[name].shape)}
            for name in names
        },
    }
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("manifest.json", json.dumps(manifest, indent=1, sort_keys=True))
        for name in names:
            zf.writestr(entries[name], encode_array(ckpt.tensors[name]))


def load_checkpoint(path):
    try:
        zf = zipfile.ZipFile(path, "r")
    except (OSError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"cannot open checkpoint {path}: {e}") from e
    with zf:
        try:
            manifest = json.loads(zf.read("manifest.json"))
        except KeyError:
            raise CheckpointError(f"{path}: no manifest.json in archive")
        if manifest.get("format") != FORMAT_NAME:
            raise CheckpointError(f"{path}: not a {FORMAT_NAME} archive")
        if manifest.get("version") != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {manifest.get('version')}")
        have = set(zf.namelist())
        tensors = {}
        for name, meta in manifest["tensors"].items():
            entry = meta["entry"]
            if entry not in have:
                raise CheckpointError(f"{path}: manifest lists missing entry {entry} ({name})")
            arr = decode_array(zf.read(entry), name=f"{path}:{entry}")
            if list(arr.shape) != list(meta["shape"]):
                raise CheckpointError(
                    f"{path}: tensor {name} has shape {list(arr.shape)}, "
                    f"manifest says {meta['shape']}"
                )
            tensors[name] = arr
    return Checkpoint(
        epoch=int(manifest["epoch"]),
        seed=int(manifest["seed"]),
        config=manifest["config"],
        registry_meta=manifest["registry"],
        tensors=tensors,
        scalars=manifest.get("scalars", {}),
        rng_scheme=manifest.get("rng_scheme", ""),
    )


# ---------------------------------------------------------------------------
# translation between a live training state and the archive form

def _named_params(module):
    return list(module.named_parameters())


def _collect_adam(opt, named, prefix, tensors, scalars):
    for name, p in named:
        st = opt.state.get(p)
        if not st:
            continue
        tensors[f"{prefix}/{name}/exp_avg"] = st["exp_avg"].detach().numpy()
        tensors[f"{prefix}/{name}/exp_avg_sq"] = st["exp_avg_sq"].detach().numpy()
        step = st["step"]
        scalars[f"{prefix}/{name}/step"] = float(step) if torch.is_tensor(step) else step


def collect_checkpoint(state, cfg, nets):
    tensors, scalars = {}, {}
    for name, p in _named_params(state.derainer):
        tensors[f"derainer/{name}"] = p.detach().numpy()
    _collect_adam(state.opt_derainer, _named_params(state.derainer),
                  "adam/derainer", tensors, scalars)
    for j, gen in sorted(state.registry.generators.items()):
        for name, p in _named_params(gen):
            tensors[f"generator/{j}/{name}"] = p.detach().numpy()
        _collect_adam(state.opt_generators[j], _named_params(gen),
                      f"adam/generator/{j}", tensors, scalars)
    for cid, chain in sorted(state.registry.chains.items()):
        tensors[f"chain/{cid}/s0"] = chain.s0
        tensors[f"chain/{cid}/z"] = chain.z
        tensors[f"chain/{cid}/m"] = chain.m
    meta = [{"index": b.index, "labeled": b.labeled, "clip_ids": list(b.clip_ids)}
            for b in state.registry.batches]
    config = {"train": dataclasses.asdict(cfg), "networks": dataclasses.asdict(nets)}
    return Checkpoint(epoch=state.epoch, seed=cfg.seed, config=config,
                      registry_meta=meta, tensors=tensors, scalars=scalars)


def _config_comparable(config):
    c = json.loads(json.dumps(config))   # normalize tuples/lists
    c.get("train", {}).pop("epochs", None)
    return c


def _install_params(module, tensors, prefix, what):
    for name, p in _named_params(module):
        key = f"{prefix}/{name}"
        if key not in tensors:
            raise CheckpointError(f"checkpoint missing {what} tensor {key}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(p.shape):
            raise CheckpointError(
                f"{key}: checkpoint shape {arr.shape} vs model {tuple(p.shape)}"
            )
        with torch.no_grad():
            p.copy_(torch.from_numpy(arr))


def _install_adam(opt, named, prefix, ckpt):
    for name, p in named:
        key = f"{prefix}/{name}"
        if f"{key}/exp_avg" not in ckpt.tensors:
            continue   # no state yet for this parameter at save time
        opt.state[p] = {
            "step": torch.tensor(float(ckpt.scalars[f"{key}/step"])),
            "exp_avg": torch.from_numpy(ckpt.tensors[f"{key}/exp_avg"].copy()),
            "exp_avg_sq": torch.from_numpy(ckpt.tensors[f"{key}/exp_avg_sq"].copy()),
        }


def derainer_from_checkpoint(ckpt):
    """Rebuild just the derainer for inference."""
    from .networks import DerainerConfig, make_derainer
    try:
        dcfg = DerainerConfig(**ckpt.config["networks"]["derainer"])
    except (KeyError, TypeError) as e:
        raise CheckpointError(f"checkpoint has no usable derainer config: {e}") from e
    net = make_derainer(dcfg)
    _install_params(net, ckpt.tensors, "derainer", "derainer")
    net.eval()
    return net


def install_checkpoint(ckpt, state, cfg, nets):
    """Overwrite a freshly initialized state with checkpoint contents."""
    want = _config_comparable({"train": dataclasses.asdict(cfg),
                               "networks": dataclasses.asdict(nets)})
    if _config_comparable(ckpt.config) != want:
        raise CheckpointError("checkpoint config does not match the current run config")
    meta = [{"index": b.index, "labeled": b.labeled, "clip_ids": list(b.clip_ids)}
            for b in state.registry.batches]
    if meta != ckpt.registry_meta:
        raise CheckpointError("checkpoint registry does not match the current dataset")
    _install_params(state.derainer, ckpt.tensors, "derainer", "derainer")
    _install_adam(state.opt_derainer, _named_params(state.derainer),
                  "adam/derainer", ckpt)
    for j, gen in state.registry.generators.items():
        _install_params(gen, ckpt.tensors, f"generator/{j}", f"generator {j}")
        _install_adam(state.opt_generators[j], _named_params(gen),
                      f"adam/generator/{j}", ckpt)
    for cid in list(state.registry.chains):
        triple = []
        for part in ("s0", "z", "m"):
            key = f"chain/{cid}/{part}"
            if key not in ckpt.tensors:
                raise CheckpointError(f"checkpoint missing chain tensor {key}")
            triple.append(ckpt.tensors[key])
        state.registry.chains[cid] = LatentChain(cid, *triple)
    state.epoch = ckpt.epoch
