"""Checkpoint persistence on the deterministic array container.

Model parameters and buffers, Adam state, the torch RNG state and a JSON
metadata blob (step, config) all live in one file. Identical training runs
produce byte-identical files because the container writes records in sorted
order with no timestamps.
"""

import json

import numpy as np
import torch

from .arrayio import ContainerError, read_arrays, write_arrays

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """A checkpoint file is malformed or incompatible."""


def save_checkpoint(path, model, optimizer=None, step=0, config_dict=None):
    """Write model (and optionally optimizer) state to `path`."""
    arrays = {}
    for name, tensor in model.state_dict().items():
        arrays[f"param/{name}"] = tensor.detach().cpu().numpy()
    param_groups = None
    if optimizer is not None:
        state = optimizer.state_dict()
        for idx, entry in state["state"].items():
            for key, val in entry.items():
                if isinstance(val, torch.Tensor):
                    arrays[f"opt/{idx}/{key}"] = val.detach().cpu().numpy()
                else:
                    arrays[f"opt/{idx}/{key}"] = np.asarray(val)
        param_groups = state["param_groups"]
    arrays["rng/torch"] = torch.get_rng_state().numpy()
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "step": int(step),
        "config": config_dict,
        "param_groups": param_groups,
    }
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    arrays["meta/json"] = np.frombuffer(blob, dtype=np.uint8)
    write_arrays(path, arrays)


def load_checkpoint(path, model=None, optimizer=None, restore_rng=False):
    """Read a checkpoint; optionally load states in place.

    Returns:
        The metadata dict (format_version, step, config, param_groups).

    Raises:
        CheckpointError: for malformed files or state mismatches.
    """
    try:
        arrays = read_arrays(path)
    except (ContainerError, OSError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta/json" not in arrays:
        raise CheckpointError("checkpoint is missing its metadata record")
    try:
        meta = json.loads(arrays["meta/json"].tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"checkpoint metadata is not valid JSON: {exc}") from exc
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unsupported checkpoint version {meta.get('format_version')!r}"
        )

    if model is not None:
        state = {
            name[len("param/") :]: torch.from_numpy(np.array(arr))
            for name, arr in arrays.items()
            if name.startswith("param/")
        }
        try:
            model.load_state_dict(state)
        except RuntimeError as exc:
            raise CheckpointError(f"parameter mismatch: {exc}") from exc

    if optimizer is not None:
        if meta.get("param_groups") is None:
            raise CheckpointError("checkpoint holds no optimizer state")
        opt_state = {}
        for name, arr in arrays.items():
            if not name.startswith("opt/"):
                continue
            _, idx, key = name.split("/", 2)
            entry = opt_state.setdefault(int(idx), {})
            arr = np.array(arr)
            entry[key] = torch.from_numpy(arr) if arr.ndim else torch.tensor(arr.item())
        try:
            optimizer.load_state_dict(
                {"state": opt_state, "param_groups": meta["param_groups"]}
            )
        except (RuntimeError, ValueError, KeyError) as exc:
            raise CheckpointError(f"optimizer state mismatch: {exc}") from exc

    if restore_rng:
        if "rng/torch" not in arrays:
            raise CheckpointError("checkpoint holds no RNG state")
        torch.set_rng_state(torch.from_numpy(np.array(arrays["rng/torch"])))
    return meta
