"""Versioned JSON files for datasets and training checkpoints.

Floats are written with ``repr`` precision, so reading a file back
reproduces every array bitwise.  All writes go through a temporary file
in the target directory followed by an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import InvalidStateError, validate_density
from .experiments import Dataset, ExperimentConfig
from .neural import AdamState, GruNetwork
from .qrn import decode_complex, encode_complex

DATASET_SCHEMA = "qrnn-dataset/1"
CHECKPOINT_SCHEMA = "qrnn-checkpoint/1"


class SchemaError(ValueError):
    """A file is malformed, has the wrong schema, or does not match its partner file."""


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False, allow_nan=False) + "\n"


def _load(path, schema: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(obj, dict) or obj.get("schema") != schema:
        found = obj.get("schema") if isinstance(obj, dict) else None
        raise SchemaError(f"{path}: expected schema {schema!r}, found {found!r}")
    return obj


# ----------------------------------------------------------------------------
# datasets


def dataset_header(cfg: ExperimentConfig, data: Dataset, seed: int) -> dict:
    model = {"omega": cfg.omega, "gamma0_1": cfg.gamma0_1, "lambda_1": cfg.lambda_1}
    if cfg.two_qubit:
        model.update(gamma0_2=cfg.gamma0_2, lambda_2=cfg.lambda_2, couplings=list(cfg.couplings))
    if cfg.conditioned:
        model["omega_range"] = list(cfg.omega_range)
    return {"exp": cfg.exp, "d": 2, "dt": data.dt, "n_steps": data.n_steps, "model": model, "seed": seed}


def write_dataset(path, data: Dataset, header: dict) -> None:
    records = []
    for k in range(len(data)):
        rec = {}
        if data.omegas is not None:
            rec["omega"] = float(data.omegas[k])
        rec["states"] = encode_complex(data.states[k]).tolist()
        records.append(rec)
    atomic_write_text(path, _dump({"schema": DATASET_SCHEMA, "header": header, "records": records}))


def read_dataset(path, validate: bool = True) -> tuple:
    """Returns ``(Dataset, header)``; raises :class:`SchemaError` on any inconsistency."""
    obj = _load(path, DATASET_SCHEMA)
    try:
        header, records = obj["header"], obj["records"]
        d, n_steps, dt = int(header["d"]), int(header["n_steps"]), float(header["dt"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: incomplete dataset header") from exc
    if not records:
        raise SchemaError(f"{path}: dataset has no records")
    has_omega = "omega" in records[0]
    try:
        enc = np.array([r["states"] for r in records], dtype=float)
        omegas = np.array([r["omega"] for r in records], dtype=float) if has_omega else None
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed records") from exc
    if enc.shape[1:] != (n_steps + 1, 2 * d * d):
        raise SchemaError(f"{path}: records have shape {enc.shape[1:]}, header says ({n_steps + 1}, {2 * d * d})")
    states = decode_complex(enc, d)
    if validate:
        try:
            validate_density(states)
        except InvalidStateError as exc:
            raise SchemaError(f"{path}: stored state is not a density matrix ({exc})") from exc
    return Dataset(dt, states, omegas), header


# ----------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    config: ExperimentConfig
    net: GruNetwork
    optimizer: AdamState
    epoch: int = 0

    @property
    def step(self) -> int:
        return self.optimizer.step


def _arrays(named: dict) -> dict:
    return {k: {"shape": list(v.shape), "values": v.reshape(-1).tolist()} for k, v in named.items()}


def _from_arrays(obj: dict) -> dict:
    return {k: np.array(v["values"], dtype=float).reshape(v["shape"]) for k, v in obj.items()}


def write_checkpoint(path, ckpt: Checkpoint) -> None:
    params = ckpt.net.named_params()
    order = list(params)
    opt = ckpt.optimizer
    obj = {
        "schema": CHECKPOINT_SCHEMA,
        "config": ckpt.config.to_dict(),
        "epoch": ckpt.epoch,
        "step": opt.step,
        "param_order": order,
        "params": _arrays(params),
        "optimizer": {
            "lr": opt.lr, "beta1": opt.beta1, "beta2": opt.beta2, "eps": opt.eps, "step": opt.step,
            "m": _arrays({k: opt.m[k] for k in order if k in opt.m}),
            "v": _arrays({k: opt.v[k] for k in order if k in opt.v}),
        },
    }
    atomic_write_text(path, _dump(obj))


def read_checkpoint(path) -> Checkpoint:
    obj = _load(path, CHECKPOINT_SCHEMA)
    try:
        cfg = ExperimentConfig(**obj["config"])
        params = _from_arrays(obj["params"])
        ordered = {k: params[k] for k in obj["param_order"]}
        net = GruNetwork.from_named(ordered)
        o = obj["optimizer"]
        opt = AdamState(lr=o["lr"], beta1=o["beta1"], beta2=o["beta2"], eps=o["eps"], step=int(o["step"]),
                        m=_from_arrays(o["m"]), v=_from_arrays(o["v"]))
        epoch = int(obj["epoch"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"{path}: malformed checkpoint ({exc})") from exc
    if net.input_size != cfg.network_input_size() or net.output_size != cfg.network_output_size():
        raise SchemaError(f"{path}: network shape does not match its experiment config")
    return Checkpoint(cfg, net, opt, epoch)


def check_compatible(cfg: ExperimentConfig, header: dict, what: str = "dataset") -> None:
    """Raise :class:`SchemaError` unless a dataset header fits the experiment config."""
    if int(header.get("exp", -1)) != cfg.exp:
        raise SchemaError(f"{what} was generated for EXP{header.get('exp')}, config is EXP{cfg.exp}")
    if int(header.get("d", -1)) != 2:
        raise SchemaError(f"{what} stores d={header.get('d')}, expected 2")
    if float(header.get("dt", -1)) != cfg.dt:
        raise SchemaError(f"{what} has dt={header.get('dt')}, config has dt={cfg.dt}")
