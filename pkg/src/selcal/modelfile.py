"""JSON model-file format and config (de)serialization.

Selector weights are stored as base64-encoded little-endian f32 arrays with
explicit shapes; recalibrator parameters, tau, the training-config echo, and
provenance are plain JSON. The file is self-contained: loading reconstructs a
TrainedModel whose invariants are re-validated.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from . import __version__
from .errors import ConfigError, ValidationError
from .losses import LossConfig
from .recalibrate import HistogramBins, Platt, PlattBins, Temperature
from .selector import SelectorParams
from .train import TrainConfig, TrainedModel

FORMAT_VERSION = 1


def _encode_array(a: np.ndarray) -> dict:
    return {
        "shape": list(a.shape),
        "data": base64.b64encode(a.astype("<f4").tobytes(order="C")).decode("ascii"),
    }


def _decode_array(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    shape = tuple(obj["shape"])
    if arr.size != int(np.prod(shape)):
        raise ValidationError(f"array payload does not match shape {shape}")
    return arr.reshape(shape)


def recalibrator_to_dict(params) -> dict:
    if isinstance(params, Temperature):
        return {"kind": "temperature", "params": {"log_t": params.log_t}}
    if isinstance(params, Platt):
        return {"kind": "platt", "params": {"w": params.w, "b": params.b}}
    if isinstance(params, HistogramBins):
        return {"kind": "histogram",
                "params": {"edges": params.edges.tolist(),
                           "values": params.values.tolist()}}
    if isinstance(params, PlattBins):
        return {"kind": "platt_binning",
                "params": {"w": params.w, "b": params.b,
                           "edges": params.edges.tolist(),
                           "values": params.values.tolist()}}
    raise TypeError(f"unknown recalibrator {type(params).__name__}")


def recalibrator_from_dict(obj: dict):
    kind = obj.get("kind")
    p = obj.get("params", {})
    if kind == "temperature":
        return Temperature(log_t=float(p["log_t"]))
    if kind == "platt":
        return Platt(w=float(p["w"]), b=float(p["b"]))
    if kind == "histogram":
        return HistogramBins(edges=np.array(p["edges"]), values=np.array(p["values"]))
    if kind == "platt_binning":
        return PlattBins(w=float(p["w"]), b=float(p["b"]),
                         edges=np.array(p["edges"]), values=np.array(p["values"]))
    raise ValidationError(f"unknown recalibrator kind {kind!r}")


def loss_config_to_dict(cfg: LossConfig) -> dict:
    return {
        "kind": cfg.kind,
        "q": cfg.q,
        "kernel_bandwidth": cfg.kernel_bandwidth,
        "lambda": cfg.lam,
        "beta": cfg.beta,
        "drop_denominator": cfg.drop_denominator,
    }


def loss_config_from_dict(obj: dict) -> LossConfig:
    try:
        return LossConfig(
            kind=obj.get("kind", "s-tlbce"),
            q=float(obj.get("q", 2.0)),
            kernel_bandwidth=float(obj.get("kernel_bandwidth", 0.2)),
            lam=float(obj.get("lambda", 32.0)),
            beta=float(obj.get("beta", 0.8)),
            drop_denominator=bool(obj.get("drop_denominator", True)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def train_config_to_dict(cfg: TrainConfig) -> dict:
    return {
        "loss": loss_config_to_dict(cfg.loss),
        "mode": cfg.mode,
        "recalibrator": cfg.recalibrator,
        "hidden_dims": list(cfg.hidden_dims),
        "learning_rate": cfg.learning_rate,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "seed": cfg.seed,
        "pretrain_steps": cfg.pretrain_steps,
        "pretrain_lr": cfg.pretrain_lr,
        "noise_std": cfg.noise_std,
    }


def train_config_from_dict(obj: dict) -> TrainConfig:
    from .train import preset_config

    if "preset" in obj:
        base = preset_config(
            obj["preset"],
            beta=float(obj.get("beta", obj.get("loss", {}).get("beta", 0.8))),
            loss_kind=obj.get("loss", {}).get("kind", "s-tlbce"),
            mode=obj.get("mode", "joint"),
            seed=int(obj.get("seed", 0)),
        )
        merged = train_config_to_dict(base)
        for key, value in obj.items():
            if key in ("preset", "beta"):
                continue
            if key == "loss":
                merged["loss"].update(value)
            else:
                merged[key] = value
        obj = merged
    try:
        return TrainConfig(
            loss=loss_config_from_dict(obj.get("loss", {})),
            mode=obj.get("mode", "joint"),
            recalibrator=obj.get("recalibrator", "temperature"),
            hidden_dims=[int(h) for h in obj.get("hidden_dims", [128, 128])],
            learning_rate=float(obj.get("learning_rate", 5e-4)),
            epochs=int(obj.get("epochs", 1000)),
            batch_size=int(obj.get("batch_size", 100)),
            seed=int(obj.get("seed", 0)),
            pretrain_steps=int(obj.get("pretrain_steps", 500)),
            pretrain_lr=float(obj.get("pretrain_lr", 0.05)),
            noise_std=float(obj.get("noise_std", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad training config: {exc}") from exc


def save_model(model: TrainedModel, path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "recalibrator": recalibrator_to_dict(model.recalibrator),
        "selector": {
            "hidden_dims": list(model.selector.hidden_dims),
            "weights": [_encode_array(w) for w in model.selector.weights],
            "biases": [_encode_array(b) for b in model.selector.biases],
            "tau": model.selector.tau,
        },
        "train_config": train_config_to_dict(model.config),
        "provenance": {"seed": model.config.seed, "tool_version": __version__},
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_model(path) -> TrainedModel:
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            f"{path}: unsupported model format version {doc.get('format_version')}"
        )
    sel = doc["selector"]
    weights = [_decode_array(w) for w in sel["weights"]]
    biases = [_decode_array(b).reshape(-1) for b in sel["biases"]]
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValidationError(f"{path}: selector layer {i} has inconsistent shapes")
        if i > 0 and weights[i - 1].shape[1] != w.shape[0]:
            raise ValidationError(f"{path}: selector layers {i-1}->{i} do not chain")
    selector = SelectorParams(
        weights=weights,
        biases=biases,
        hidden_dims=[int(h) for h in sel["hidden_dims"]],
        tau=sel.get("tau"),
    )
    return TrainedModel(
        selector=selector,
        recalibrator=recalibrator_from_dict(doc["recalibrator"]),
        config=train_config_from_dict(doc.get("train_config", {})),
        loss_trace=[],
    )
