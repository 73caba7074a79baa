"""Joint / sequential optimization of the selector and recalibrator.

The recalibrator is always pre-trained on its own (top-label BCE); the main
loop then either freezes it (sequential) or keeps updating it alongside the
selector with the same Adam rule and learning rate (joint). All mini-batch
shuffling and noise augmentation is driven by one seeded generator, so a run
is bit-reproducible from (config, seed).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .dataset import CalibrationDataset, derive
from .errors import ConfigError
from .recalibrate import (
    FitResult,
    Platt,
    Temperature,
    fit_recalibrator,
    platt_class_prob_and_grad,
    platt_top_conf_and_grad,
    temp_class_prob_and_grad,
    temp_top_conf_and_grad,
)
from .selector import SelectorParams, init_selector, selector_backward, selector_forward

TRAINABLE_RECALIBRATORS = ("temperature", "platt")


@dataclass
class TrainConfig:
    loss: L.LossConfig = field(default_factory=L.LossConfig)
    mode: str = "joint"                      # "joint" | "sequential"
    recalibrator: str = "temperature"        # "temperature" | "platt"
    hidden_dims: list[int] = field(default_factory=lambda: [128, 128])
    learning_rate: float = 5e-4
    epochs: int = 1000
    batch_size: int = 100
    seed: int = 0
    pretrain_steps: int = 500
    pretrain_lr: float = 0.05
    noise_std: float = 0.0                   # 0 disables input-noise augmentation

    def __post_init__(self):
        if self.mode not in ("joint", "sequential"):
            raise ConfigError(f"mode must be joint or sequential, got {self.mode!r}")
        if self.recalibrator not in TRAINABLE_RECALIBRATORS:
            raise ConfigError(
                f"trainable recalibrator must be one of {TRAINABLE_RECALIBRATORS}, "
                f"got {self.recalibrator!r}"
            )
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch size must be >= 1")
        if self.noise_std < 0:
            raise ConfigError("noise std must be >= 0")


# Published hyperparameter presets, keyed by experiment family.
PRESETS: dict[str, dict] = {
    "camelyon": dict(
        learning_rate=5e-4, epochs=1000, batch_size=100,
        hidden_dims=[128, 128], recalibrator="platt", lam=32.0, noise_std=0.0,
    ),
    "imagenet": dict(
        learning_rate=1e-5, epochs=1000, batch_size=200,
        hidden_dims=[128, 128], recalibrator="temperature", lam=32.0, noise_std=0.0,
    ),
    "ood": dict(
        learning_rate=1e-4, epochs=50, batch_size=256,
        hidden_dims=[64], recalibrator="temperature", lam=8.0, noise_std=1.0,
    ),
}


def preset_config(name: str, beta: float, loss_kind: str = "s-tlbce",
                  mode: str = "joint", seed: int = 0) -> TrainConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    p = PRESETS[name]
    return TrainConfig(
        loss=L.LossConfig(kind=loss_kind, lam=p["lam"], beta=beta),
        mode=mode,
        recalibrator=p["recalibrator"],
        hidden_dims=list(p["hidden_dims"]),
        learning_rate=p["learning_rate"],
        epochs=p["epochs"],
        batch_size=p["batch_size"],
        seed=seed,
        noise_std=p["noise_std"],
    )


@dataclass
class TrainedModel:
    selector: SelectorParams
    recalibrator: Temperature | Platt
    config: TrainConfig
    loss_trace: list[float] = field(default_factory=list)
    pretrain_warning: bool = False


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def like(cls, params: list[np.ndarray]) -> "AdamState":
        return cls(m=[np.zeros_like(p) for p in params],
                   v=[np.zeros_like(p) for p in params])


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update; returns (new_params, new_state)."""
    if len(params) != len(grads):
        raise ValueError("parameter/gradient list lengths differ")
    t = state.t + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        mh = m / (1 - beta1**t)
        vh = v / (1 - beta2**t)
        new_params.append(p - lr * mh / (np.sqrt(vh) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, t=t)


def _recal_theta(params) -> np.ndarray:
    if isinstance(params, Temperature):
        return np.array([params.log_t])
    return np.array([params.w, params.b])


def _recal_from_theta(kind: str, theta: np.ndarray):
    if kind == "temperature":
        return Temperature(log_t=float(np.clip(theta[0], -10.0, 10.0)))
    return Platt(w=float(np.clip(theta[0], -50.0, 50.0)),
                 b=float(np.clip(theta[1], -50.0, 50.0)))


def objective(
    sel: SelectorParams,
    recal: Temperature | Platt,
    emb: np.ndarray,
    logits: np.ndarray,
    labels: np.ndarray,
    probs: np.ndarray,
    correct: np.ndarray,
    cfg: L.LossConfig,
):
    """Total surrogate loss with gradients for both model families.

    Returns (value, (weight_grads, bias_grads), recal_theta_grad).
    """
    g, cache = selector_forward(sel, emb, return_cache=True)
    n = len(g)

    if cfg.kind == "s-mce":
        if isinstance(recal, Temperature):
            p_y, dp_dtheta = temp_class_prob_and_grad(recal, logits, labels)
            dtheta_cols = [dp_dtheta]
        else:
            p_y, dw, db = platt_class_prob_and_grad(recal, probs[:, 1], labels)
            dtheta_cols = [dw, db]
        sel_val, dg_sel, dq = L.weighted_nll_with_grads(g, p_y)
    else:
        if isinstance(recal, Temperature):
            h, dh_dtheta = temp_top_conf_and_grad(recal, logits)
            dtheta_cols = [dh_dtheta]
        else:
            h, dw, db = platt_top_conf_and_grad(recal, probs[:, 1])
            dtheta_cols = [dw, db]
        if cfg.kind == "s-tlbce":
            sel_val, dg_sel, dq = L.s_tlbce_with_grads(g, h, correct)
        else:
            sel_val, dg_sel, dq = L.s_mmce_with_grads(
                g, h, correct, q=cfg.q, bandwidth=cfg.kernel_bandwidth
            )

    cov_val, dg_cov = L.coverage_loss_with_grads(g, cfg.beta)

    if cfg.drop_denominator:
        value = sel_val + cfg.lam * cov_val
        dg = dg_sel + cfg.lam * dg_cov
        dtheta = np.array([dq @ col for col in dtheta_cols])
    else:
        mean_g = float(g.mean())
        denom = max(mean_g, L.MEAN_G_FLOOR)
        value = sel_val / denom + cfg.lam * cov_val
        dg = dg_sel / denom + cfg.lam * dg_cov
        if mean_g > L.MEAN_G_FLOOR:
            dg = dg - (sel_val / denom**2) / n
        dtheta = np.array([dq @ col for col in dtheta_cols]) / denom

    w_grads, b_grads = selector_backward(sel, cache, dg)
    return value, (w_grads, b_grads), dtheta


def pretrain_recalibrator(d: CalibrationDataset, config: TrainConfig) -> FitResult:
    """Fit the recalibrator alone; its parameters seed the main loop."""
    return fit_recalibrator(
        d, config.recalibrator, steps=config.pretrain_steps, lr=config.pretrain_lr
    )


def train_selective_recalibration(d_train: CalibrationDataset, config: TrainConfig) -> TrainedModel:
    if d_train.embed_dim == 0:
        raise ConfigError("selector training needs embeddings (embed_dim > 0)")
    der = derive(d_train)
    fit = pretrain_recalibrator(d_train, config)
    recal = fit.params

    sel = init_selector(d_train.embed_dim, config.hidden_dims, seed=config.seed)
    rng = np.random.default_rng(config.seed)
    sel_state = AdamState.like(sel.flat())
    rec_state = AdamState.like([_recal_theta(recal)])

    n = d_train.n
    bs = min(config.batch_size, n)
    trace: list[float] = []
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, bs):
            idx = perm[start : start + bs]
            emb = d_train.embeddings[idx].astype(np.float64)
            if config.noise_std > 0:
                emb = emb + rng.normal(0.0, config.noise_std, size=emb.shape)
            value, (w_g, b_g), dtheta = objective(
                sel, recal, emb,
                d_train.logits[idx], d_train.labels[idx],
                der.probs[idx], der.correct[idx],
                config.loss,
            )
            if not np.isfinite(value):
                raise RuntimeError(
                    f"non-finite loss {value} at epoch {epoch}, batch offset {start}"
                )
            new_flat, sel_state = adam_step(sel.flat(), w_g + b_g, sel_state,
                                            config.learning_rate)
            k = len(sel.weights)
            sel = SelectorParams(weights=new_flat[:k], biases=new_flat[k:],
                                 hidden_dims=sel.hidden_dims, tau=None)
            if config.mode == "joint":
                (theta,), rec_state = adam_step(
                    [_recal_theta(recal)], [dtheta], rec_state, config.learning_rate
                )
                recal = _recal_from_theta(config.recalibrator, theta)
            epoch_losses.append(value)
        trace.append(float(np.mean(epoch_losses)))

    return TrainedModel(
        selector=sel,
        recalibrator=recal,
        config=config,
        loss_trace=trace,
        pretrain_warning=fit.warning,
    )
