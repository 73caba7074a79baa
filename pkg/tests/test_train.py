import numpy as np
import pytest

from selcal.dataset import derive
from selcal.errors import ConfigError
from selcal.losses import LossConfig
from selcal.recalibrate import Platt, platt_apply
from selcal.selector import selector_forward
from selcal.train import (
    AdamState,
    TrainConfig,
    adam_step,
    preset_config,
    pretrain_recalibrator,
    train_selective_recalibration,
)
from .conftest import make_calibrated_binary


def small_config(**kw):
    base = dict(
        loss=LossConfig(kind="s-tlbce", lam=32.0, beta=0.8),
        mode="joint",
        recalibrator="temperature",
        hidden_dims=[8],
        learning_rate=5e-3,
        epochs=30,
        batch_size=64,
        seed=0,
    )
    base.update(kw)
    return TrainConfig(**base)


def test_adam_zero_gradient_fixed_point():
    p = [np.array([1.0, -2.0])]
    state = AdamState.like(p)
    new_p, new_state = adam_step(p, [np.zeros(2)], state, lr=0.1)
    assert (new_p[0] == p[0]).all()
    assert new_state.t == 1


def test_adam_first_step_is_signed_lr():
    g = np.array([0.3, -7.0, 1e-3])
    p = [np.zeros(3)]
    new_p, _ = adam_step(p, [g], AdamState.like(p), lr=0.05)
    # bias-corrected first step is lr * g / (|g| + eps) ~= lr * sign(g)
    assert np.allclose(new_p[0], -0.05 * np.sign(g), rtol=1e-4)


def test_adam_second_moment_recurrence():
    g = np.array([0.7])
    p = [np.zeros(1)]
    state = AdamState.like(p)
    p, state = adam_step(p, [g], state, lr=0.01)
    p, state = adam_step(p, [g], state, lr=0.01)
    v_hat = state.v[0] / (1 - 0.999**2)
    assert v_hat[0] == pytest.approx(g[0] ** 2, rel=1e-12)


def test_adam_shape_mismatch():
    p = [np.zeros((2, 2))]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(3)], AdamState.like(p), lr=0.1)


def test_pretrain_temperature_oracles(calibrated_10k, calibrated_10k_doubled):
    cfg = small_config()
    assert 0.9 <= pretrain_recalibrator(calibrated_10k, cfg).params.T <= 1.1
    assert 1.8 <= pretrain_recalibrator(calibrated_10k_doubled, cfg).params.T <= 2.2


def test_pretrain_platt_monotone():
    d = make_calibrated_binary(10_000, seed=12, one_sided=True)
    cfg = small_config(recalibrator="platt")
    params = pretrain_recalibrator(d, cfg).params
    assert isinstance(params, Platt)
    assert params.w < 0  # increasing map under h(p) = sigmoid(-(w p + b))
    grid = np.linspace(0.0, 1.0, 11)
    assert np.all(np.diff(platt_apply(params, grid)) > 0)


def test_training_decreases_loss(two_cluster_data, two_cluster_joint):
    trace = two_cluster_joint.loss_trace
    assert trace[-1] < trace[0]
    assert all(np.isfinite(trace))


def test_training_hits_target_coverage(two_cluster_data, two_cluster_joint):
    d_train, _, _ = two_cluster_data
    scores = selector_forward(two_cluster_joint.selector, d_train.embeddings)
    assert abs(scores.mean() - 0.8) <= 0.05


def test_training_deterministic():
    d = make_calibrated_binary(400, seed=21, embed_dim=4)
    cfg = small_config(epochs=10)
    m1 = train_selective_recalibration(d, cfg)
    m2 = train_selective_recalibration(d, cfg)
    assert m1.loss_trace == m2.loss_trace
    for a, b in zip(m1.selector.flat(), m2.selector.flat()):
        assert (a == b).all()
    assert m1.recalibrator.log_t == m2.recalibrator.log_t


def test_sequential_freezes_recalibrator():
    d = make_calibrated_binary(400, seed=22, embed_dim=4)
    cfg = small_config(mode="sequential", epochs=10)
    model = train_selective_recalibration(d, cfg)
    pretrained = pretrain_recalibrator(d, cfg).params
    assert model.recalibrator.log_t == pretrained.log_t


def test_joint_moves_recalibrator(two_cluster_joint, two_cluster_sequential):
    assert two_cluster_joint.recalibrator.log_t != two_cluster_sequential.recalibrator.log_t


def test_embeddingless_dataset_rejected():
    d = make_calibrated_binary(50, seed=23, embed_dim=0)
    with pytest.raises(ConfigError):
        train_selective_recalibration(d, small_config())


def test_lambda_pulls_soft_coverage():
    d = make_calibrated_binary(600, seed=24, embed_dim=4)
    for beta in (0.6, 0.9):
        cfg = small_config(epochs=60, loss=LossConfig(lam=8.0, beta=beta))
        model = train_selective_recalibration(d, cfg)
        scores = selector_forward(model.selector, d.embeddings)
        assert abs(scores.mean() - beta) < 0.1


def test_noise_augmentation_changes_run():
    d = make_calibrated_binary(300, seed=25, embed_dim=4)
    clean = train_selective_recalibration(d, small_config(epochs=5))
    noisy = train_selective_recalibration(d, small_config(epochs=5, noise_std=1.0))
    assert clean.loss_trace != noisy.loss_trace


def test_nondifferentiable_recalibrator_rejected():
    with pytest.raises(ConfigError):
        small_config(recalibrator="histogram")


def test_presets():
    cfg = preset_config("camelyon", beta=0.8)
    assert cfg.recalibrator == "platt" and cfg.loss.lam == 32.0
    assert cfg.hidden_dims == [128, 128] and cfg.batch_size == 100
    cfg = preset_config("ood", beta=0.5)
    assert cfg.noise_std == 1.0 and cfg.loss.lam == 8.0 and cfg.epochs == 50
    cfg = preset_config("imagenet", beta=0.9, loss_kind="s-mce")
    assert cfg.learning_rate == 1e-5 and cfg.loss.kind == "s-mce"
    with pytest.raises(ConfigError):
        preset_config("nope", beta=0.8)


def test_mce_and_mmce_paths_train():
    d = make_calibrated_binary(300, seed=26, embed_dim=4)
    for kind in ("s-mce", "s-mmce"):
        cfg = small_config(epochs=5, loss=LossConfig(kind=kind, lam=8.0, beta=0.8),
                           batch_size=32)
        model = train_selective_recalibration(d, cfg)
        assert np.isfinite(model.loss_trace).all()


def test_keep_denominator_path_trains():
    d = make_calibrated_binary(300, seed=27, embed_dim=4)
    cfg = small_config(
        epochs=5, loss=LossConfig(lam=8.0, beta=0.8, drop_denominator=False)
    )
    model = train_selective_recalibration(d, cfg)
    assert np.isfinite(model.loss_trace).all()


def test_derived_correct_used_not_recalibrated(two_cluster_data):
    # correctness comes from the base model's argmax, untouched by training
    d_train, _, _ = two_cluster_data
    der = derive(d_train)
    assert set(np.unique(der.correct)) <= {0.0, 1.0}
