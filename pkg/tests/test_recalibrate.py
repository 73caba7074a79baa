import math

import numpy as np
import pytest

from selcal.dataset import CalibrationDataset, derive
from selcal.errors import ValidationError
from selcal.recalibrate import (
    HistogramBins,
    Platt,
    Temperature,
    fit_recalibrator,
    histogram_binning_apply,
    histogram_binning_fit,
    platt_apply,
    platt_binning_apply,
    platt_binning_fit,
    platt_top_conf_and_grad,
    temp_top_conf_and_grad,
    temperature_apply,
)
from .conftest import make_calibrated_binary
from .oracles import central_diff, rel_err


def four_point_dataset():
    """conf [0.6, 0.6, 0.9, 0.9] with correctness [1, 0, 1, 0]."""
    p = np.array([0.6, 0.6, 0.9, 0.9])
    v = 0.5 * np.log(p / (1 - p))
    logits = np.stack([-v, v], axis=1)
    labels = np.array([1, 0, 1, 0])  # prediction is class 1 everywhere
    return CalibrationDataset(
        embeddings=np.zeros((4, 0), dtype=np.float32),
        logits=logits.astype(np.float32),
        labels=labels,
    )


def test_temperature_symmetry():
    for log_t in (-2.0, 0.0, 3.0):
        probs = temperature_apply(Temperature(log_t), np.array([0.0, 0.0]))
        assert np.allclose(probs, [0.5, 0.5])


def test_temperature_direct_value():
    probs = temperature_apply(Temperature(0.0), np.array([math.log(3.0), 0.0]))
    assert np.allclose(probs, [0.75, 0.25], atol=1e-12)


def test_temperature_large_t_limit():
    probs = temperature_apply(Temperature(math.log(1e6)), np.array([4.0, 0.0]))
    assert np.allclose(probs, [0.5, 0.5], atol=1e-5)


def test_temperature_rank_preserved():
    rng = np.random.default_rng(0)
    for _ in range(50):
        z = rng.normal(size=5)
        for log_t in (-3.0, 0.0, 2.5):
            p = temperature_apply(Temperature(log_t), z)
            assert np.argmax(p) == np.argmax(z)
            assert abs(p.sum() - 1.0) < 1e-9


def test_platt_values():
    assert platt_apply(Platt(w=0.0, b=0.0), 0.3) == pytest.approx(0.5)
    assert platt_apply(Platt(w=-2.0, b=0.0), 1.0) == pytest.approx(
        1.0 / (1.0 + math.exp(-2.0)), abs=1e-12
    )
    assert platt_apply(Platt(w=-2.0, b=1.0), 0.5) == pytest.approx(0.5, abs=1e-12)


def test_fit_temperature_self_consistency(calibrated_10k):
    fit = fit_recalibrator(calibrated_10k, "temperature")
    assert 0.9 <= fit.params.T <= 1.1
    assert fit.final_loss <= fit.initial_loss


def test_fit_temperature_scaling_oracle(calibrated_10k_doubled):
    fit = fit_recalibrator(calibrated_10k_doubled, "temperature")
    assert 1.8 <= fit.params.T <= 2.2


def test_fit_deterministic(calibrated_10k):
    a = fit_recalibrator(calibrated_10k, "temperature")
    b = fit_recalibrator(calibrated_10k, "temperature")
    assert a.params.log_t == b.params.log_t


def test_fit_degenerate_single_correct():
    d = CalibrationDataset(
        embeddings=np.zeros((1, 0), dtype=np.float32),
        logits=np.array([[2.0, 0.0]], dtype=np.float32),
        labels=np.array([0]),
    )
    fit = fit_recalibrator(d, "temperature")
    assert fit.warning and fit.degenerate
    # the optimum is at infinity; the clamp keeps the parameters finite
    assert abs(fit.params.log_t) <= 10.0


def test_fit_errors():
    empty = CalibrationDataset(
        embeddings=np.zeros((0, 1), dtype=np.float32),
        logits=np.zeros((0, 2), dtype=np.float32),
        labels=np.zeros(0, dtype=np.int64),
    )
    with pytest.raises(ValidationError):
        fit_recalibrator(empty, "temperature")
    rng = np.random.default_rng(0)
    d3 = CalibrationDataset(
        embeddings=np.zeros((5, 1), dtype=np.float32),
        logits=rng.normal(size=(5, 3)).astype(np.float32),
        labels=rng.integers(0, 3, size=5),
    )
    with pytest.raises(ValidationError):
        fit_recalibrator(d3, "platt")


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(42)
    worst = 0.0
    for _ in range(100):
        z = rng.normal(size=(1, 4)) * 2
        log_t = rng.uniform(-1.5, 1.5)

        def h_of(lt):
            return temp_top_conf_and_grad(Temperature(lt), z)[0][0]

        _, dh = temp_top_conf_and_grad(Temperature(log_t), z)
        worst = max(worst, rel_err(dh[0], central_diff(h_of, log_t)))

        p1 = rng.uniform(0.05, 0.95, size=1)
        w, b = rng.normal(size=2)
        _, dw, db = platt_top_conf_and_grad(Platt(w, b), p1)
        worst = max(
            worst,
            rel_err(dw[0], central_diff(
                lambda ww: platt_top_conf_and_grad(Platt(ww, b), p1)[0][0], w)),
            rel_err(db[0], central_diff(
                lambda bb: platt_top_conf_and_grad(Platt(w, bb), p1)[0][0], b)),
        )
    assert worst < 1e-4


def test_histogram_one_bin():
    d = four_point_dataset()
    params = histogram_binning_fit(d, m=1)
    for conf in (0.0, 0.4, 0.99, 1.0):
        assert histogram_binning_apply(params, conf) == pytest.approx(0.5)


def test_histogram_four_point_counting():
    params = histogram_binning_fit(four_point_dataset(), m=2)
    assert np.allclose(params.values, [0.5, 0.5])
    assert np.allclose(params.edges, [0.0, 0.75, 1.0])


def test_histogram_edge_is_left_closed():
    params = HistogramBins(edges=np.array([0.0, 0.5, 1.0]), values=np.array([0.2, 0.8]))
    assert histogram_binning_apply(params, 0.5) == pytest.approx(0.8)
    assert histogram_binning_apply(params, 1.0) == pytest.approx(0.8)
    assert histogram_binning_apply(params, 0.49999) == pytest.approx(0.2)


def test_histogram_m_exceeds_n():
    with pytest.raises(ValueError):
        histogram_binning_fit(four_point_dataset(), m=5)


def test_histogram_piecewise_constant():
    d = make_calibrated_binary(500, seed=3)
    params = histogram_binning_fit(d, m=15)
    der = derive(d)
    out = histogram_binning_apply(params, der.top_conf)
    assert len(np.unique(out)) <= 15
    assert np.all(np.diff(params.edges) > 0)
    assert params.edges[0] == 0.0 and params.edges[-1] == 1.0


def test_platt_binning_constant_stage_collapses():
    d = four_point_dataset()
    forced = platt_binning_fit(d, m=2)
    forced.w, forced.b = 0.0, 0.0  # constant 0.5 Platt stage
    collapsed = platt_binning_apply(forced, derive(d).probs[:, 1])
    # with a constant stage every point lands in the bin containing 0.5
    assert np.allclose(collapsed, collapsed[0])


def test_platt_binning_overfit_limit():
    d = make_calibrated_binary(16, seed=5)
    params = platt_binning_fit(d, m=16)
    der = derive(d)
    out = platt_binning_apply(params, der.probs[:, 1])
    assert set(np.round(out, 12)) <= {0.0, 1.0}


def test_platt_binning_four_point_composition():
    params = platt_binning_fit(four_point_dataset(), m=2)
    out = platt_binning_apply(params, derive(four_point_dataset()).probs[:, 1])
    assert np.allclose(out, 0.5)
