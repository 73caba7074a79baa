"""Post-hoc recalibrators mapping model outputs to calibrated confidences.

Two differentiable families (temperature scaling on logits, Platt scaling on
the positive-class probability) plus two binning families (histogram binning
and Platt binning). The differentiable ones expose analytic parameter
gradients of the per-instance top-label confidence so the joint training loop
can backpropagate through them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .binning import group_slices
from .dataset import CalibrationDataset, derive, softmax
from .errors import ValidationError

CONF_CLAMP = 1e-7
LOG_T_CLAMP = 10.0
PLATT_CLAMP = 50.0


@dataclass
class Temperature:
    """softmax(logits / T) with T = exp(log_t) kept positive by construction."""

    log_t: float = 0.0
    kind = "temperature"

    @property
    def T(self) -> float:
        return float(np.exp(self.log_t))


@dataclass
class Platt:
    """h(p) = 1 / (1 + exp(w*p + b)) on the positive-class probability p."""

    w: float = -1.0
    b: float = 0.0
    kind = "platt"


@dataclass
class HistogramBins:
    """Piecewise-constant map: edges[0]=0 < ... < edges[-1]=1, one value per bin."""

    edges: np.ndarray
    values: np.ndarray
    kind = "histogram"

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if len(self.edges) != len(self.values) + 1:
            raise ValidationError("need len(edges) == len(values) + 1")
        if not np.all(np.diff(self.edges) > 0):
            raise ValidationError("bin edges must be strictly increasing")
        if self.edges[0] != 0.0 or self.edges[-1] != 1.0:
            raise ValidationError("bin edges must span [0, 1]")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValidationError("bin values must lie in [0, 1]")


@dataclass
class PlattBins:
    """Platt stage followed by histogram binning of the Platt top-label output."""

    w: float
    b: float
    edges: np.ndarray
    values: np.ndarray
    kind = "platt_binning"

    def __post_init__(self):
        self._bins = HistogramBins(self.edges, self.values)
        self.edges = self._bins.edges
        self.values = self._bins.values


RecalibratorParams = Temperature | Platt | HistogramBins | PlattBins


def temperature_apply(params: Temperature, logits: np.ndarray) -> np.ndarray:
    """Recalibrated class probabilities softmax(logits / T)."""
    return softmax(np.asarray(logits, dtype=np.float64) / params.T)


def platt_apply(params: Platt, p: np.ndarray | float) -> np.ndarray | float:
    """Recalibrated positive-class probability 1/(1+exp(w*p + b))."""
    z = params.w * np.asarray(p, dtype=np.float64) + params.b
    out = 1.0 / (1.0 + np.exp(z))
    return float(out) if np.isscalar(p) else out


def histogram_binning_apply(params: HistogramBins, top_conf) -> np.ndarray | float:
    """Map a confidence to its bin value; bins are [e_i, e_{i+1}), last closed."""
    conf = np.asarray(top_conf, dtype=np.float64)
    idx = np.searchsorted(params.edges, conf, side="right") - 1
    idx = np.clip(idx, 0, len(params.values) - 1)
    out = params.values[idx]
    return float(out) if np.isscalar(top_conf) else out


def platt_binning_apply(params: PlattBins, p1) -> np.ndarray | float:
    """Composition: Platt on the class-1 probability, then its bin value."""
    h = platt_apply(Platt(params.w, params.b), p1)
    hhat = np.maximum(h, 1.0 - h)
    out = histogram_binning_apply(params._bins, hhat)
    return float(out) if np.isscalar(p1) else out


def _binary_probs(params: Platt, probs: np.ndarray) -> np.ndarray:
    """Class probabilities (1-h, h) after Platt on the class-1 probability."""
    h = platt_apply(params, probs[:, 1])
    return np.stack([1.0 - h, h], axis=1)


def recalibrated_probs(params, d: CalibrationDataset) -> np.ndarray:
    """Full recalibrated probability rows for the differentiable families."""
    if isinstance(params, Temperature):
        return temperature_apply(params, d.logits)
    if isinstance(params, Platt):
        if d.num_classes != 2:
            raise ValidationError("Platt scaling requires a binary dataset")
        return _binary_probs(params, derive(d).probs)
    raise TypeError(f"no probability rows for {type(params).__name__}")


def recalibrated_top_conf(params, d: CalibrationDataset) -> np.ndarray:
    """Per-instance top-label confidence after recalibration."""
    if isinstance(params, (Temperature, Platt)):
        return recalibrated_probs(params, d).max(axis=1)
    der = derive(d)
    if isinstance(params, HistogramBins):
        return histogram_binning_apply(params, der.top_conf)
    if isinstance(params, PlattBins):
        return platt_binning_apply(params, der.probs[:, 1])
    raise TypeError(f"unknown recalibrator {type(params).__name__}")


# ---------------------------------------------------------------------------
# analytic gradients for the differentiable families


def temp_top_conf_and_grad(params: Temperature, logits: np.ndarray):
    """Top-label confidence and its d/d(log_t), per instance."""
    z = np.asarray(logits, dtype=np.float64)
    T = params.T
    s = softmax(z / T)
    k = np.argmax(z, axis=1)  # T > 0 preserves the logits' ranking
    rows = np.arange(z.shape[0])
    h = s[rows, k]
    # d s_k / dT = s_k (<s, z> - z_k) / T^2 ; chain with dT/dlog_t = T
    dh = h * ((s * z).sum(axis=1) - z[rows, k]) / T
    return h, dh


def temp_class_prob_and_grad(params: Temperature, logits: np.ndarray, classes: np.ndarray):
    """Probability of a given class under softmax(z/T) and its d/d(log_t)."""
    z = np.asarray(logits, dtype=np.float64)
    T = params.T
    s = softmax(z / T)
    rows = np.arange(z.shape[0])
    p = s[rows, classes]
    dp = p * ((s * z).sum(axis=1) - z[rows, classes]) / T
    return p, dp


def platt_top_conf_and_grad(params: Platt, p1: np.ndarray):
    """Top-label confidence max(h, 1-h) and its d/d(w, b), per instance."""
    h = platt_apply(params, p1)
    sign = np.where(h >= 0.5, 1.0, -1.0)
    hhat = np.where(h >= 0.5, h, 1.0 - h)
    dh_dw = -h * (1.0 - h) * p1
    dh_db = -h * (1.0 - h)
    return hhat, sign * dh_dw, sign * dh_db


def platt_class_prob_and_grad(params: Platt, p1: np.ndarray, classes: np.ndarray):
    """Probability of a given class under (1-h, h) and its d/d(w, b)."""
    h = platt_apply(params, p1)
    sign = np.where(classes == 1, 1.0, -1.0)
    p = np.where(classes == 1, h, 1.0 - h)
    dh_dw = -h * (1.0 - h) * p1
    dh_db = -h * (1.0 - h)
    return p, sign * dh_dw, sign * dh_db


# ---------------------------------------------------------------------------
# fitting


@dataclass
class FitResult:
    params: RecalibratorParams
    clamped: bool          # best parameters sit on the clamp boundary
    degenerate: bool       # labels were all-correct or all-wrong
    loss_trace: list = field(default_factory=list)

    @property
    def warning(self) -> bool:
        return self.clamped or self.degenerate

    @property
    def initial_loss(self) -> float:
        return self.loss_trace[0]

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1]


def _tlbce(h: np.ndarray, correct: np.ndarray) -> float:
    hc = np.clip(h, CONF_CLAMP, 1.0 - CONF_CLAMP)
    return float(-np.mean(correct * np.log(hc) + (1 - correct) * np.log(1 - hc)))


def _tlbce_grad_h(h: np.ndarray, correct: np.ndarray) -> np.ndarray:
    hc = np.clip(h, CONF_CLAMP, 1.0 - CONF_CLAMP)
    g = -(correct / hc - (1 - correct) / (1 - hc)) / len(h)
    g[(h < CONF_CLAMP) | (h > 1.0 - CONF_CLAMP)] = 0.0
    return g


def fit_recalibrator(
    d: CalibrationDataset,
    kind: str,
    steps: int = 500,
    lr: float = 0.05,
) -> FitResult:
    """Fit temperature or Platt parameters by top-label BCE, full-batch Adam.

    Keeps the best-so-far parameters so the returned loss never exceeds the
    initial one. Degenerate datasets (all correct / all wrong) have their
    optimum at infinity; the parameter clamps stop divergence and the result
    comes back with the warning flag set instead.
    """
    if d.n == 0:
        raise ValidationError("cannot fit a recalibrator to an empty dataset")
    der = derive(d)
    degenerate = bool(der.correct.all() or (1 - der.correct).all())
    if kind == "temperature":
        theta = np.array([0.0])
        lo, hi = -LOG_T_CLAMP, LOG_T_CLAMP

        def eval_loss_grad(th):
            p = Temperature(log_t=float(th[0]))
            h, dh = temp_top_conf_and_grad(p, d.logits)
            return _tlbce(h, der.correct), np.array([_tlbce_grad_h(h, der.correct) @ dh])

        def make(th):
            return Temperature(log_t=float(th[0]))

    elif kind == "platt":
        if d.num_classes != 2:
            raise ValidationError("Platt scaling requires a binary dataset")
        theta = np.array([-1.0, 0.0])  # initial map is increasing in p
        lo, hi = -PLATT_CLAMP, PLATT_CLAMP

        def eval_loss_grad(th):
            p = Platt(w=float(th[0]), b=float(th[1]))
            h, dw, db = platt_top_conf_and_grad(p, der.probs[:, 1])
            gh = _tlbce_grad_h(h, der.correct)
            return _tlbce(h, der.correct), np.array([gh @ dw, gh @ db])

        def make(th):
            return Platt(w=float(th[0]), b=float(th[1]))

    else:
        raise ValidationError(f"cannot gradient-fit recalibrator kind {kind!r}")

    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    loss0, _ = eval_loss_grad(theta)
    best_theta, best_loss = theta.copy(), loss0
    trace = [loss0]
    for t in range(1, steps + 1):
        loss, g = eval_loss_grad(theta)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        mh = m / (1 - 0.9**t)
        vh = v / (1 - 0.999**t)
        theta = np.clip(theta - lr * mh / (np.sqrt(vh) + 1e-8), lo, hi)
        loss = eval_loss_grad(theta)[0]
        trace.append(loss)
        if loss < best_loss:
            best_loss, best_theta = loss, theta.copy()
    clamped = bool(np.any(np.abs(best_theta) >= hi - 1e-12))
    trace.append(best_loss)
    return FitResult(params=make(best_theta), clamped=clamped,
                     degenerate=degenerate, loss_trace=trace)


def _merged_groups(conf_sorted: np.ndarray, m: int) -> list[tuple[int, int]]:
    """Equal-mass group boundaries; boundaries between equal values are merged."""
    n = len(conf_sorted)
    cuts = [0]
    for sl in group_slices(n, m)[:-1]:
        c = sl.stop
        if conf_sorted[c - 1] != conf_sorted[c]:
            cuts.append(c)
    cuts.append(n)
    return list(zip(cuts[:-1], cuts[1:]))


def histogram_binning_fit(d: CalibrationDataset, m: int = 15) -> HistogramBins:
    """Equal-mass bins over top confidences; each bin maps to its accuracy."""
    if d.n == 0:
        raise ValidationError("cannot fit bins on an empty dataset")
    if m > d.n:
        raise ValueError(f"bin count {m} exceeds dataset size {d.n}")
    der = derive(d)
    return _fit_bins(der.top_conf, der.correct, m)


def _fit_bins(conf: np.ndarray, correct: np.ndarray, m: int) -> HistogramBins:
    order = np.argsort(conf, kind="stable")
    cs, ys = conf[order], correct[order]
    groups = _merged_groups(cs, m)
    edges = [0.0]
    values = []
    for i, (a, b) in enumerate(groups):
        values.append(float(ys[a:b].mean()))
        if i < len(groups) - 1:
            edges.append(0.5 * (cs[b - 1] + cs[b]))
    edges.append(1.0)
    return HistogramBins(edges=np.array(edges), values=np.array(values))


def platt_binning_fit(d: CalibrationDataset, m: int = 15, steps: int = 500, lr: float = 0.05) -> PlattBins:
    """Platt fit first, then histogram binning of the Platt top-label output."""
    platt = fit_recalibrator(d, "platt", steps=steps, lr=lr).params
    der = derive(d)
    h = platt_apply(platt, der.probs[:, 1])
    hhat = np.maximum(h, 1.0 - h)
    if m > d.n:
        raise ValueError(f"bin count {m} exceeds dataset size {d.n}")
    bins = _fit_bins(np.asarray(hhat), der.correct, m)
    return PlattBins(w=platt.w, b=platt.b, edges=bins.edges, values=bins.values)
