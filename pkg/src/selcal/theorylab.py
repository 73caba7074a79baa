"""Synthetic perturbed-mixture model and numerical checks of the separation
results for selection, recalibration, and their joint optimization.

The data model is a two-class mixture: an inlier component (mass beta_mix)
drawn from N(y*theta, sigma^2 I) truncated to the balls B(+-theta*, r1), and
an outlier component (mass 1-beta_mix) drawn from N(-y*alpha*theta*, sigma^2 I)
truncated to B(+-alpha*theta*, r2), with the two truncated Gaussians sharing
one normalization constant (enforced by solving for r1 given r2).

A linear scorer theta_hat trained on the unperturbed mixture projects the
model to one dimension, v = theta_hat . x, where the conditional label
probability and the projected density have closed forms. All calibration-error
functionals are evaluated by composite Simpson quadrature over the four
truncation intervals; selectors are per-cell acceptance fractions on that
grid, which is the family that attains the optimum among selectors measurable
in v (uniform thinning at fixed v does not alter P[y=1 | v]).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import ncx2

from .dataset import CalibrationDataset
from .errors import ValidationError

RHO_TOL = 1e-3
MIN_ACCEPT_RATE = 1e-4
DEFAULT_CELLS = 4096
_PROPOSAL_BATCH = 2_000_000


# ---------------------------------------------------------------------------
# model definition and validation


def _ball_mass(center_dist: float, radius: float, sigma: float, p: int) -> float:
    """P(||z - c|| <= r) for z ~ N(0, sigma^2 I_p) and ||c|| = center_dist."""
    return float(ncx2.cdf((radius / sigma) ** 2, df=p, nc=(center_dist / sigma) ** 2))


@dataclass(frozen=True)
class SyntheticSpec:
    theta_star: np.ndarray
    sigma: float
    alpha: float
    r1: float
    r2: float
    beta_mix: float
    m_train: int

    def __post_init__(self):
        object.__setattr__(
            self, "theta_star", np.asarray(self.theta_star, dtype=np.float64)
        )
        t = float(np.linalg.norm(self.theta_star))
        if self.theta_star.ndim != 1 or t == 0:
            raise ValidationError("theta_star must be a nonzero vector")
        if not 0.0 < self.alpha < 0.5:
            raise ValidationError(f"alpha must lie in (0, 1/2), got {self.alpha}")
        if self.sigma <= 0 or self.r1 <= 0 or self.r2 <= 0:
            raise ValidationError("sigma, r1, r2 must be positive")
        if not 0.0 < self.beta_mix < 1.0:
            raise ValidationError("beta_mix must lie in (0, 1)")
        if self.m_train < 1:
            raise ValidationError("m_train must be >= 1")
        # pairwise ball disjointness
        if 2 * t <= 2 * self.r1:
            raise ValidationError("inlier balls at +-theta* overlap")
        if 2 * self.alpha * t <= 2 * self.r2:
            raise ValidationError("outlier balls at +-alpha theta* overlap")
        if (1 - self.alpha) * t <= self.r1 + self.r2:
            raise ValidationError("inlier and outlier balls overlap")
        z1, z2 = self.component_masses()
        if abs(z1 - z2) > RHO_TOL:
            raise ValidationError(
                f"normalizations differ: Z1={z1:.6f} Z2={z2:.6f}; "
                f"solve r1 from r2 (see match_r1)"
            )

    @property
    def p(self) -> int:
        return self.theta_star.size

    def component_masses(self) -> tuple[float, float]:
        """Gaussian mass inside each truncation union (1/rho_1, 1/rho_2)."""
        t = float(np.linalg.norm(self.theta_star))
        z1 = _ball_mass(0.0, self.r1, self.sigma, self.p) + _ball_mass(
            2 * t, self.r1, self.sigma, self.p
        )
        z2 = _ball_mass(0.0, self.r2, self.sigma, self.p) + _ball_mass(
            2 * self.alpha * t, self.r2, self.sigma, self.p
        )
        return z1, z2

    def to_dict(self) -> dict:
        return {
            "theta_star": self.theta_star.tolist(),
            "sigma": self.sigma,
            "alpha": self.alpha,
            "r1": self.r1,
            "r2": self.r2,
            "beta_mix": self.beta_mix,
            "m_train": self.m_train,
        }


def match_r1(theta_star, sigma: float, alpha: float, r2: float) -> float:
    """Solve Z1(r1) = Z2(r2) by bisection (exact noncentral-chi^2 masses)."""
    theta_star = np.asarray(theta_star, dtype=np.float64)
    t = float(np.linalg.norm(theta_star))
    p = theta_star.size
    target = _ball_mass(0.0, r2, sigma, p) + _ball_mass(2 * alpha * t, r2, sigma, p)

    def z1(r):
        return _ball_mass(0.0, r, sigma, p) + _ball_mass(2 * t, r, sigma, p)

    lo, hi = 1e-9, 10.0 * (t + r2 + sigma)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if z1(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def make_spec(theta_star, sigma, alpha, r2, beta_mix, m_train, r1=None) -> SyntheticSpec:
    if r1 is None:
        r1 = match_r1(theta_star, sigma, alpha, r2)
    return SyntheticSpec(
        theta_star=theta_star, sigma=sigma, alpha=alpha,
        r1=float(r1), r2=float(r2), beta_mix=beta_mix, m_train=int(m_train),
    )


def reference_spec(p: int = 4, m_train: int = 100_000) -> SyntheticSpec:
    """The reference configuration used by the theorem checks."""
    theta = np.zeros(p)
    theta[0] = 1.0
    return make_spec(theta, sigma=0.2, alpha=0.3, r2=0.15,
                     beta_mix=0.8, m_train=m_train)


# ---------------------------------------------------------------------------
# sampling


@dataclass
class SyntheticSample:
    x: np.ndarray     # (n, p)
    y: np.ndarray     # (n,) in {-1, +1}
    z: np.ndarray     # (n,) 1 = inlier component
    ball: np.ndarray  # (n,) 0:+theta* 1:-theta* 2:+alpha theta* 3:-alpha theta*


def _ball_centers(spec: SyntheticSpec) -> tuple[np.ndarray, np.ndarray]:
    t = spec.theta_star
    centers = np.stack([t, -t, spec.alpha * t, -spec.alpha * t])
    radii = np.array([spec.r1, spec.r1, spec.r2, spec.r2])
    return centers, radii


def _tag_balls(spec: SyntheticSpec, x: np.ndarray) -> np.ndarray:
    centers, radii = _ball_centers(spec)
    d = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
    inside = d <= radii[None, :]
    tag = np.argmax(inside, axis=1)
    tag[~inside.any(axis=1)] = -1
    return tag


def _rejection_fill(rng, center: np.ndarray, sigma: float, count: int,
                    ball_a: np.ndarray, ball_b: np.ndarray, radius: float) -> np.ndarray:
    """Draw `count` points of N(center, sigma^2 I) inside B(a,r) U B(b,r)."""
    p = center.size
    out = np.empty((count, p))
    got = 0
    while got < count:
        k = min(_PROPOSAL_BATCH, max(8192, 4 * (count - got)))
        prop = center + sigma * rng.standard_normal((k, p))
        ok = (np.linalg.norm(prop - ball_a, axis=1) <= radius) | (
            np.linalg.norm(prop - ball_b, axis=1) <= radius
        )
        acc = prop[ok]
        take = min(len(acc), count - got)
        out[got : got + take] = acc[:take]
        got += take
    return out


def sample_synthetic(spec: SyntheticSpec, n: int, seed: int) -> SyntheticSample:
    """Draw n labelled points from the perturbed mixture by rejection sampling."""
    z1, z2 = spec.component_masses()
    if min(z1, z2) < MIN_ACCEPT_RATE:
        raise RuntimeError(
            f"rejection acceptance rate {min(z1, z2):.2e} < {MIN_ACCEPT_RATE}; "
            f"increase the ball radii relative to sigma"
        )
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    z = (rng.random(n) < spec.beta_mix).astype(np.int64)
    t = spec.theta_star
    x = np.empty((n, spec.p))
    # fixed group order keeps the draw sequence deterministic
    for zi, yi in ((1, 1.0), (1, -1.0), (0, 1.0), (0, -1.0)):
        idx = np.flatnonzero((z == zi) & (y == yi))
        if idx.size == 0:
            continue
        if zi == 1:
            center, ball_a, ball_b, radius = yi * t, t, -t, spec.r1
        else:
            center = -yi * spec.alpha * t
            ball_a, ball_b, radius = spec.alpha * t, -spec.alpha * t, spec.r2
        x[idx] = _rejection_fill(rng, center, spec.sigma, idx.size, ball_a, ball_b, radius)
    return SyntheticSample(x=x, y=y, z=z, ball=_tag_balls(spec, x))


def sample_unperturbed_train(spec: SyntheticSpec, seed: int, m: int | None = None):
    """Training draws x|y ~ N(y theta*, sigma^2 I) without truncation."""
    m = spec.m_train if m is None else m
    rng = np.random.default_rng(seed)
    y = np.where(rng.random(m) < 0.5, 1.0, -1.0)
    x = y[:, None] * spec.theta_star[None, :] + spec.sigma * rng.standard_normal(
        (m, spec.p)
    )
    return x, y


def train_theta_hat(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """theta_hat = (1/m) sum_i x_i y_i."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return (x * y[:, None]).mean(axis=0)


# ---------------------------------------------------------------------------
# projected one-dimensional model


def _sigmoid(x):
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    out = np.empty_like(arr)
    pos = arr >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-arr[pos]))
    e = np.exp(arr[~pos])
    out[~pos] = e / (1.0 + e)
    return float(out[0]) if np.ndim(x) == 0 else out


def confidence(theta_hat: np.ndarray, x: np.ndarray):
    """Confidence pair (f_-1, f_1) with f_1 = sigmoid(2 theta_hat . x)."""
    v = np.asarray(x) @ np.asarray(theta_hat)
    f1 = _sigmoid(2.0 * v)
    return 1.0 - f1, f1


@dataclass
class ProjectedModel:
    theta_hat: np.ndarray
    mu: float          # theta_hat . theta*
    norm: float        # ||theta_hat||
    s: float           # projected std sigma * ||theta_hat||
    a1: float
    a2: float
    intervals_a: list[tuple[float, float]]
    intervals_b: list[tuple[float, float]]

    @property
    def t0(self) -> float:
        """Temperature that calibrates the inlier region exactly."""
        return 1.0 / self.a1

    def in_a(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(v.shape, dtype=bool)
        for lo, hi in self.intervals_a:
            out |= (v >= lo) & (v <= hi)
        return out

    def in_b(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        out = np.zeros(v.shape, dtype=bool)
        for lo, hi in self.intervals_b:
            out |= (v >= lo) & (v <= hi)
        return out


def project_model(spec: SyntheticSpec, theta_hat: np.ndarray) -> ProjectedModel:
    theta_hat = np.asarray(theta_hat, dtype=np.float64)
    mu = float(theta_hat @ spec.theta_star)
    norm = float(np.linalg.norm(theta_hat))
    if mu <= 0:
        raise ValidationError("theta_hat must be positively aligned with theta*")
    s = spec.sigma * norm
    rt1, rt2 = spec.r1 * norm, spec.r2 * norm
    am, bm = mu, spec.alpha * mu
    pm = ProjectedModel(
        theta_hat=theta_hat,
        mu=mu,
        norm=norm,
        s=s,
        a1=mu / (spec.sigma**2 * norm**2),
        a2=spec.alpha * mu / (spec.sigma**2 * norm**2),
        intervals_a=[(-am - rt1, -am + rt1), (am - rt1, am + rt1)],
        intervals_b=[(-bm - rt2, -bm + rt2), (bm - rt2, bm + rt2)],
    )
    lo_a = am - rt1
    hi_b = bm + rt2
    if hi_b >= lo_a or bm - rt2 <= 0:
        raise ValidationError("projected regions overlap; theta_hat too misaligned")
    return pm


def fit_projected_model(spec: SyntheticSpec, seed,
                        max_retries: int = 100) -> ProjectedModel:
    """Train theta_hat; resample on misalignment (positive-dot / disjointness)."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    for child in ss.spawn(max_retries):
        x, y = sample_unperturbed_train(spec, seed=child)
        try:
            return project_model(spec, train_theta_hat(x, y))
        except ValidationError:
            continue
    raise RuntimeError(f"no aligned theta_hat after {max_retries} retries")


def true_conditional(pm: ProjectedModel, v):
    """P[y = 1 | theta_hat . x = v] on the union of the projected regions."""
    v_arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    in_a, in_b = pm.in_a(v_arr), pm.in_b(v_arr)
    if not np.all(in_a | in_b):
        raise ValueError("v outside the support (zero density region)")
    out = np.where(in_a, _sigmoid(2.0 * pm.a1 * v_arr), _sigmoid(-2.0 * pm.a2 * v_arr))
    return float(out[0]) if np.isscalar(v) or np.ndim(v) == 0 else out


# ---------------------------------------------------------------------------
# quadrature grid and densities


def _normal_pdf(v, mean, s):
    return np.exp(-0.5 * ((v - mean) / s) ** 2) / (s * math.sqrt(2 * math.pi))


@dataclass
class TheoryGrid:
    v: np.ndarray       # Simpson nodes over all four intervals
    w: np.ndarray       # Simpson weights (nonnegative)
    is_a: np.ndarray    # True where the node lies in an inlier interval
    rho: np.ndarray     # marginal density of v at the nodes
    cond: np.ndarray    # P[y=1|v] at the nodes
    z_a: float          # grid mass of N(mu, s) on A (per class, symmetric)
    z_b: float          # grid mass of N(alpha mu, s) on B

    @property
    def mass(self) -> np.ndarray:
        return self.w * self.rho


def _simpson_nodes(lo: float, hi: float, cells: int):
    cells += cells % 2  # Simpson needs an even subinterval count
    x = np.linspace(lo, hi, cells + 1)
    h = (hi - lo) / cells
    w = np.full(cells + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return x, w * h / 3.0


def build_grid(pm: ProjectedModel, spec: SyntheticSpec,
               n_cells: int = DEFAULT_CELLS) -> TheoryGrid:
    intervals = pm.intervals_a + pm.intervals_b
    tags = [True, True, False, False]
    total = sum(hi - lo for lo, hi in intervals)
    vs, ws, ts = [], [], []
    for (lo, hi), tag in zip(intervals, tags):
        cells = max(16, int(round(n_cells * (hi - lo) / total)))
        x, w = _simpson_nodes(lo, hi, cells)
        vs.append(x)
        ws.append(w)
        ts.append(np.full(x.size, tag))
    v = np.concatenate(vs)
    w = np.concatenate(ws)
    is_a = np.concatenate(ts)

    dens_a = 0.5 * (_normal_pdf(v, pm.mu, pm.s) + _normal_pdf(v, -pm.mu, pm.s))
    dens_b = 0.5 * (
        _normal_pdf(v, spec.alpha * pm.mu, pm.s)
        + _normal_pdf(v, -spec.alpha * pm.mu, pm.s)
    )
    z_a = float(np.sum((dens_a * w)[is_a]))
    z_b = float(np.sum((dens_b * w)[~is_a]))
    beta = spec.beta_mix
    rho = np.where(is_a, beta * dens_a / z_a, (1 - beta) * dens_b / z_b)
    cond = np.where(is_a, _sigmoid(2 * pm.a1 * v), _sigmoid(-2 * pm.a2 * v))
    return TheoryGrid(v=v, w=w, is_a=is_a, rho=rho, cond=cond, z_a=z_a, z_b=z_b)


def projected_density(pm: ProjectedModel, spec: SyntheticSpec, v, y: int,
                      grid: TheoryGrid | None = None):
    """Density of theta_hat . x given y, normalized on the quadrature grid."""
    if grid is None:
        grid = build_grid(pm, spec)
    v_arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    in_a, in_b = pm.in_a(v_arr), pm.in_b(v_arr)
    beta = spec.beta_mix
    out = np.zeros_like(v_arr)
    out[in_a] = beta * _normal_pdf(v_arr[in_a], y * pm.mu, pm.s) / grid.z_a
    out[in_b] = (1 - beta) * _normal_pdf(v_arr[in_b], -y * spec.alpha * pm.mu, pm.s) / grid.z_b
    return float(out[0]) if np.ndim(v) == 0 else out


# ---------------------------------------------------------------------------
# calibration-error functionals over region selectors


@dataclass
class RegionSelector:
    grid: TheoryGrid
    fractions: np.ndarray

    def __post_init__(self):
        self.fractions = np.asarray(self.fractions, dtype=np.float64)
        if self.fractions.shape != self.grid.v.shape:
            raise ValueError("fractions must align with the grid nodes")
        if np.any(self.fractions < 0) or np.any(self.fractions > 1):
            raise ValueError("acceptance fractions must lie in [0, 1]")

    @property
    def coverage(self) -> float:
        return float(np.sum(self.fractions * self.grid.mass))


def selector_ones(grid: TheoryGrid) -> RegionSelector:
    return RegionSelector(grid, np.ones_like(grid.v))


def selector_g0(grid: TheoryGrid) -> RegionSelector:
    """Accept the inlier region, reject the outlier region."""
    return RegionSelector(grid, grid.is_a.astype(np.float64))


def srece(pm: ProjectedModel, spec: SyntheticSpec, selector: RegionSelector,
          T: float) -> float:
    """Selective calibration error of temperature T on the accepted mass."""
    if T <= 0:
        raise ValueError("temperature must be positive")
    grid = selector.grid
    den = float(np.sum(selector.fractions * grid.mass))
    if den <= 0:
        raise ValueError("selector accepts zero mass")
    gap = np.abs(grid.cond - _sigmoid(2.0 * grid.v / T))
    return float(np.sum(gap * selector.fractions * grid.mass) / den)


def sece(pm: ProjectedModel, spec: SyntheticSpec, selector: RegionSelector) -> float:
    return srece(pm, spec, selector, T=1.0)


def rece(pm: ProjectedModel, spec: SyntheticSpec, T: float,
         grid: TheoryGrid | None = None) -> float:
    if grid is None:
        grid = build_grid(pm, spec)
    return srece(pm, spec, selector_ones(grid), T)


def optimal_selector(pm: ProjectedModel, spec: SyntheticSpec, T: float, beta: float,
                     grid: TheoryGrid | None = None) -> RegionSelector:
    """Greedy lowest-gap acceptance until the accepted mass reaches beta.

    This minimizes the mean selected gap under coverage >= beta within the
    per-cell fractional family; the boundary cell is accepted fractionally.
    """
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"coverage must be in (0, 1], got {beta}")
    if grid is None:
        grid = build_grid(pm, spec)
    gap = np.abs(grid.cond - _sigmoid(2.0 * grid.v / T))
    order = np.argsort(gap, kind="stable")
    mass = grid.mass[order]
    cum = np.cumsum(mass)
    total = cum[-1]
    target = min(beta, total)
    k = int(np.searchsorted(cum, target))
    fractions = np.zeros_like(grid.v)
    fractions[order[:k]] = 1.0
    if k < len(mass):
        prev = cum[k - 1] if k > 0 else 0.0
        if mass[k] > 0:
            fractions[order[k]] = min(1.0, max(0.0, (target - prev) / mass[k]))
    return RegionSelector(grid, fractions)


def _golden_min_log_t(f, lo=math.log(1e-3), hi=math.log(1e3),
                      coarse: int = 240, tol: float = 1e-10):
    """Coarse grid bracket followed by golden-section refinement."""
    xs = np.linspace(lo, hi, coarse)
    vals = [f(x) for x in xs]
    i = int(np.argmin(vals))
    a = xs[max(i - 1, 0)]
    b = xs[min(i + 1, coarse - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while abs(b - a) > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    return x, f(x)


# ---------------------------------------------------------------------------
# theorem report


@dataclass
class TheoryReport:
    spec: dict
    seed: int
    mu: float
    theta_norm: float
    a1: float
    a2: float
    t0: float
    srece_g0_t0: float
    min_rece: float
    argmin_t_rece: float
    min_sece: float
    ece_r_then_s: float
    ece_s_then_r: float
    argmin_t_s_then_r: float
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "spec": self.spec,
            "seed": self.seed,
            "theta_hat": {"dot_theta_star": self.mu, "norm": self.theta_norm,
                          "a1": self.a1, "a2": self.a2, "t0": self.t0},
            "srece_g0_t0": self.srece_g0_t0,
            "min_rece": self.min_rece,
            "argmin_t_rece": self.argmin_t_rece,
            "min_sece": self.min_sece,
            "ece_r_then_s": self.ece_r_then_s,
            "ece_s_then_r": self.ece_s_then_r,
            "argmin_t_s_then_r": self.argmin_t_s_then_r,
            "flags": self.flags,
        }


def verify_theorems(spec: SyntheticSpec, seed: int,
                    n_cells: int = DEFAULT_CELLS) -> TheoryReport:
    """Compute the five competing calibration errors and the pass flags."""
    if spec.beta_mix <= 2 * (1 - spec.beta_mix):
        raise ValueError(
            "the sequential-vs-joint check needs beta > 2(1-beta), "
            f"got beta={spec.beta_mix}"
        )
    pm = fit_projected_model(spec, seed)
    grid = build_grid(pm, spec, n_cells)
    beta = spec.beta_mix

    g0 = selector_g0(grid)
    srece_g0_t0 = srece(pm, spec, g0, pm.t0)

    log_t, min_rece_val = _golden_min_log_t(
        lambda lt: rece(pm, spec, math.exp(lt), grid=grid)
    )
    t_tilde = math.exp(log_t)

    g_tilde = optimal_selector(pm, spec, T=1.0, beta=beta, grid=grid)
    min_sece_val = sece(pm, spec, g_tilde)

    g_rs = optimal_selector(pm, spec, T=t_tilde, beta=beta, grid=grid)
    ece_r_then_s = srece(pm, spec, g_rs, t_tilde)

    log_t_sr, ece_s_then_r = _golden_min_log_t(
        lambda lt: srece(pm, spec, g_tilde, math.exp(lt))
    )

    flags = {
        "joint_g0_t0_below_1e-3": srece_g0_t0 < 1e-3,
        "recalibration_only_above_1e-2": min_rece_val > 1e-2,
        "selection_only_above_1e-2": min_sece_val > 1e-2,
        "recal_then_select_above_1e-2": ece_r_then_s > 1e-2,
        "select_then_recal_above_1e-2": ece_s_then_r > 1e-2,
    }
    return TheoryReport(
        spec=spec.to_dict(),
        seed=seed,
        mu=pm.mu,
        theta_norm=pm.norm,
        a1=pm.a1,
        a2=pm.a2,
        t0=pm.t0,
        srece_g0_t0=srece_g0_t0,
        min_rece=min_rece_val,
        argmin_t_rece=t_tilde,
        min_sece=min_sece_val,
        ece_r_then_s=ece_r_then_s,
        ece_s_then_r=ece_s_then_r,
        argmin_t_s_then_r=math.exp(log_t_sr),
        flags=flags,
    )


SWEEP_COLUMNS = ["sigma", "alpha", "beta", "min_rece", "min_sece",
                 "srece_g0_T0", "ece_r_then_s", "ece_s_then_r"]


def theory_sweep(specs: list[SyntheticSpec], seed: int) -> list[dict]:
    rows = []
    for sp in specs:
        rep = verify_theorems(sp, seed)
        rows.append({
            "sigma": sp.sigma,
            "alpha": sp.alpha,
            "beta": sp.beta_mix,
            "min_rece": rep.min_rece,
            "min_sece": rep.min_sece,
            "srece_g0_T0": rep.srece_g0_t0,
            "ece_r_then_s": rep.ece_r_then_s,
            "ece_s_then_r": rep.ece_s_then_r,
        })
    return rows


def write_sweep_csv(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)


# ---------------------------------------------------------------------------
# dataset generation for the pipeline


def make_dataset(spec: SyntheticSpec, n: int, seed: int,
                 name: str = "synthetic") -> tuple[CalibrationDataset, ProjectedModel]:
    """Sample the target mixture and package it as classifier outputs.

    Embeddings are the raw points; the two-class logits are (-v, +v) with
    v = theta_hat . x, so the softmax confidence matches the linear scorer's
    confidence map; labels map {-1, +1} -> {0, 1}.
    """
    ss = np.random.SeedSequence(seed)
    s_theta, s_sample = ss.spawn(2)
    pm = fit_projected_model(spec, seed=s_theta)
    sample = sample_synthetic(spec, n, seed=s_sample)
    v = sample.x @ pm.theta_hat
    logits = np.stack([-v, v], axis=1)
    labels = ((sample.y + 1) // 2).astype(np.int64)
    ds = CalibrationDataset(
        embeddings=sample.x.astype(np.float32),
        logits=logits.astype(np.float32),
        labels=labels,
        name=name,
    )
    return ds, pm
