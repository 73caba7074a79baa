import numpy as np
import pytest

from selcal import theorylab as TL
from selcal.dataset import CalibrationDataset, split
from selcal.losses import LossConfig
from selcal.train import TrainConfig, train_selective_recalibration


def make_calibrated_binary(n: int, seed: int, logit_scale: float = 1.0,
                           embed_dim: int = 3,
                           one_sided: bool = False) -> CalibrationDataset:
    """Binary dataset whose correctness is Bernoulli(top confidence) at T=1.

    Logits are (-v, +v) so the top confidence is sigmoid(2|v|); the label
    agrees with the prediction with exactly that probability. Scaling the
    logits by s makes the data calibrated under temperature T=s instead.
    With one_sided the prediction is always class 1, which gives the Platt
    map an asymmetric target.
    """
    rng = np.random.default_rng(seed)
    v = rng.normal(0.0, 0.8, size=n)
    if one_sided:
        v = np.abs(v)
    conf = 1.0 / (1.0 + np.exp(-2.0 * np.abs(v)))
    pred = (v > 0).astype(np.int64)
    agree = rng.random(n) < conf
    labels = np.where(agree, pred, 1 - pred)
    logits = np.stack([-v, v], axis=1) * logit_scale
    emb = rng.normal(size=(n, embed_dim))
    return CalibrationDataset(
        embeddings=emb.astype(np.float32),
        logits=logits.astype(np.float32),
        labels=labels,
        name=f"calib@{logit_scale}",
    )


@pytest.fixture(scope="session")
def calibrated_10k():
    return make_calibrated_binary(10_000, seed=11)


@pytest.fixture(scope="session")
def calibrated_10k_doubled():
    return make_calibrated_binary(10_000, seed=11, logit_scale=2.0)


@pytest.fixture(scope="session")
def ref_spec():
    return TL.reference_spec()


@pytest.fixture(scope="session")
def ref_pm(ref_spec):
    return TL.fit_projected_model(ref_spec, seed=0)


@pytest.fixture(scope="session")
def theory_report(ref_spec):
    return TL.verify_theorems(ref_spec, seed=0)


@pytest.fixture(scope="session")
def ref_big_sample(ref_spec):
    # shared by the Monte-Carlo cross-checks; drawing 1e6 points is the
    # expensive part, so do it once
    return TL.sample_synthetic(ref_spec, n=1_000_000, seed=123)


# --- two-cluster end-to-end fixture: inliers calibrated under T=2, 20% ------
# outlier mass with opposite-sign distortion


@pytest.fixture(scope="session")
def two_cluster_spec():
    theta = np.zeros(4)
    theta[0] = 2.0
    return TL.make_spec(theta, sigma=np.sqrt(2.0), alpha=0.45, r2=0.5,
                        beta_mix=0.8, m_train=100_000)


@pytest.fixture(scope="session")
def two_cluster_data(two_cluster_spec):
    ds, pm = TL.make_dataset(two_cluster_spec, n=20_000, seed=7)
    d_train, d_test = split(ds, [0.3, 0.7], seed=1)
    return d_train, d_test, pm


def _two_cluster_config(mode: str) -> TrainConfig:
    return TrainConfig(
        loss=LossConfig(kind="s-tlbce", lam=32.0, beta=0.8),
        mode=mode,
        recalibrator="temperature",
        hidden_dims=[64],
        learning_rate=3e-3,
        epochs=200,
        batch_size=256,
        seed=0,
    )


@pytest.fixture(scope="session")
def two_cluster_joint(two_cluster_data):
    d_train, _, _ = two_cluster_data
    return train_selective_recalibration(d_train, _two_cluster_config("joint"))


@pytest.fixture(scope="session")
def two_cluster_sequential(two_cluster_data):
    d_train, _, _ = two_cluster_data
    return train_selective_recalibration(d_train, _two_cluster_config("sequential"))
