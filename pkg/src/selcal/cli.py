"""Command-line entry point.

Subcommands: gen-synth, train, eval, sweep, theory, reliability, baseline.
Exit codes: 0 success, 2 validation/input error, 1 internal error. Every
source of randomness sits behind --seed. No command mutates its inputs.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import baselines as B
from . import metrics as M
from . import theorylab as TL
from .dataset import load_dataset, save_dataset
from .errors import ConfigError, SelcalError
from .modelfile import load_model, save_model, train_config_from_dict
from .recalibrate import recalibrated_top_conf
from .selector import choose_threshold, selector_forward
from .train import train_selective_recalibration


def _load_json(path):
    with open(path) as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc


def _write_json(obj, path):
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _synthetic_spec_from_json(obj: dict) -> TL.SyntheticSpec:
    try:
        return TL.make_spec(
            theta_star=np.asarray(obj["theta_star"], dtype=np.float64),
            sigma=float(obj["sigma"]),
            alpha=float(obj["alpha"]),
            r2=float(obj["r2"]),
            beta_mix=float(obj["beta_mix"]),
            m_train=int(obj["m_train"]),
            r1=None if obj.get("r1") is None else float(obj["r1"]),
        )
    except KeyError as exc:
        raise ConfigError(f"synthetic spec is missing field {exc}") from exc


def cmd_gen_synth(args) -> int:
    spec = _synthetic_spec_from_json(_load_json(args.spec))
    ds, _ = TL.make_dataset(spec, n=args.n, seed=args.seed, name=f"synth@{args.seed}")
    save_dataset(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} embed_dim={ds.embed_dim} K={ds.num_classes}")
    return 0


def cmd_train(args) -> int:
    d = load_dataset(args.data)
    cfg = train_config_from_dict(_load_json(args.config))
    if args.seed is not None:
        cfg.seed = args.seed
    if args.noise_std is not None:
        if args.noise_std < 0:
            raise ConfigError("--noise-std must be >= 0")
        cfg.noise_std = args.noise_std
    model = train_selective_recalibration(d, cfg)
    save_model(model, args.out)
    print(
        f"wrote {args.out}: mode={cfg.mode} recalibrator={cfg.recalibrator} "
        f"final_loss={model.loss_trace[-1]:.6f}"
    )
    return 0


def cmd_eval(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model)
    tau = None
    tau_source = args.data
    if args.tune is not None:
        tune = load_dataset(args.tune)
        scores = selector_forward(model.selector, tune.embeddings)
        tau = choose_threshold(scores, args.beta)
        tau_source = args.tune
    report = M.selective_eval(model, d, args.beta, m=args.bins, tau=tau)
    model.selector.tau = report.tau
    doc = report.to_dict()
    doc["tau_source"] = tau_source
    _write_json(doc, args.out)
    print(
        f"wrote {args.out}: beta={args.beta} coverage={report.coverage_achieved:.4f} "
        f"ece1={report.ece1:.5f} ece2={report.ece2:.5f}"
    )
    return 0


def _parse_grid(text: str) -> np.ndarray:
    try:
        a, b, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"bad --beta-grid {text!r}, expected a:b:step") from exc
    if step <= 0 or b < a:
        raise ConfigError(f"bad --beta-grid {text!r}")
    count = int(round((b - a) / step)) + 1
    return np.round(a + step * np.arange(count), 10)


def cmd_sweep(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model)
    grid = _parse_grid(args.beta_grid)
    curve = M.coverage_auc(model, d, grid, m=args.bins)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["beta", "ece1", "ece2", "brier", "accuracy"])
        for i in range(curve.betas.size):
            writer.writerow([
                f"{curve.betas[i]:.6g}", f"{curve.ece1[i]:.8f}",
                f"{curve.ece2[i]:.8f}", f"{curve.brier[i]:.8f}",
                f"{curve.accuracy[i]:.8f}",
            ])
        writer.writerow([
            "auc", f"{curve.auc['ece1']:.8f}", f"{curve.auc['ece2']:.8f}",
            f"{curve.auc['brier']:.8f}", f"{curve.auc['accuracy']:.8f}",
        ])
    print(f"wrote {args.out}: {curve.betas.size} grid points, auc_ece1={curve.auc['ece1']:.5f}")
    return 0


def cmd_theory(args) -> int:
    spec = _synthetic_spec_from_json(_load_json(args.spec))
    report = TL.verify_theorems(spec, seed=args.seed)
    _write_json(report.to_dict(), args.out)
    flags = report.flags
    print(f"wrote {args.out}: " + " ".join(f"{k}={v}" for k, v in flags.items()))
    return 0


def cmd_reliability(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model)
    from .dataset import derive

    conf = recalibrated_top_conf(model.recalibrator, d)
    table = M.reliability_bins(conf, derive(d).correct, m=args.bins)
    with open(args.out, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_index", "mean_conf", "accuracy", "count"])
        for i, (c, a, k) in enumerate(table.rows()):
            writer.writerow([i, f"{c:.8f}", f"{a:.8f}", int(k)])
    print(f"wrote {args.out}: {args.bins} bins over {d.n} instances")
    return 0


def cmd_baseline(args) -> int:
    d = load_dataset(args.data)
    model = load_model(args.model)
    from .dataset import derive

    der = derive(d)
    conf = recalibrated_top_conf(model.recalibrator, d)
    params: dict = {}
    if args.method == "confidence":
        ranking = B.confidence_rank(conf)
    elif args.method == "iforest":
        if d.embed_dim == 0:
            raise ConfigError("iforest baseline needs embeddings")
        params = {"trees": 100, "psi": 256, "seed": args.seed}
        forest = B.iforest_fit(d.embeddings, trees=100, psi=256, seed=args.seed)
        ranking = B.iforest_rank(forest, d.embeddings)
    elif args.method == "mahalanobis":
        if d.embed_dim == 0:
            raise ConfigError("mahalanobis baseline needs embeddings")
        params = {"eps": 1e-3}
        ranking = B.mahalanobis_rank(d.embeddings)
    else:
        raise ConfigError(f"unknown baseline method {args.method!r}")

    mask = B.select_at_coverage(ranking, args.beta)
    kept_conf, kept_corr = conf[mask], der.correct[mask]
    m_eff = min(args.bins, int(mask.sum()))
    doc = {
        "method": args.method,
        "method_params": params,
        "beta": args.beta,
        "n_kept": int(mask.sum()),
        "coverage": float(mask.mean()),
        "ece1": M.ece(kept_conf, kept_corr, q=1, m=m_eff),
        "ece2": M.ece(kept_conf, kept_corr, q=2, m=m_eff),
        "brier": M.brier(kept_conf, kept_corr),
        "accuracy": float(kept_corr.mean()),
    }
    _write_json(doc, args.out)
    print(f"wrote {args.out}: method={args.method} ece1={doc['ece1']:.5f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="selcal", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synth", help="sample the synthetic model into a .selc file")
    g.add_argument("--spec", required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_synth)

    t = sub.add_parser("train", help="train a selective recalibration model")
    t.add_argument("--data", required=True)
    t.add_argument("--config", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=None,
                   help="override the config's seed")
    t.add_argument("--noise-std", type=float, default=None,
                   help="override the config's input-noise augmentation std")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="selective evaluation at one coverage level")
    e.add_argument("--data", required=True)
    e.add_argument("--model", required=True)
    e.add_argument("--beta", type=float, required=True)
    e.add_argument("--bins", type=int, default=15)
    e.add_argument("--tune", default=None,
                   help="optional separate split for choosing tau")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="coverage sweep to CSV with AUC footer")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--beta-grid", required=True)
    s.add_argument("--bins", type=int, default=15)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    th = sub.add_parser("theory", help="verify the separation results numerically")
    th.add_argument("--spec", required=True)
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--out", required=True)
    th.set_defaults(func=cmd_theory)

    r = sub.add_parser("reliability", help="reliability-diagram bin table to CSV")
    r.add_argument("--data", required=True)
    r.add_argument("--model", required=True)
    r.add_argument("--bins", type=int, default=15)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_reliability)

    b = sub.add_parser("baseline", help="selection baseline on the recalibrated model")
    b.add_argument("--data", required=True)
    b.add_argument("--model", required=True)
    b.add_argument("--method", required=True,
                   choices=["confidence", "iforest", "mahalanobis"])
    b.add_argument("--beta", type=float, required=True)
    b.add_argument("--bins", type=int, default=15)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--out", required=True)
    b.set_defaults(func=cmd_baseline)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (SelcalError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
