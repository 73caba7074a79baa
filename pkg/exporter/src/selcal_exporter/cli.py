"""selcal-export command line."""

from __future__ import annotations

import argparse
import sys

from .export import ExportJob, export


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="selcal-export", description=__doc__)
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--augmix", action="store_true")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--n-images", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    job = ExportJob(
        model=args.model,
        dataset=args.dataset,
        split=args.split,
        out_path=args.out,
        batch_size=args.batch_size,
        device=args.device,
        augmix=args.augmix,
        checkpoint=args.checkpoint,
        n_images=args.n_images,
        seed=args.seed,
    )
    try:
        result = export(job)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"wrote {args.out}: n={result.n} embed_dim={result.embed_dim} "
        f"num_classes={result.num_classes}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
