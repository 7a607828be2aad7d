#!/usr/bin/env python3
"""Train the boundary-to-solution surrogate on an exported dataset.

Example:
    python train.py --data datasets/laplace --epochs 120 --lr 1e-3 \
        --out weights.json --seed 0
"""
import argparse
import sys

from surrtrain.training import train


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--data", required=True, help="dataset directory with manifest.json")
    p.add_argument("--epochs", type=int, default=120)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--out", required=True, help="weight file to write")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--width", type=int, default=128)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--latent", type=int, default=64)
    p.add_argument("--boundary-samples", type=int, default=64)
    p.add_argument(
        "--augment", default="rotation",
        choices=["none", "rotation", "rotation+scaling"],
    )
    p.add_argument("--scale-min", type=float, default=0.8)
    p.add_argument("--scale-max", type=float, default=1.0)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--points", type=int, default=64)
    args = p.parse_args(argv)

    ops = {
        "none": (),
        "rotation": ("rotation",),
        "rotation+scaling": ("rotation", "scaling"),
    }[args.augment]
    report = train(
        args.data,
        epochs=args.epochs,
        lr=args.lr,
        arch={"M": args.boundary_samples, "p": args.latent,
              "width": args.width, "depth": args.depth},
        seed=args.seed,
        out_weights=args.out,
        augment_ops=ops,
        scale_range=(args.scale_min, args.scale_max),
        batch_records=args.batch,
        points_per_record=args.points,
    )
    print(
        f"val_l2_rel {report.val_l2_rel:.4f} over {report.n_val} held-out records; "
        f"weights -> {args.out}"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
