"""Headline comparison: location-based positives vs same-image positives.

Trains SimCLR-style runs in both sampling modes on a synthetic survey over
several seeds, probes the frozen latents, and prints macro-F1 means next to
the untrained-encoder baseline.

Usage:
    python scripts/run_comparison.py --out runs/comparison --seeds 0 1 2
"""

import argparse
import csv
from pathlib import Path

import numpy as np

from geossl import evaluation as ev
from geossl.encoder import EncoderParams, init_state
from geossl.objectives import LossConfig
from geossl.survey import GeneratorConfig, generate_survey
from geossl.trainer import OptimConfig, RunConfig, extract_latents, train
from geossl.views import AugmentParams, SamplerConfig

GEN = GeneratorConfig(n_classes=3, habitat_scale_m=40.0, patch_interval_m=2.0,
                      track_spacing_m=4.0, n_patches=2000, image_size=24,
                      patch_tint_std=0.15, observation_noise_std=0.04)
AUG = AugmentParams(global_size=16, local_size=7, n_local=2,
                    crop_scale=(0.7, 1.0), brightness=0.1, contrast=0.1,
                    hue=0.02, blur_sigma=(0.0, 0.0))
ENC = EncoderParams(conv_widths=[8, 16], latent_dim=32, proj_hidden=32,
                    pred_hidden=16, n_prototypes=16)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/comparison")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--lr", type=float, default=0.06)
    ap.add_argument("--r-loc", type=float, default=2.5)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = generate_survey(GEN, 11)
    labels = manifest.labels()

    table, _ = extract_latents((init_state(ENC, 0), AUG.global_size), manifest)
    baseline = ev.evaluate_latents(table, labels, 3, split_seed=0).macro_f1
    print(f"untrained baseline macro-F1: {baseline:.4f}")

    rows = [{"method": "untrained", "mean_f1": f"{baseline:.4f}", "std_f1": "-"}]
    for mode, r_loc in (("standard", 0.0), ("geo", args.r_loc)):
        scores = []
        for seed in args.seeds:
            cfg = RunConfig(objective="simclr", generator=GEN, generator_seed=11,
                            sampler=SamplerConfig(mode=mode, r_loc=r_loc),
                            loss=LossConfig(tau=0.2),
                            optimizer=OptimConfig(lr=args.lr, weight_decay=0.0),
                            augment=AUG, encoder=ENC, batch_size=16,
                            epochs=args.epochs, seed=seed,
                            out_dir=str(out / f"{mode}_s{seed}"))
            rec = train(cfg)
            table, _ = extract_latents(rec.final_checkpoint, manifest)
            f1 = ev.evaluate_latents(table, labels, 3, split_seed=0).macro_f1
            scores.append(f1)
            print(f"{mode} seed {seed}: macro-F1 {f1:.4f}")
        rows.append({"method": mode, "mean_f1": f"{np.mean(scores):.4f}",
                     "std_f1": f"{np.std(scores):.4f}"})
        print(f"{mode}: mean {np.mean(scores):.4f} +- {np.std(scores):.4f}")

    with open(out / "comparison.csv", "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["method", "mean_f1", "std_f1"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {out / 'comparison.csv'}")


if __name__ == "__main__":
    main()
