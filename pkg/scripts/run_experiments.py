#!/usr/bin/env python3
"""Full experiment pipeline over the pinned configs in scripts/configs/.

Stages (each skippable with --skip):
  base        train the mixed-complexity flow, score and rank the eval split
  ar          train the autoregressive model on the same split
  matrix      rank-correlation matrices: flow, AR, JPEG proxy, gradient proxy
  ldt         retrain on the lowest-density 10% and on the single lowest image
  dominance   latent-term vs volume-term contribution to the flow ranking
  perturb     noise-perturbation density comparison on the simple/complex pair

Everything lands under --out, one subdirectory per stage, each with its own
manifest of SHA-256 file hashes.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from densityrank.analysis import Ranking  # noqa: E402
from densityrank.complexity import complexity_table  # noqa: E402
from densityrank.data import NoiseSpec  # noqa: E402
from densityrank.harness import parse_config_file  # noqa: E402
from densityrank.harness.experiments import (  # noqa: E402
    build_datasets,
    run_base,
    run_dominance,
    run_ldt,
    run_perturbation,
    run_proxy_matrix,
    train_model,
)
from densityrank.models import checkpoint_load  # noqa: E402
from densityrank.scores import ScoreTable  # noqa: E402

CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")
STAGES = ("base", "ar", "matrix", "ldt", "dominance", "perturb")


def load(name):
    return parse_config_file(os.path.join(CONFIG_DIR, name))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output root directory")
    ap.add_argument("--skip", action="append", default=[], choices=STAGES,
                    help="stage to skip (repeatable)")
    args = ap.parse_args()
    out = args.out
    os.makedirs(out, exist_ok=True)
    run = [s for s in STAGES if s not in args.skip]

    base_cfg = load("base.ini")
    ar_cfg = load("ar.ini")
    final_epoch = base_cfg.train.epochs

    if "base" in run:
        print("== base flow run ==", flush=True)
        art = run_base(base_cfg, os.path.join(out, "base"))
        print("  manifest:", art.manifest_path)

    if "ar" in run:
        print("== autoregressive run ==", flush=True)
        art = run_base(ar_cfg, os.path.join(out, "ar"))
        print("  manifest:", art.manifest_path)

    if "matrix" in run:
        print("== correlation matrices ==", flush=True)
        _, eval_ds = build_datasets(base_cfg)
        tables = [
            ("flow", ScoreTable.load_csv(
                os.path.join(out, "base", f"scores_epoch{final_epoch}.csv"))),
            ("ar", ScoreTable.load_csv(
                os.path.join(out, "ar",
                             f"scores_epoch{ar_cfg.train.epochs}.csv"))),
            ("jpeg", complexity_table(eval_ds, "jpeg")),
            ("gradient", complexity_table(eval_ds, "gradient")),
        ]
        run_proxy_matrix(tables, os.path.join(out, "matrix"),
                         stats=("spearman", "kendall"))
        print("  wrote:", os.path.join(out, "matrix_spearman.json"))

    if "ldt" in run:
        base_table = ScoreTable.load_csv(
            os.path.join(out, "base", "scores_train.csv"))
        base_ranking = Ranking.load_json(
            os.path.join(out, "base", f"ranking_epoch{final_epoch}.json"))
        for regime in ("ldt10", "ldt1"):
            print(f"== {regime} retraining ==", flush=True)
            cfg = replace(
                base_cfg,
                experiment=replace(base_cfg.experiment, regime=regime),
                train=replace(
                    base_cfg.train,
                    seed=1 if regime == "ldt10" else 2,
                    epochs=150 if regime == "ldt10" else 60,
                    batch_size=128 if regime == "ldt10" else 1,
                ),
            )
            art = run_ldt(cfg, base_table, base_ranking,
                          os.path.join(out, regime))
            report = json.load(open(os.path.join(out, regime, "ldt_report.json")))
            for c in report["checkpoints"]:
                print(f"  epoch {c['epoch']}: Spearman vs base "
                      f"{c['spearman_vs_base']:+.3f}")

    if "dominance" in run:
        print("== term dominance ==", flush=True)
        model = checkpoint_load(os.path.join(out, "base", "model.ck"))
        _, eval_ds = build_datasets(base_cfg)
        report = run_dominance(model, base_cfg, eval_ds,
                               os.path.join(out, "dominance"))
        print(f"  rho(total, volume) = {report['spearman_total_jacobian']:+.3f}")
        print(f"  rho(total, latent) = {report['spearman_total_latent']:+.3f}")

    if "perturb" in run:
        print("== perturbation reversal ==", flush=True)
        cfg = load("perturb.ini")
        train_ds, eval_ds = build_datasets(cfg)
        model = train_model(cfg, train_ds)

        def tier(k):
            return eval_ds.subset(
                [i for i, m in zip(eval_ds.ids, eval_ds.meta) if m["tier"] == k]
            )

        report = run_perturbation(
            model, cfg,
            tier(cfg.experiment.perturb_train_tier),
            tier(cfg.experiment.perturb_simple_tier),
            NoiseSpec(cfg.experiment.noise_variance, cfg.experiment.noise_seed),
            os.path.join(out, "perturb"),
        )
        print(f"  in-distribution mean: "
              f"{report['in_distribution_eval']['mean_log_density']:+.1f}")
        print(f"  clean simple mean:    "
              f"{report['simple_clean']['mean_log_density']:+.1f}")
        print(f"  noisy simple mean:    "
              f"{report['simple_noisy']['mean_log_density']:+.1f}")

    print("done.")


if __name__ == "__main__":
    main()
