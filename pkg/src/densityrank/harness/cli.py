"""Command-line front end.

Every subcommand takes ``--config`` (experiment config file), ``--out``
(output file or directory), and optional ``--seed`` (overrides the
experiment seed). Successful runs exit 0; failures print a single
machine-readable JSON object to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from ..analysis import Ranking, rank_by_score
from ..complexity import complexity_table
from ..data import NoiseSpec
from ..estimators import score_dataset
from ..models import checkpoint_load
from ..scores import ScoreTable
from . import experiments
from .config import parse_config_file


class CliError(RuntimeError):
    pass


def _load_config(args):
    cfg = parse_config_file(args.config)
    if args.seed is not None:
        cfg = replace(cfg, experiment=replace(cfg.experiment, seed=args.seed))
    return cfg


def _eval_split(cfg):
    _, eval_ds = experiments.build_datasets(cfg)
    return eval_ds


def _tier_subset(ds, tier, name):
    ids = [i for i, m in zip(ds.ids, ds.meta) if m.get("tier") == tier]
    if not ids:
        raise CliError(f"no images in tier {tier}")
    return ds.subset(ids, name=name)


def cmd_train(args):
    cfg = _load_config(args)
    artifacts = experiments.run_base(cfg, args.out)
    print(artifacts.manifest_path)


def cmd_score(args):
    cfg = _load_config(args)
    model = checkpoint_load(args.model)
    ds = _eval_split(cfg) if args.split == "eval" else experiments.build_datasets(cfg)[0]
    table = score_dataset(experiments.make_scorer(model, cfg), ds)
    table.save_csv(args.out)
    print(args.out)


def cmd_rank(args):
    table = ScoreTable.load_csv(args.scores)
    rank_by_score(table).save_json(args.out)
    print(args.out)


def cmd_ldt(args):
    cfg = _load_config(args)
    base_table = ScoreTable.load_csv(
        os.path.join(args.base, "scores_train.csv")
    )
    base_ranking = Ranking.load_json(args.base_ranking)
    artifacts = experiments.run_ldt(cfg, base_table, base_ranking, args.out)
    print(artifacts.manifest_path)


def cmd_perturb(args):
    cfg = _load_config(args)
    exp = cfg.experiment
    train_ds, eval_ds = experiments.build_datasets(cfg)
    complex_train = _tier_subset(train_ds, exp.perturb_train_tier, "complex-train")
    if args.model:
        model = checkpoint_load(args.model)
    else:
        model = experiments.train_model(cfg, complex_train)
    complex_eval = _tier_subset(eval_ds, exp.perturb_train_tier, "complex-eval")
    simple_eval = _tier_subset(eval_ds, exp.perturb_simple_tier, "simple-eval")
    report = experiments.run_perturbation(
        model, cfg, complex_eval, simple_eval,
        NoiseSpec(variance=exp.noise_variance, seed=exp.noise_seed), args.out,
    )
    json.dump(report, sys.stdout, indent=2)
    print()


def cmd_dominance(args):
    cfg = _load_config(args)
    if cfg.model.family != "flow":
        raise CliError("dominance analysis needs a flow model config")
    if args.model:
        model = checkpoint_load(args.model)
    else:
        train_ds, _ = experiments.build_datasets(cfg)
        model = experiments.train_model(cfg, train_ds)
    report = experiments.run_dominance(model, cfg, _eval_split(cfg), args.out)
    json.dump(report, sys.stdout, indent=2)
    print()


def cmd_matrix(args):
    cfg = _load_config(args)
    eval_ds = _eval_split(cfg)
    tables = []
    for spec in args.scores or []:
        label, _, path = spec.partition("=")
        if not path:
            raise CliError(f"--scores expects label=path, got {spec!r}")
        tables.append((label, ScoreTable.load_csv(path)))
    tables += experiments.score_complexity_tables(eval_ds)
    experiments.run_proxy_matrix(tables, args.out, stats=("spearman", "kendall"))
    print(args.out)


def cmd_strip(args):
    cfg = _load_config(args)
    eval_ds = _eval_split(cfg)
    ranking = Ranking.load_json(args.ranking)
    experiments.emit_rank_strip(
        eval_ds, ranking, cfg.experiment.bins, cfg.experiment.per_bin,
        args.out, seed=cfg.experiment.seed,
    )
    print(args.out)


def cmd_report(args):
    run_dir = args.run
    manifest_path = os.path.join(run_dir, "manifest.json")
    if not os.path.isfile(manifest_path):
        raise CliError(f"no manifest.json in {run_dir}")
    with open(manifest_path) as fh:
        manifest = json.load(fh)
    lines = [
        "# Run report",
        "",
        f"- regime: {manifest.get('regime')}",
        f"- seeds: {json.dumps(manifest.get('seeds'))}",
        f"- notes: {json.dumps(manifest.get('notes'))}",
        "",
        "## Files",
        "",
    ]
    for rel, digest in sorted(manifest.get("files", {}).items()):
        lines.append(f"- `{rel}` sha256 `{digest}`")
    for extra in ("ldt_report.json", "perturbation.json", "dominance.json"):
        path = os.path.join(run_dir, extra)
        if os.path.isfile(path):
            with open(path) as fh:
                lines += ["", f"## {extra}", "", "```json",
                          fh.read().rstrip(), "```"]
    text = "\n".join(lines) + "\n"
    with open(args.out, "w") as fh:
        fh.write(text)
    print(args.out)


def build_parser():
    p = argparse.ArgumentParser(
        prog="densityrank",
        description="Density-ranking experiments: train, score, rank, analyze.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, config=True):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", required=True, help="experiment config file")
        sp.add_argument("--out", required=True, help="output file or directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the experiment seed")
        sp.set_defaults(fn=fn)
        return sp

    add("train", cmd_train, "train a model and emit a full run directory")
    sp = add("score", cmd_score, "score a dataset split with a saved model")
    sp.add_argument("--model", required=True, help="model checkpoint (.ck)")
    sp.add_argument("--split", choices=("train", "eval"), default="eval")
    sp = add("rank", cmd_rank, "turn a score CSV into a ranking JSON", config=False)
    sp.add_argument("--scores", required=True, help="score CSV path")
    sp = add("ldt", cmd_ldt, "retrain on the lowest-density subset and compare")
    sp.add_argument("--base", required=True, help="base run directory")
    sp.add_argument("--base-ranking", required=True, help="base eval ranking JSON")
    sp = add("perturb", cmd_perturb, "noise-perturbation density comparison")
    sp.add_argument("--model", default=None, help="optional model checkpoint")
    sp = add("dominance", cmd_dominance, "latent/Jacobian term dominance analysis")
    sp.add_argument("--model", default=None, help="optional model checkpoint")
    sp = add("matrix", cmd_matrix, "cross-estimator/proxy correlation matrices")
    sp.add_argument("--scores", action="append", default=None, metavar="LABEL=CSV",
                    help="extra score tables to include (repeatable)")
    sp = add("strip", cmd_strip, "rank-ordered image contact sheet (PPM)")
    sp.add_argument("--ranking", required=True, help="ranking JSON path")
    sp = add("report", cmd_report, "summarize a run directory as markdown",
             config=False)
    sp.add_argument("--run", required=True, help="run directory with manifest.json")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.fn(args)
    except Exception as e:  # noqa: BLE001 - single exit point for error JSON
        json.dump(
            {"error": type(e).__name__, "message": str(e)},
            sys.stderr,
        )
        sys.stderr.write("\n")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
