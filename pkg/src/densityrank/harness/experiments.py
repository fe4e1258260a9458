"""Experiment orchestration: training regimes, scoring, artifact emission.

Every run owns its output directory exclusively (lock file), emits score
CSVs, ranking JSONs, correlation matrices (JSON + SVG), PPM rank strips,
and a manifest with SHA-256 hashes of every emitted file.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .. import viz
from ..analysis import (
    AnalysisError,
    CorrelationMatrix,
    Ranking,
    correlation_matrix,
    rank_by_score,
    rank_from_pairs,
    spearman,
    stratified_sample,
)
from ..complexity import complexity_table
from ..data import Dataset, NoiseSpec, add_gaussian_noise, load_cifar10_binary, \
    pixel_variance, save_ppm, synth_complexity_graded
from ..data import Image
from ..estimators import ar_scorer, encoder_scorer, flow_scorer, score_dataset
from ..models import checkpoint_save, train_ar, train_autoencoder, train_flow
from ..scores import DensityScore, ScoreTable
from .config import ExperimentConfig


class HarnessError(RuntimeError):
    pass


@dataclass
class RunArtifacts:
    out_dir: str
    files: dict = field(default_factory=dict)  # relpath -> absolute path
    manifest_path: str = ""
    notes: dict = field(default_factory=dict)

    def add(self, relpath: str) -> str:
        path = os.path.join(self.out_dir, relpath)
        self.files[relpath] = path
        return path


class _OutputLock:
    """One experiment run owns its output directory exclusively."""

    def __init__(self, out_dir):
        self.path = os.path.join(out_dir, ".lock")
        os.makedirs(out_dir, exist_ok=True)
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise HarnessError(
                f"output directory {out_dir} is locked by another run "
                f"(remove {self.path} if stale)"
            )

    def release(self):
        os.close(self.fd)
        os.remove(self.path)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.release()


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(artifacts: RunArtifacts, cfg: ExperimentConfig) -> str:
    manifest = {
        "config_echo": cfg.raw_text,
        "seeds": {
            "train": cfg.train.seed,
            "experiment": cfg.experiment.seed,
            "dequant": cfg.experiment.dequant_seed,
            "dataset": cfg.dataset.seed,
            "eval": cfg.dataset.eval_seed,
        },
        "regime": cfg.experiment.regime,
        "notes": artifacts.notes,
        "files": {
            rel: _sha256(path) for rel, path in sorted(artifacts.files.items())
        },
    }
    path = os.path.join(artifacts.out_dir, "manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts.manifest_path = path
    return path


def build_datasets(cfg: ExperimentConfig):
    """Training and evaluation splits per the dataset spec."""
    d = cfg.dataset
    if d.kind == "cifar10":
        return (
            load_cifar10_binary(d.path, "train"),
            load_cifar10_binary(d.path, "test"),
        )
    train = synth_complexity_graded(d.seed, d.n, d.side, d.levels, contrast=d.contrast)
    eval_ = synth_complexity_graded(d.eval_seed, d.eval_n, d.side, d.levels,
                                    contrast=d.contrast)
    if d.train_tiers:
        keep = set(d.train_tiers)
        train = train.subset(
            [i for i, m in zip(train.ids, train.meta) if m["tier"] in keep],
            name=f"{train.name}-tiers{sorted(keep)}",
        )
    return train, eval_


def train_model(cfg: ExperimentConfig, ds: Dataset, train_cfg=None, epoch_callback=None):
    train_cfg = train_cfg or cfg.train
    m = cfg.model
    if m.family == "flow":
        return train_flow(ds, train_cfg, n_layers=m.layers, hidden=m.hidden,
                          epoch_callback=epoch_callback)
    if m.family == "ar":
        return train_ar(ds, train_cfg, hidden=m.hidden, n_hidden=m.n_hidden,
                        epoch_callback=epoch_callback)
    return train_autoencoder(ds, train_cfg, feature_dim=m.feature_dim, hidden=m.hidden)


def make_scorer(model, cfg: ExperimentConfig):
    family = cfg.model.family
    if family == "flow":
        return flow_scorer(model, dequant_seed=cfg.experiment.dequant_seed)
    if family == "ar":
        return ar_scorer(model)
    return encoder_scorer(model, dequant_seed=cfg.experiment.dequant_seed)


def select_lowest_density(table: ScoreTable, fraction: float | None = None,
                          count: int | None = None):
    """Ids of the lowest-scoring samples; ties broken by ascending id."""
    if len(table) == 0:
        raise HarnessError("empty score table")
    if fraction is not None:
        if not 0.0 < fraction <= 1.0:
            raise HarnessError("fraction must lie in (0, 1]")
        count = math.ceil(fraction * len(table))
    elif count is None:
        count = 1
    if count < 1:
        raise HarnessError("count must be >= 1")
    totals = table.totals()
    order = sorted(totals, key=lambda i: (totals[i], i))
    return order[:count]


def emit_rank_strip(ds: Dataset, ranking: Ranking, bins: int, per_bin: int,
                    path, seed: int = 0) -> None:
    """Contact sheet PPM: one column per stratum, highest density leftmost,
    1-pixel white separators."""
    groups = stratified_sample(ranking, bins, per_bin, seed)
    h, w, c = ds.image_shape
    out_w = bins * (w + 1) - 1
    out_h = per_bin * (h + 1) - 1
    sheet = np.full((out_h, out_w, c), 255, dtype=np.uint8)
    for col, ids in enumerate(groups):
        for row, id_ in enumerate(ids):
            img = ds.image_by_id(id_)
            y, x = row * (h + 1), col * (w + 1)
            sheet[y : y + h, x : x + w] = img.pixels_q
    save_ppm(Image.from_quantized(sheet), path)


def _score_and_emit(artifacts, scorer, eval_ds, epoch) -> Ranking:
    table = score_dataset(scorer, eval_ds)
    table.save_csv(artifacts.add(f"scores_epoch{epoch}.csv"))
    ranking = rank_by_score(table)
    ranking.save_json(artifacts.add(f"ranking_epoch{epoch}.json"))
    return ranking


def run_base(cfg: ExperimentConfig, out_dir) -> RunArtifacts:
    """Train on the full training split, score the evaluation split at each
    checkpoint, and emit score tables, rankings, and the rank strip."""
    exp = cfg.experiment
    artifacts = RunArtifacts(out_dir=out_dir)
    with _OutputLock(out_dir):
        train_ds, eval_ds = build_datasets(cfg)
        train_cfg = cfg.train
        if exp.regime == "ut":
            train_cfg = type(train_cfg)(**{**train_cfg.asdict(), "epochs": 0})
        checkpoints = set(cfg.checkpoint_epochs) | {train_cfg.epochs}
        rankings = {}

        def callback(epoch, model):
            if epoch in checkpoints:
                rankings[epoch] = _score_and_emit(
                    artifacts, make_scorer(model, cfg), eval_ds, epoch
                )

        model = train_model(cfg, train_ds, train_cfg=train_cfg, epoch_callback=callback)
        if getattr(model, "diverged_at", None) is not None:
            artifacts.notes["diverged_at_epoch"] = model.diverged_at
        final_epoch = max(rankings) if rankings else train_cfg.epochs
        if final_epoch not in rankings:
            rankings[final_epoch] = _score_and_emit(
                artifacts, make_scorer(model, cfg), eval_ds, final_epoch
            )
        checkpoint_save(model, artifacts.add("model.ck"))

        # training-split scores drive LDT subset selection downstream
        train_table = score_dataset(make_scorer(model, cfg), train_ds)
        train_table.save_csv(artifacts.add("scores_train.csv"))
        lowest = select_lowest_density(train_table, count=1)[0]
        artifacts.notes["lowest_density_train_id"] = lowest
        artifacts.notes["regime"] = exp.regime
        artifacts.notes["train_curve"] = getattr(model, "train_curve", [])

        final = rankings[final_epoch]
        if exp.bins <= len(final) and exp.per_bin >= 1:
            emit_rank_strip(
                eval_ds, final, exp.bins, exp.per_bin,
                artifacts.add("rank_strip.ppm"), seed=exp.seed,
            )
        write_manifest(artifacts, cfg)
    return artifacts


def run_ldt(cfg: ExperimentConfig, base_table: ScoreTable, base_ranking: Ranking,
            out_dir) -> RunArtifacts:
    """Retrain from fresh initialization on the lowest-density subset and
    compare each checkpoint's evaluation ranking against the base ranking."""
    exp = cfg.experiment
    if exp.regime not in ("ldt10", "ldt1"):
        raise HarnessError(f"run_ldt needs regime ldt10 or ldt1, got {exp.regime!r}")
    artifacts = RunArtifacts(out_dir=out_dir)
    with _OutputLock(out_dir):
        train_ds, eval_ds = build_datasets(cfg)
        missing = set(base_table.ids()) - set(train_ds.ids)
        if missing:
            raise HarnessError("base score table does not match the training split")
        if exp.regime == "ldt10":
            subset_ids = select_lowest_density(base_table, fraction=exp.ldt_fraction)
        else:
            subset_ids = select_lowest_density(base_table, count=1)
        subset = train_ds.subset(subset_ids, name=f"{train_ds.name}-{exp.regime}")
        artifacts.notes["subset_size"] = len(subset)
        artifacts.notes["subset_ids_head"] = list(subset_ids[:16])

        # fresh initialization, deliberately not the base seed
        train_cfg = type(cfg.train)(**{
            **cfg.train.asdict(),
            "seed": cfg.train.seed + 1,
            "batch_size": min(cfg.train.batch_size, len(subset)),
        })
        artifacts.notes["fresh_init_seed"] = train_cfg.seed

        rankings = {}
        targets = {e for e in cfg.checkpoint_epochs if e <= train_cfg.epochs}
        targets.add(train_cfg.epochs)

        def callback(epoch, model):
            if epoch in targets:
                rankings[epoch] = _score_and_emit(
                    artifacts, make_scorer(model, cfg), eval_ds, epoch
                )

        model = train_model(cfg, subset, train_cfg=train_cfg, epoch_callback=callback)
        if getattr(model, "diverged_at", None) is not None:
            artifacts.notes["diverged_at_epoch"] = model.diverged_at
        if train_cfg.epochs not in rankings:
            rankings[train_cfg.epochs] = _score_and_emit(
                artifacts, make_scorer(model, cfg), eval_ds, train_cfg.epochs
            )
        checkpoint_save(model, artifacts.add("model.ck"))

        report = {
            "regime": exp.regime,
            "subset_size": len(subset),
            "checkpoints": [
                {"epoch": e, "spearman_vs_base": spearman(rankings[e], base_ranking)}
                for e in sorted(rankings)
            ],
        }
        with open(artifacts.add("ldt_report.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        write_manifest(artifacts, cfg)
    return artifacts


def run_perturbation(model, cfg: ExperimentConfig, ds_a_eval: Dataset,
                     ds_b: Dataset, spec: NoiseSpec, out_dir) -> dict:
    """Mean log-density of in-distribution eval data, a simpler dataset, and
    the noisy version of the simpler dataset, with pixel-variance context."""
    artifacts = RunArtifacts(out_dir=out_dir)
    with _OutputLock(out_dir):
        scorer = make_scorer(model, cfg)
        noisy_b = add_gaussian_noise(ds_b, spec)

        def stats(ds):
            table = score_dataset(scorer, ds)
            per_chan, pooled = pixel_variance(ds)
            totals = list(table.totals().values())
            return {
                "mean_log_density": float(np.mean(totals)),
                "pixel_variance_pooled": pooled,
                "pixel_variance_per_channel": [float(v) for v in per_chan],
                "n": len(ds),
            }, totals

        rep_a, tot_a = stats(ds_a_eval)
        rep_b, tot_b = stats(ds_b)
        rep_nb, tot_nb = stats(noisy_b)
        report = {
            "noise_variance": spec.variance,
            "noise_seed": spec.seed,
            "in_distribution_eval": rep_a,
            "simple_clean": rep_b,
            "simple_noisy": rep_nb,
        }
        with open(artifacts.add("perturbation.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        viz.render_histograms_svg(
            {
                "in-distribution": tot_a,
                "simple clean": tot_b,
                "simple noisy": tot_nb,
            },
            artifacts.add("perturbation_hist.svg"),
        )
        write_manifest(artifacts, cfg)
    return report


def run_dominance(flow, cfg: ExperimentConfig, ds: Dataset, out_dir) -> dict:
    """Spearman correlations between total, latent, and Jacobian rankings."""
    artifacts = RunArtifacts(out_dir=out_dir)
    with _OutputLock(out_dir):
        table = score_dataset(flow_scorer(flow, cfg.experiment.dequant_seed), ds)
        table.save_csv(artifacts.add("scores.csv"))
        totals = rank_by_score(table)
        report = {"n": len(table)}

        def corr(name, pairs_a, pairs_b):
            try:
                report[name] = spearman(rank_from_pairs(pairs_a), rank_from_pairs(pairs_b))
            except AnalysisError as e:
                report[name] = None
                report[f"{name}_undefined_reason"] = str(e)

        tot = list(table.totals().items())
        lat = [(i, s.latent_term) for i, s in table.scores.items()]
        jac = [(i, s.jacobian_term) for i, s in table.scores.items()]
        corr("spearman_total_jacobian", tot, jac)
        corr("spearman_total_latent", tot, lat)
        corr("spearman_latent_jacobian", lat, jac)
        report["std_latent_term"] = float(np.std([v for _, v in lat]))
        report["std_jacobian_term"] = float(np.std([v for _, v in jac]))
        with open(artifacts.add("dominance.json"), "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
        write_manifest(artifacts, cfg)
    return report


def run_proxy_matrix(tables, out_prefix, stats=("spearman",),
                     corrected_from=("flow", "jpeg")) -> dict:
    """Correlation matrices over labeled score tables.

    `tables` is a list of (label, ScoreTable). When both labels named in
    `corrected_from` are present, an additive corrected score table
    (their per-id sum, no renormalization) is appended.
    """
    tables = list(tables)
    labels = [lbl for lbl, _ in tables]
    if len(set(labels)) != len(labels):
        raise HarnessError("duplicate table labels")
    a, b = corrected_from
    if a in labels and b in labels:
        ta = dict(tables)[a]
        tb = dict(tables)[b]
        if set(ta.ids()) != set(tb.ids()):
            raise HarnessError("corrected-score inputs cover different id sets")
        corrected = ta.map_totals(
            lambda id_, s: s.total + tb[id_].total, tag=f"{a}+{b}_complexity"
        )
        tables.append((f"{a}+{b}_complexity", corrected))

    rankings = [(lbl, rank_by_score(t)) for lbl, t in tables]
    out = {}
    for stat in stats:
        matrix = correlation_matrix(rankings, stat=stat)
        matrix.save_json(f"{out_prefix}_{stat}.json")
        viz.render_correlation_svg(matrix, f"{out_prefix}_{stat}.svg")
        out[stat] = matrix
    return out


def score_complexity_tables(ds: Dataset):
    """Both proxies for a dataset, ready for run_proxy_matrix."""
    return [
        ("jpeg", complexity_table(ds, "jpeg")),
        ("gradient", complexity_table(ds, "gradient")),
    ]
