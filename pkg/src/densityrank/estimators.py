"""Network-induced density estimators.

Three routes to a per-sample log-density score: exact flow likelihood
(latent term + analytic log-determinant), the rectangular-Jacobian
log-volume estimator for generic encoders, and autoregressive
self-estimation by chain-rule summation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Image
from .models.ar import ARModel, ar_conditionals
from .models.encoder import Encoder, encoder_forward
from .models.flow import LOG_2PI, CouplingFlow, flow_forward
from .scores import DensityScore, ScoreTable

DEFAULT_JACOBIAN_EPS = 1e-4
DEFAULT_DEQUANT_SEED = 1234


class EstimatorError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReferenceDensity:
    """Standard normal in R^m (the only implemented reference)."""

    dim: int

    def log_density(self, z: np.ndarray) -> float:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.dim,):
            raise EstimatorError(f"expected feature vector of dim {self.dim}")
        return float(-0.5 * (z * z).sum() - 0.5 * self.dim * LOG_2PI)


def flow_log_density(flow: CouplingFlow, x: np.ndarray) -> DensityScore:
    """Exact change-of-variables likelihood of one continuous input."""
    z, logdet = flow_forward(flow, x)
    latent = ReferenceDensity(flow.input_dim).log_density(z)
    return DensityScore(
        total=latent + logdet,
        latent_term=latent,
        jacobian_term=logdet,
        estimator_tag="flow",
    )


def numerical_jacobian(fn, x: np.ndarray, eps: float = DEFAULT_JACOBIAN_EPS) -> np.ndarray:
    """Central-difference Jacobian of fn: R^D -> R^m, shape (m, D)."""
    if eps <= 0:
        raise EstimatorError("eps must be > 0")
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for j in range(x.shape[0]):
        step = np.zeros_like(x)
        step[j] = eps
        hi = np.asarray(fn(x + step), dtype=np.float64)
        lo = np.asarray(fn(x - step), dtype=np.float64)
        if not (np.isfinite(hi).all() and np.isfinite(lo).all()):
            raise EstimatorError(f"non-finite map output near dimension {j}")
        cols.append((hi - lo) / (2.0 * eps))
    return np.stack(cols, axis=1)


def jacobian_logvol(jac: np.ndarray, tau: float | None = None) -> float:
    """Sum of log singular values above the rank threshold tau.

    tau defaults to max(m, D) * sigma_max * 1e-12; equals log|det J| for
    square nonsingular matrices.
    """
    jac = np.asarray(jac, dtype=np.float64)
    if not np.isfinite(jac).all():
        raise EstimatorError("non-finite Jacobian")
    sigma = np.linalg.svd(jac, compute_uv=False)
    if tau is None:
        tau = max(jac.shape) * (sigma[0] if sigma.size else 0.0) * 1e-12
    kept = sigma[sigma > tau]
    if kept.size == 0:
        raise EstimatorError("degenerate map: all singular values below threshold")
    return float(np.log(kept).sum())


def jacobian_density(enc: Encoder, x: np.ndarray, ref: ReferenceDensity,
                     eps: float = DEFAULT_JACOBIAN_EPS) -> DensityScore:
    """Rectangular-Jacobian estimator for a generic encoder.

    Sign convention: feature-space expansion lowers the input-space
    estimate, so the volume term enters negated.
    """
    if ref.dim != enc.feature_dim:
        raise EstimatorError("reference density dim must equal encoder feature dim")
    latent = ref.log_density(encoder_forward(enc, x))
    jac = numerical_jacobian(lambda v: encoder_forward(enc, v), x, eps)
    jac_term = -jacobian_logvol(jac)
    return DensityScore(
        total=latent + jac_term,
        latent_term=latent,
        jacobian_term=jac_term,
        estimator_tag="jacobian_rect",
    )


def ar_log_density(model: ARModel, xq: np.ndarray) -> DensityScore:
    """Chain-rule log-likelihood of one quantized sequence."""
    total = float(ar_conditionals(model, xq).sum())
    return DensityScore(total=total, estimator_tag="autoregressive")


def _dequantize_one(img: Image, id_, seed) -> np.ndarray:
    """Per-image dequantization keyed by (seed, id): order-independent."""
    rng = np.random.default_rng((seed, id_))
    q = img.flat_q()
    return q / 255.0 + rng.uniform(0.0, 1.0 / 256.0, size=q.shape)


def flow_scorer(flow: CouplingFlow, dequant_seed: int = DEFAULT_DEQUANT_SEED):
    return lambda img, id_: flow_log_density(flow, _dequantize_one(img, id_, dequant_seed))


def ar_scorer(model: ARModel):
    return lambda img, id_: ar_log_density(model, img.flat_q())


def encoder_scorer(enc: Encoder, eps: float = DEFAULT_JACOBIAN_EPS,
                   dequant_seed: int = DEFAULT_DEQUANT_SEED):
    ref = ReferenceDensity(enc.feature_dim)
    return lambda img, id_: jacobian_density(
        enc, _dequantize_one(img, id_, dequant_seed), ref, eps
    )


def score_dataset(scorer, ds: Dataset) -> ScoreTable:
    """Score every image; deterministic and independent of dataset order.

    `scorer` is a callable (Image, id) -> DensityScore, typically built by
    flow_scorer / ar_scorer / encoder_scorer.
    """
    scores = {}
    for id_, img in zip(ds.ids, ds.images):
        try:
            scores[id_] = scorer(img, id_)
        except Exception as e:
            raise EstimatorError(f"id {id_}: {e}") from e
    return ScoreTable(scores)
