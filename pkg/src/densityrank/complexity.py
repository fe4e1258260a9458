"""External image-complexity proxies, signed so larger means simpler."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import jpeg
from .data import Dataset, Image, to_grayscale
from .scores import DensityScore, ScoreTable


class ComplexityError(ValueError):
    pass


@dataclass(frozen=True)
class ComplexityScore:
    value: float
    proxy_tag: str  # "jpeg" or "gradient"


def tv_gray(img: Image) -> float:
    """Mean absolute horizontal plus mean absolute vertical difference of the
    [0,1]-scaled grayscale image."""
    gray = to_grayscale(img).pixels_f[:, :, 0]
    h, w = gray.shape
    if h < 2 or w < 2:
        raise ComplexityError(f"image too small for TV: {w}x{h}")
    horiz = np.abs(np.diff(gray, axis=1)).mean()
    vert = np.abs(np.diff(gray, axis=0)).mean()
    return float(horiz + vert)


def grad_complexity(img: Image) -> ComplexityScore:
    """Gradient proxy: -log(1 + TV(gray(x)))."""
    return ComplexityScore(value=-float(np.log1p(tv_gray(img))), proxy_tag="gradient")


def jpeg_complexity(img: Image) -> ComplexityScore:
    """Negative compressed byte length under the built-in deterministic codec."""
    return ComplexityScore(value=-float(jpeg.compressed_length(img.pixels_q)), proxy_tag="jpeg")


_PROXIES = {"jpeg": jpeg_complexity, "gradient": grad_complexity}


def complexity_table(ds: Dataset, proxy: str) -> ScoreTable:
    """Score every image with the named proxy ('jpeg' or 'gradient')."""
    try:
        fn = _PROXIES[proxy]
    except KeyError:
        raise ComplexityError(f"unknown proxy {proxy!r}, expected one of {sorted(_PROXIES)}")
    scores = {}
    for id_, img in zip(ds.ids, ds.images):
        try:
            c = fn(img)
        except Exception as e:
            raise ComplexityError(f"id {id_}: {e}") from e
        scores[id_] = DensityScore(total=c.value, estimator_tag=c.proxy_tag)
    return ScoreTable(scores, tag_column="proxy_tag")
