"""Per-sample score records and their CSV persistence.

One schema serves both density estimates and complexity proxies:
``id,total,latent_term,jacobian_term,<tag column>``. Density tables use a
``estimator_tag`` column, complexity tables ``proxy_tag``. Floats are
rendered with round-trip-exact decimal precision.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass


class ScoreError(ValueError):
    pass


@dataclass(frozen=True)
class DensityScore:
    """Log-density estimate in nats, with its decomposition when available."""

    total: float
    latent_term: float | None = None
    jacobian_term: float | None = None
    estimator_tag: str = ""


@dataclass(frozen=True)
class ScoreTable:
    """Immutable id -> DensityScore mapping, iterated in ascending id order."""

    scores: dict
    tag_column: str = "estimator_tag"

    def __post_init__(self):
        object.__setattr__(self, "scores", dict(sorted(self.scores.items())))

    def __len__(self):
        return len(self.scores)

    def __getitem__(self, id_):
        return self.scores[id_]

    def ids(self):
        return list(self.scores)

    def totals(self) -> dict:
        return {id_: s.total for id_, s in self.scores.items()}

    def map_totals(self, fn, tag=None) -> "ScoreTable":
        """New table with totals transformed by fn(id, score) -> float."""
        out = {
            id_: DensityScore(total=fn(id_, s), estimator_tag=tag or s.estimator_tag)
            for id_, s in self.scores.items()
        }
        return ScoreTable(out, tag_column=self.tag_column)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "total", "latent_term", "jacobian_term", self.tag_column])
            for id_, s in self.scores.items():
                writer.writerow([
                    id_,
                    repr(s.total),
                    "" if s.latent_term is None else repr(s.latent_term),
                    "" if s.jacobian_term is None else repr(s.jacobian_term),
                    s.estimator_tag,
                ])

    @classmethod
    def load_csv(cls, path) -> "ScoreTable":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) != 5 or header[:4] != [
                "id", "total", "latent_term", "jacobian_term",
            ]:
                raise ScoreError(f"bad score CSV header in {path}: {header}")
            tag_column = header[4]
            scores = {}
            for row in reader:
                if len(row) != 5:
                    raise ScoreError(f"bad score CSV row in {path}: {row}")
                id_ = int(row[0])
                scores[id_] = DensityScore(
                    total=float(row[1]),
                    latent_term=float(row[2]) if row[2] else None,
                    jacobian_term=float(row[3]) if row[3] else None,
                    estimator_tag=row[4],
                )
        return cls(scores, tag_column=tag_column)
