"""Importance-weight representations.

A weight function assigns w(x, y) >= 0 to each row of a dataset; the
estimators exchange these objects. Lookup-table weights (over a small
feature subset and the label) and basis-expansion weights follow the two
canonical parameterizations; kernel and classifier-ratio weights carry the
feature-only baselines, which ignore y by construction.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from types import MappingProxyType

import numpy as np

from .data import TabularDataset
from .errors import ValidationError


class WeightFunction:
    """Shared surface: per-row evaluation plus source-mean normalization."""

    def weights_for(self, ds: TabularDataset) -> np.ndarray:
        raise NotImplementedError

    def normalized(self, source: TabularDataset) -> "WeightFunction":
        """Rescale so the empirical source expectation of the weight is 1."""
        mean = float(np.mean(self.weights_for(source)))
        if mean <= 0:
            raise ValidationError("cannot normalize: source mean weight is 0")
        return self._scaled(1.0 / mean)

    def _scaled(self, factor: float) -> "WeightFunction":
        raise NotImplementedError


def _require_labels(ds: TabularDataset) -> np.ndarray:
    if ds.labels is None:
        raise ValidationError("weight evaluation needs labels on this dataset")
    return ds.labels


@dataclass(frozen=True)
class TableWeight(WeightFunction):
    """Lookup table over (x_J, y) with a neutral fallback for unseen keys.

    ``index_set`` holds sorted 1-based feature indices; keys are
    ``(x_J value tuple, y)``. Unseen keys evaluate to ``fallback`` (1.0 by
    default: absent source mass gives no evidence of shift) and are counted
    by :meth:`fallback_hits`.
    """

    index_set: tuple[int, ...]
    table: dict
    fallback: float = 1.0

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.index_set))
        if idx != tuple(self.index_set):
            raise ValidationError("index_set must be sorted")
        object.__setattr__(self, "index_set", idx)
        tbl = {}
        for (xj, y), w in self.table.items():
            if w < 0:
                raise ValidationError(f"negative weight for {(xj, y)}: {w}")
            tbl[tuple(int(v) for v in xj), int(y)] = float(w)
        object.__setattr__(self, "table", MappingProxyType(tbl))

    def _keys_for(self, ds: TabularDataset):
        y = _require_labels(ds)
        cols = [ds.column_values(j).astype(int) for j in self.index_set]
        for i in range(ds.n):
            yield tuple(c[i] for c in cols), int(y[i])

    def weights_for(self, ds: TabularDataset) -> np.ndarray:
        return np.array([self.table.get(k, self.fallback) for k in self._keys_for(ds)])

    def fallback_hits(self, ds: TabularDataset) -> int:
        return sum(1 for k in self._keys_for(ds) if k not in self.table)

    def value(self, x_j, y: int) -> float:
        return self.table.get((tuple(int(v) for v in x_j), int(y)), self.fallback)

    def _scaled(self, factor: float) -> "TableWeight":
        return replace(self, table={k: w * factor for k, w in self.table.items()})


@dataclass(frozen=True)
class BasisWeight(WeightFunction):
    """w(x, y) = sum_k a[k, y-1] * phi_k(x, y) for a nonnegative K x L matrix."""

    coefficients: np.ndarray
    basis: object  # BasisSet; duck-typed to avoid an import cycle

    def __post_init__(self):
        a = np.asarray(self.coefficients, dtype=float)
        if (a < 0).any():
            raise ValidationError("basis coefficients must be nonnegative")
        a = a.copy()
        a.setflags(write=False)
        object.__setattr__(self, "coefficients", a)

    def weights_for(self, ds: TabularDataset) -> np.ndarray:
        y = _require_labels(ds)
        return self.basis.weight_values(ds.rows, y, self.coefficients)

    def _scaled(self, factor: float) -> "BasisWeight":
        return replace(self, coefficients=self.coefficients * factor)


@dataclass(frozen=True)
class KernelWeight(WeightFunction):
    """Gaussian-kernel mixture w(x) = scale * sum_b alpha_b k(x, c_b)."""

    centers: np.ndarray
    alphas: np.ndarray
    gamma: float
    encoder: object  # callable TabularDataset -> (n, p) float matrix
    scale: float = 1.0

    def weights_for(self, ds: TabularDataset) -> np.ndarray:
        x = self.encoder(ds)
        sq = (
            (x * x).sum(axis=1)[:, None]
            - 2.0 * x @ self.centers.T
            + (self.centers * self.centers).sum(axis=1)[None, :]
        )
        k = np.exp(-self.gamma * np.maximum(sq, 0.0))
        return self.scale * (k @ self.alphas)

    def _scaled(self, factor: float) -> "KernelWeight":
        return replace(self, scale=self.scale * factor)


@dataclass(frozen=True)
class ModelRatioWeight(WeightFunction):
    """w(x) = scale * clip(rho/(1-rho) * prior_ratio) from a domain classifier."""

    model: object  # predictor.LogisticModel scoring P(target | x)
    prior_ratio: float
    clip_hi: float = 100.0
    scale: float = 1.0

    def weights_for(self, ds: TabularDataset) -> np.ndarray:
        from .predictor import predict_probs

        rho = predict_probs(self.model, ds)[:, 1]
        raw = rho / np.maximum(1.0 - rho, 1e-12) * self.prior_ratio
        return self.scale * np.clip(raw, 0.0, self.clip_hi)

    def _scaled(self, factor: float) -> "ModelRatioWeight":
        return replace(self, scale=self.scale * factor)
