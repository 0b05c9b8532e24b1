"""Empirical probability mass tables and quantile discretization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CONTINUOUS, DISCRETE, Column, FeatureSchema, TabularDataset
from .errors import MissingAxis, SchemaMismatch, TooFewDistinctValues, ValidationError

PREDICTION = "prediction"
LABEL = "label"

MAX_TABLE_CELLS = 10**7


@dataclass(frozen=True)
class EmpiricalPmf:
    """Normalized mass table over a tuple of axes.

    Each axis is a 1-based feature index, or one of the sentinels
    ``PREDICTION`` / ``LABEL``. ``sample_count`` is 0 for population
    (exact) tables.
    """

    axes: tuple
    cardinalities: tuple[int, ...]
    mass: np.ndarray
    sample_count: int

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        object.__setattr__(self, "cardinalities", tuple(self.cardinalities))
        mass = np.asarray(self.mass, dtype=float)
        if mass.shape != self.cardinalities:
            raise ValidationError(
                f"mass shape {mass.shape} != cardinalities {self.cardinalities}"
            )
        mass = mass.copy()
        mass.setflags(write=False)
        object.__setattr__(self, "mass", mass)

    def total(self) -> float:
        return float(self.mass.sum())

    def marginal(self, axes) -> "EmpiricalPmf":
        """Sum out everything except ``axes``, returned in the given order."""
        axes = tuple(axes)
        try:
            keep = [self.axes.index(a) for a in axes]
        except ValueError as exc:
            raise MissingAxis(f"axis not in table: {exc}") from exc
        drop = tuple(i for i in range(len(self.axes)) if i not in keep)
        summed = self.mass.sum(axis=drop) if drop else self.mass
        # .sum keeps the surviving axes in original order; reorder to request
        survivors = [i for i in range(len(self.axes)) if i not in drop]
        perm = [survivors.index(i) for i in keep]
        summed = np.transpose(summed, perm) if perm else summed.reshape(())
        return EmpiricalPmf(
            axes=axes,
            cardinalities=tuple(self.cardinalities[i] for i in keep),
            mass=summed,
            sample_count=self.sample_count,
        )


def _axis_column(ds: TabularDataset, axis) -> tuple[np.ndarray, int]:
    """Resolve one axis to (0-based codes, cardinality)."""
    if axis == PREDICTION:
        if ds.predictions is None:
            raise MissingAxis("dataset has no predictions")
        return ds.predictions - 1, ds.schema.n_labels
    if axis == LABEL:
        if ds.labels is None:
            raise MissingAxis("dataset has no labels")
        return ds.labels - 1, ds.schema.n_labels
    col = ds.schema.column(int(axis))
    if col.kind != DISCRETE:
        raise MissingAxis(f"column {col.name!r} is continuous; discretize first")
    return ds.column_values(int(axis)).astype(int) - 1, col.cardinality


def estimate_pmf(ds: TabularDataset, axes, alpha: float = 0.0) -> EmpiricalPmf:
    """Empirical joint mass of the requested axes.

    ``alpha`` adds Laplace smoothing mass to every cell before normalizing
    (off by default; used only to condition baseline linear systems).
    """
    axes = tuple(axes)
    codes, cards = [], []
    for a in axes:
        c, k = _axis_column(ds, a)
        codes.append(c)
        cards.append(k)
    n_cells = int(np.prod(cards)) if cards else 1
    if n_cells > MAX_TABLE_CELLS:
        raise ValidationError(f"refusing to materialize table with {n_cells} cells")
    if not axes:
        return EmpiricalPmf(axes=(), cardinalities=(), mass=np.array(1.0), sample_count=ds.n)
    if ds.n == 0 and alpha == 0.0:
        raise ValidationError("cannot estimate a pmf from an empty dataset")
    flat = np.ravel_multi_index(codes, cards) if ds.n else np.array([], dtype=int)
    counts = np.bincount(flat, minlength=n_cells).astype(float) + alpha
    mass = counts / counts.sum()
    return EmpiricalPmf(
        axes=axes,
        cardinalities=tuple(cards),
        mass=mass.reshape(cards),
        sample_count=ds.n,
    )


@dataclass(frozen=True)
class Discretizer:
    """Per-column quantile bin edges for the continuous columns of a schema.

    Edges are interior boundaries; value ``v`` lands in bin
    ``1 + #{edges <= v}`` so a value equal to an edge goes to the higher
    bin, and out-of-range values clamp to the end bins.
    """

    schema: FeatureSchema
    bins: int
    edges: dict

    def cardinality(self, index: int) -> int:
        return len(self.edges[index]) + 1


def fit_discretizer(ds: TabularDataset, bins: int = 5) -> Discretizer:
    """Equal-frequency edges for every continuous column of ``ds``."""
    if bins < 2:
        raise ValidationError("bins must be >= 2")
    edges: dict[int, np.ndarray] = {}
    for j, col in enumerate(ds.schema.columns, start=1):
        if col.kind != CONTINUOUS:
            continue
        vals = ds.rows[:, j - 1]
        if np.unique(vals).size < bins:
            raise TooFewDistinctValues(col.name, int(np.unique(vals).size), bins)
        qs = np.arange(1, bins) / bins
        e = np.unique(np.quantile(vals, qs))
        e.setflags(write=False)
        edges[j] = e
    return Discretizer(schema=ds.schema, bins=bins, edges=edges)


def apply_discretizer(disc: Discretizer, ds: TabularDataset) -> TabularDataset:
    """Replace continuous columns by their bin codes.

    Idempotent on already-discrete datasets (no continuous columns means
    nothing to do).
    """
    a, b = disc.schema, ds.schema
    if a.d != b.d or any(
        (ca.name, ca.kind, ca.cardinality) != (cb.name, cb.kind, cb.cardinality)
        for ca, cb in zip(a.columns, b.columns)
    ):
        raise SchemaMismatch("dataset schema differs from the discretizer's fitting schema")
    if not disc.edges:
        return ds
    rows = np.array(ds.rows)
    new_cols = []
    for j, col in enumerate(ds.schema.columns, start=1):
        if col.kind != CONTINUOUS:
            new_cols.append(col)
            continue
        e = disc.edges[j]
        binned = np.searchsorted(e, rows[:, j - 1], side="right") + 1
        rows[:, j - 1] = np.clip(binned, 1, len(e) + 1)
        new_cols.append(Column(col.name, DISCRETE, len(e) + 1))
    schema = FeatureSchema(
        columns=tuple(new_cols),
        label_cardinality=ds.schema.label_cardinality,
        label_name=ds.schema.label_name,
        label_categories=ds.schema.label_categories,
    )
    return TabularDataset(
        schema=schema,
        rows=rows,
        labels=ds.labels,
        predictions=ds.predictions,
        pred_probs=ds.pred_probs,
    )
