"""Gap calculation, shifted-feature selection, and evaluation metrics."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .data import TabularDataset
from .errors import MissingTruth, ValidationError
from .weights import BasisWeight, TableWeight, WeightFunction

LOSSES = ("zero_one",)


@dataclass(frozen=True)
class GroundTruth:
    """Generator-side description of a simulated shift."""

    true_weights: WeightFunction
    true_shift_set: tuple[int, ...]
    true_target_accuracy: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "true_shift_set", tuple(sorted(self.true_shift_set)))


def source_accuracy(ds: TabularDataset) -> float:
    if ds.labels is None or ds.predictions is None:
        raise ValidationError("accuracy needs labels and predictions")
    if ds.n == 0:
        return 0.0
    return float(np.mean(ds.predictions == ds.labels))


def estimate_gap(source: TabularDataset, w: WeightFunction,
                 loss: str = "zero_one") -> float:
    """Estimated accuracy change, positive when target accuracy is higher.

    Reweights the per-row correctness indicator: mean of
    ``(w(x_i, y_i) - 1) * 1{f(x_i) = y_i}`` over the labeled source.
    """
    if loss not in LOSSES:
        raise ValidationError(f"unsupported loss {loss!r}")
    if source.labels is None or source.predictions is None:
        raise ValidationError("gap estimation needs source labels and predictions")
    correct = (source.predictions == source.labels).astype(float)
    weights = w.weights_for(source)
    delta = float(np.mean((weights - 1.0) * correct))
    acc = float(np.mean(correct))
    assert delta >= -acc - 1e-9, "weighted accuracy went negative"
    return delta


def select_features(w: WeightFunction, s: int) -> tuple[int, ...]:
    """Shifted-feature explanation: the table's own index set, or the top-s
    features by group score for basis weights (lower index wins ties)."""
    if isinstance(w, TableWeight):
        return w.index_set
    if isinstance(w, BasisWeight):
        if s <= 0:
            return ()
        from .sees_c import feature_scores

        beta = feature_scores(w.coefficients, w.basis)
        order = sorted(range(1, len(beta) + 1), key=lambda i: (-beta[i - 1], i))
        return tuple(sorted(order[:s]))
    return ()


def score_weights(w: WeightFunction, truth: GroundTruth,
                  eval_points: TabularDataset) -> dict:
    """MSE and Pearson correlation between estimated and true weights.

    PCC is reported as 0 (with a warning) when either side is constant.
    """
    est = np.asarray(w.weights_for(eval_points), dtype=float)
    ref = np.asarray(truth.true_weights.weights_for(eval_points), dtype=float)
    mse = float(np.mean((est - ref) ** 2))
    if np.std(est) == 0.0 or np.std(ref) == 0.0:
        warnings.warn("degenerate weight vector: PCC undefined, reporting 0")
        pcc = 0.0
    else:
        pcc = float(np.corrcoef(est, ref)[0, 1])
    return {"mse": mse, "pcc": pcc}


def score_gap(delta_hat: float, truth: GroundTruth, source_acc: float) -> float:
    """Squared error of the estimated gap against the generator's truth."""
    if truth.true_target_accuracy is None:
        raise MissingTruth("ground truth has no target accuracy")
    delta_true = truth.true_target_accuracy - source_acc
    return float((delta_hat - delta_true) ** 2)
