"""Discrete-feature shift estimator: candidate-subset marginal matching.

For each candidate shifted set J of size s, the target marginal over every
2s-sized superset kappa (joined with the model's prediction) is matched
against the reweighted source marginal by box-constrained least squares;
the candidate attaining the smallest residual wins. For a fixed value of
x_J the unknowns are the L weights w(x_J, .), so the system decouples into
tiny per-cell blocks.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .data import TabularDataset
from .errors import TooManyCandidates, ValidationError
from .tabulate import LABEL, PREDICTION, EmpiricalPmf, estimate_pmf
from .weights import TableWeight

TIE_TOL = 1e-12


@dataclass(frozen=True)
class SeesDConfig:
    sparsity: int
    weight_bound: float = 20.0
    min_mass_floor: float = 0.0
    parallel: bool = False
    solver_tol: float = 1e-10
    solver_max_iters: int = 10000

    def __post_init__(self):
        if self.sparsity < 0:
            raise ValidationError("sparsity must be >= 0")
        if self.weight_bound < 1:
            raise ValidationError("weight bound must be >= 1")
        if self.min_mass_floor < 0:
            raise ValidationError("min_mass_floor must be >= 0")


@dataclass(frozen=True)
class CandidateFit:
    index_set: tuple[int, ...]
    weights: TableWeight
    distance: float
    unconstrained_cells: int = 0
    solver_iterations: int = 0


def thread_cap() -> int:
    raw = os.environ.get("SHIFTSCOPE_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    return cap if cap > 0 else (os.cpu_count() or 1)


def enumerate_kappas(J, d: int, s: int) -> list[tuple[int, ...]]:
    """All supersets of J with min(2s, d) members, sorted lexicographically."""
    J = tuple(sorted(int(j) for j in J))
    if d < 1:
        raise ValidationError("d must be >= 1")
    if len(J) != s:
        raise ValidationError(f"|J| = {len(J)} but s = {s}")
    if any(not 1 <= j <= d for j in J):
        raise ValidationError(f"candidate {J} outside 1..{d}")
    size = min(2 * s, d)
    rest = [i for i in range(1, d + 1) if i not in J]
    out = [tuple(sorted(J + extra)) for extra in combinations(rest, size - len(J))]
    return sorted(out)


class _SampleTables:
    """Marginal tables estimated from source/target samples."""

    def __init__(self, source: TabularDataset, target: TabularDataset):
        if source.labels is None or source.predictions is None:
            raise ValidationError("source needs labels and predictions")
        if target.predictions is None:
            raise ValidationError("target needs predictions")
        self.source = source
        self.target = target
        self.d = source.schema.d
        self.n_labels = source.schema.n_labels

    def q(self, kappa) -> np.ndarray:
        return estimate_pmf(self.target, (*kappa, PREDICTION)).mass

    def p(self, kappa) -> np.ndarray:
        return estimate_pmf(self.source, (*kappa, PREDICTION, LABEL)).mass

    def cardinality(self, j: int) -> int:
        return self.source.schema.column(j).cardinality

    def label_marginal(self, J) -> np.ndarray:
        return estimate_pmf(self.source, (*J, LABEL)).mass


class _PopulationTables:
    """Exact marginal tables derived from full joint pmfs.

    ``source_joint`` has axes (1..d, prediction, label); ``target_joint``
    has axes (1..d, prediction).
    """

    def __init__(self, source_joint: EmpiricalPmf, target_joint: EmpiricalPmf):
        feat = [a for a in source_joint.axes if isinstance(a, int)]
        if not feat or tuple(source_joint.axes) != (*feat, PREDICTION, LABEL):
            raise ValidationError("source joint must have axes (features..., prediction, label)")
        if tuple(target_joint.axes) != (*feat, PREDICTION):
            raise ValidationError("target joint must have axes (features..., prediction)")
        self.source_joint = source_joint
        self.target_joint = target_joint
        self.d = len(feat)
        self.n_labels = source_joint.cardinalities[-1]
        self._cards = dict(zip(feat, source_joint.cardinalities[: self.d]))

    def q(self, kappa) -> np.ndarray:
        return self.target_joint.marginal((*kappa, PREDICTION)).mass

    def p(self, kappa) -> np.ndarray:
        return self.source_joint.marginal((*kappa, PREDICTION, LABEL)).mass

    def cardinality(self, j: int) -> int:
        return self._cards[j]

    def label_marginal(self, J) -> np.ndarray:
        return self.source_joint.marginal((*J, LABEL)).mass


def _box_ls(A: np.ndarray, b: np.ndarray, hi: float, tol: float,
            max_iters: int) -> tuple[np.ndarray, float, int]:
    """min ||A w - b||^2 over the box [0, hi]^k.

    Projected gradient with exact line search on the quadratic, halving the
    step whenever projection breaks descent. A final active-set polish
    re-solves the free coordinates by plain least squares, which pins
    interior optima to machine precision on poorly conditioned blocks.
    """
    k = A.shape[1]
    AtA = A.T @ A
    Atb = A.T @ b

    def obj(v):
        r = A @ v - b
        return float(r @ r)

    # fast path: the unconstrained optimum is also the box optimum when it
    # lands inside the box, which is the common case
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    if (sol >= 0.0).all() and (sol <= hi).all():
        return sol, obj(sol), 0

    w = np.clip(sol, 0.0, hi)
    f = obj(w)
    iters = 0
    for iters in range(1, max_iters + 1):
        g = 2.0 * (AtA @ w - Atb)
        denom = 2.0 * float(g @ (AtA @ g))
        if denom <= 0.0:
            break
        t = float(g @ g) / denom
        w_new = np.clip(w - t * g, 0.0, hi)
        f_new = obj(w_new)
        halvings = 0
        while f_new > f + 1e-18 and halvings < 60:
            t *= 0.5
            w_new = np.clip(w - t * g, 0.0, hi)
            f_new = obj(w_new)
            halvings += 1
        if f_new > f + 1e-18:
            break
        step = float(np.max(np.abs(w_new - w)))
        gain = f - f_new
        w, f = w_new, f_new
        if step < tol or gain < 1e-16 * (1.0 + f):
            break

    g = 2.0 * (AtA @ w - Atb)
    bound = 1e-10 * max(hi, 1.0)
    free = ~(((w <= bound) & (g > 0)) | ((w >= hi - bound) & (g < 0)))
    if free.any():
        rhs = b - A[:, ~free] @ w[~free] if (~free).any() else b
        sol, *_ = np.linalg.lstsq(A[:, free], rhs, rcond=None)
        if (sol >= -1e-9).all() and (sol <= hi + 1e-9).all():
            cand = w.copy()
            cand[free] = np.clip(sol, 0.0, hi)
            f_cand = obj(cand)
            if f_cand <= f + 1e-18:
                w, f = cand, f_cand
    return w, f, iters


def _blocks_for(tables, J, s: int):
    """Per-x_J stacked (A, b) systems across every matching kappa."""
    kappas = enumerate_kappas(J, tables.d, s)
    L = tables.n_labels
    cards_j = [tables.cardinality(j) for j in J]
    n_blocks = int(np.prod(cards_j)) if J else 1
    rows_a = [[] for _ in range(n_blocks)]
    rows_b = [[] for _ in range(n_blocks)]
    for kappa in kappas:
        q = tables.q(kappa)
        p = tables.p(kappa)
        pos = [kappa.index(j) for j in J]
        q_m = np.moveaxis(q, pos, range(len(J))) if J else q
        p_m = np.moveaxis(p, pos, range(len(J))) if J else p
        q_f = q_m.reshape(n_blocks, -1)
        p_f = p_m.reshape(n_blocks, -1, L)
        for blk in range(n_blocks):
            rows_a[blk].append(p_f[blk])
            rows_b[blk].append(q_f[blk])
    out = []
    for blk in range(n_blocks):
        xj = tuple(int(v) + 1 for v in np.unravel_index(blk, cards_j)) if J else ()
        out.append((xj, np.vstack(rows_a[blk]), np.concatenate(rows_b[blk])))
    return out


def _fit_blocks(tables, J, cfg: SeesDConfig) -> CandidateFit:
    L = tables.n_labels
    floor = cfg.min_mass_floor
    table = {}
    distance = 0.0
    unconstrained = 0
    iterations = 0
    for xj, A, b in _blocks_for(tables, J, cfg.sparsity):
        keep = (A.max(axis=1) > floor) | (b > floor)
        A_k, b_k = A[keep], b[keep]
        w = np.ones(L)
        live = A_k.sum(axis=0) > 0 if A_k.size else np.zeros(L, dtype=bool)
        unconstrained += int(L - live.sum())
        if live.any():
            sol, resid, iters = _box_ls(
                A_k[:, live], b_k, cfg.weight_bound, cfg.solver_tol, cfg.solver_max_iters
            )
            w[live] = sol
            distance += resid
            iterations += iters
        else:
            distance += float(b_k @ b_k)
        for y in range(1, L + 1):
            table[(xj, y)] = float(w[y - 1])
    return CandidateFit(
        index_set=tuple(J),
        weights=TableWeight(index_set=tuple(J), table=table),
        distance=distance,
        unconstrained_cells=unconstrained,
        solver_iterations=iterations,
    )


def _distance_at(tables, J, s: int, weight: TableWeight) -> float:
    """Recompute the matching objective at externally supplied weights."""
    L = tables.n_labels
    total = 0.0
    for xj, A, b in _blocks_for(tables, J, s):
        w = np.array([weight.value(xj, y) for y in range(1, L + 1)])
        r = A @ w - b
        total += float(r @ r)
    return total


def fit_candidate(source: TabularDataset, target: TabularDataset, J,
                  cfg: SeesDConfig) -> CandidateFit:
    return _fit_blocks(_SampleTables(source, target), tuple(sorted(J)), cfg)


def fit_candidate_population(source_joint: EmpiricalPmf, target_joint: EmpiricalPmf,
                             J, cfg: SeesDConfig) -> CandidateFit:
    return _fit_blocks(_PopulationTables(source_joint, target_joint), tuple(sorted(J)), cfg)


def evaluate_distance(source: TabularDataset, target: TabularDataset, J,
                      weight: TableWeight, cfg: SeesDConfig) -> float:
    return _distance_at(_SampleTables(source, target), tuple(sorted(J)), cfg.sparsity, weight)


def _search(tables, cfg: SeesDConfig):
    d = tables.d
    s = cfg.sparsity
    if s > d:
        raise ValidationError(f"sparsity {s} exceeds feature count {d}")
    n_cand = math.comb(d, s)
    if n_cand > 10**5:
        raise TooManyCandidates(f"{n_cand} candidate subsets of size {s} (limit 1e5)")
    candidates = [tuple(c) for c in combinations(range(1, d + 1), s)]

    def fit(J):
        return _fit_blocks(tables, J, cfg)

    if cfg.parallel and len(candidates) > 1:
        with ThreadPoolExecutor(max_workers=thread_cap()) as pool:
            fits = list(pool.map(fit, candidates))
    else:
        fits = [fit(J) for J in candidates]

    best = fits[0]
    for cand in fits[1:]:
        if cand.distance < best.distance - TIE_TOL:
            best = cand
    diagnostics = {f"dd({','.join(map(str, f.index_set))})": f.distance for f in fits}
    diagnostics["selected_distance"] = best.distance
    diagnostics["unconstrained_cells"] = float(best.unconstrained_cells)
    diagnostics["solver_iterations"] = float(best.solver_iterations)
    diagnostics["candidates"] = float(len(fits))
    return best, diagnostics


def _normalize_table(weight: TableWeight, label_marg: np.ndarray) -> TableWeight:
    """Rescale so the source expectation of the weight equals 1, computed
    from the (x_J, y) source marginal."""
    mean = 0.0
    it = np.ndindex(label_marg.shape)
    for idx in it:
        xj = tuple(v + 1 for v in idx[:-1])
        y = idx[-1] + 1
        mean += label_marg[idx] * weight.value(xj, y)
    if mean <= 0:
        raise ValidationError("cannot normalize: zero source expectation")
    return weight._scaled(1.0 / mean)


def run_sees_d(source: TabularDataset, target: TabularDataset,
               cfg: SeesDConfig) -> tuple[TableWeight, tuple[int, ...], dict]:
    """Search all size-s candidates; returns (normalized weights, J, diagnostics).

    Distances are compared before normalization; ties within 1e-12 go to
    the lexicographically smallest candidate.
    """
    tables = _SampleTables(source, target)
    best, diagnostics = _search(tables, cfg)
    weight = _normalize_table(best.weights, tables.label_marginal(best.index_set))
    return weight, best.index_set, diagnostics


def run_sees_d_population(source_joint: EmpiricalPmf, target_joint: EmpiricalPmf,
                          cfg: SeesDConfig) -> tuple[TableWeight, tuple[int, ...], dict]:
    """Population mode: identical search over exact joint tables."""
    tables = _PopulationTables(source_joint, target_joint)
    best, diagnostics = _search(tables, cfg)
    weight = _normalize_table(best.weights, tables.label_marginal(best.index_set))
    return weight, best.index_set, diagnostics
