"""k-fold cross-validation and the power-of-two (C, gamma) grid search."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import logging

import numpy as np

from .errors import TooFewSamples
from .svr import (
    DEFAULT_EPSILON,
    DEFAULT_TOL,
    Sample,
    SvrHyperparams,
    build_features,
    decision_function,
    fit_scaling,
    gram,
    smo_train,
)

log = logging.getLogger(__name__)

_MASK64 = (1 << 64) - 1
#: Pair-update budget per fold fit during a search. A cell that runs out is
#: scored from the solver's current iterate (and flagged) instead of aborting.
GRID_MAX_ITER = 200_000

ProgressFn = Callable[[int, int], None]


class SplitMix64:
    """SplitMix64 (Steele, Lea, Flood 2014); the state advances by the golden gamma."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection, free of modulo bias."""
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next()
            if r < limit:
                return r % bound


def shuffled_indices(n: int, seed: int) -> List[int]:
    """Fisher-Yates shuffle of 0..n-1 driven by SplitMix64(seed)."""
    rng = SplitMix64(seed)
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def kfold_split(n: int, k: int, seed: int = 0) -> List[np.ndarray]:
    """Partition 0..n-1 into k folds whose sizes differ by at most one.

    The shuffled order is cut into contiguous chunks; the first ``n % k``
    chunks get the extra element. Each fold is returned sorted.
    """
    if k < 2 or n < k:
        raise TooFewSamples(f"{k}-fold split needs 2 <= k <= n, got n={n}")
    perm = shuffled_indices(n, seed)
    base, extra = divmod(n, k)
    folds, start = [], 0
    for f in range(k):
        size = base + (1 if f < extra else 0)
        folds.append(np.array(sorted(perm[start : start + size]), dtype=np.int64))
        start += size
    return folds


@dataclass(frozen=True)
class GridSpec:
    c_exponents: Tuple[int, int] = (-3, 15)
    gamma_exponents: Tuple[int, int] = (-15, 3)
    step: int = 1
    folds: int = 5
    seed: int = 0
    epsilon: float = DEFAULT_EPSILON
    tol: float = DEFAULT_TOL
    max_iter: int = GRID_MAX_ITER

    def __post_init__(self) -> None:
        if self.step < 1:
            raise ValueError("grid step must be >= 1")
        if self.c_exponents[0] > self.c_exponents[1] or self.gamma_exponents[0] > self.gamma_exponents[1]:
            raise ValueError("exponent ranges must be non-empty (lo <= hi)")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")

    def c_values(self) -> List[int]:
        lo, hi = self.c_exponents
        return list(range(lo, hi + 1, self.step))

    def gamma_values(self) -> List[int]:
        lo, hi = self.gamma_exponents
        return list(range(lo, hi + 1, self.step))

    @property
    def n_cells(self) -> int:
        return len(self.c_values()) * len(self.gamma_values())


@dataclass(frozen=True)
class CvCell:
    c_exp: int
    gamma_exp: int
    mse: float
    capped_folds: int = 0

    @property
    def C(self) -> float:
        return 2.0 ** self.c_exp

    @property
    def gamma(self) -> float:
        return 2.0 ** self.gamma_exp


@dataclass(frozen=True)
class CvResult:
    cells: Tuple[CvCell, ...]
    best: CvCell

    @property
    def best_params(self) -> Tuple[float, float]:
        return self.best.C, self.best.gamma


def pick_best(cells: Sequence[CvCell]) -> CvCell:
    """Lowest MSE; ties go to the smaller C, then the smaller gamma."""
    return min(cells, key=lambda c: (c.mse, c.c_exp, c.gamma_exp))


@dataclass
class _Fold:
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def _prepare_folds(samples: Sequence[Sample], targets, folds: Sequence[np.ndarray]) -> List[_Fold]:
    n = len(samples)
    t = np.asarray(targets, dtype=float)
    all_idx = np.arange(n)
    out = []
    for test_idx in folds:
        mask = np.ones(n, dtype=bool)
        mask[test_idx] = False
        train_idx = all_idx[mask]
        tr = [samples[i] for i in train_idx]
        te = [samples[i] for i in test_idx]
        # scaling sees the training split only
        sc = fit_scaling(tr, t[train_idx])
        out.append(
            _Fold(
                build_features(tr, sc),
                sc.scale_target(t[train_idx]),
                build_features(te, sc),
                sc.scale_target(t[test_idx]),
            )
        )
    return out


def _fold_mse(
    fold: _Fold, hp: SvrHyperparams, K: Optional[np.ndarray], tol: float, max_iter: int
) -> Tuple[float, bool]:
    model = smo_train(fold.X_train, fold.y_train, hp, tol, max_iter, gram_matrix=K, on_max_iter="keep")
    err = decision_function(model, fold.X_test) - fold.y_test
    return float(np.mean(err * err)), model.info.converged


def _mean(values: Sequence[float]) -> float:
    return float(sum(values) / len(values))


def cv_mse(
    samples: Sequence[Sample],
    targets: Sequence[float],
    hp: SvrHyperparams,
    folds: Sequence[np.ndarray],
    tol: float = DEFAULT_TOL,
    max_iter: int = GRID_MAX_ITER,
) -> float:
    """Mean over folds of the held-out MSE, in each fold's scaled target units."""
    prepared = _prepare_folds(samples, targets, folds)
    return _mean([_fold_mse(f, hp, None, tol, max_iter)[0] for f in prepared])


def grid_search(
    samples: Sequence[Sample],
    targets: Sequence[float],
    spec: GridSpec = GridSpec(),
    *,
    progress: Optional[ProgressFn] = None,
    workers: int = 1,
) -> CvResult:
    """Cross-validated MSE at every (2^i, 2^j) cell, plus the argmin.

    Work is split by gamma: each worker builds one Gram matrix per fold and
    solves every C against it. Cells are collected in grid order, so the
    result does not depend on ``workers`` or completion order.
    """
    n = len(samples)
    if n < spec.folds:
        raise TooFewSamples(f"{n} samples cannot be split into {spec.folds} folds")
    folds = kfold_split(n, spec.folds, spec.seed)
    prepared = _prepare_folds(samples, targets, folds)
    c_exps, g_exps = spec.c_values(), spec.gamma_values()
    total = len(c_exps) * len(g_exps)
    done = 0

    def column(g_exp: int) -> Dict[int, Tuple[float, int]]:
        gamma = 2.0 ** g_exp
        per_fold: Dict[int, List[float]] = {c: [] for c in c_exps}
        capped = {c: 0 for c in c_exps}
        for f in prepared:
            K = gram(f.X_train, None, gamma)
            for c_exp in c_exps:
                hp = SvrHyperparams(2.0 ** c_exp, gamma, spec.epsilon)
                mse, ok = _fold_mse(f, hp, K, spec.tol, spec.max_iter)
                per_fold[c_exp].append(mse)
                capped[c_exp] += not ok
        return {c: (_mean(v), capped[c]) for c, v in per_fold.items()}

    results: Dict[int, Dict[int, Tuple[float, int]]] = {}
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = {g: pool.submit(column, g) for g in g_exps}
            for g in g_exps:
                results[g] = futures[g].result()
                done += len(c_exps)
                if progress:
                    progress(done, total)
    else:
        for g in g_exps:
            results[g] = column(g)
            done += len(c_exps)
            if progress:
                progress(done, total)

    cells = tuple(CvCell(c, g, *results[g][c]) for c in c_exps for g in g_exps)
    n_capped = sum(1 for c in cells if c.capped_folds)
    if n_capped:
        log.warning(
            "%d of %d grid cells hit the %d-update budget in at least one fold",
            n_capped, len(cells), spec.max_iter,
        )
    return CvResult(cells, pick_best(cells))
