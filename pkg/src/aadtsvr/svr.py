"""epsilon-SVR with an RBF kernel, trained by pairwise SMO on beta = alpha - alpha*.

The dual solved here is::

    max_beta  -1/2 beta' K beta - eps * sum|beta_i| + y' beta
    s.t.      sum(beta) = 0,  -C <= beta_i <= C

Each SMO step moves one pair (beta_i += t, beta_j -= t) and maximises the
objective exactly along that line. Because of the |beta| terms the line
objective is a concave piecewise quadratic with kinks where beta_i or beta_j
cross zero, so the step walks the segments instead of taking a single Newton
step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numba
import numpy as np

from .domain import HOURS
from .errors import (
    DimensionMismatch,
    EmptyTrainingSet,
    NoConvergence,
    NonFiniteInput,
)

N_FEATURES = HOURS + 7 + 12
DEFAULT_EPSILON = 0.01
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000
#: Training sets up to this size get a precomputed Gram matrix.
FULL_CACHE_LIMIT = 4096

_TAU = 1e-12

# (24 hourly volumes, weekday 0..6 with Monday=0, month 1..12)
Sample = Tuple[Sequence[float], int, int]


@dataclass(frozen=True)
class SvrHyperparams:
    C: float
    gamma: float
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self) -> None:
        if not (self.C > 0 and self.gamma > 0 and self.epsilon >= 0):
            raise ValueError(f"need C > 0, gamma > 0, epsilon >= 0; got {self}")


@dataclass(frozen=True)
class ScalingParams:
    vmin: tuple
    vmax: tuple
    target_scale: float

    def scale_target(self, t):
        return np.asarray(t, dtype=float) / self.target_scale

    def unscale_target(self, s):
        return np.asarray(s, dtype=float) * self.target_scale


@dataclass
class SolverInfo:
    n_iter: int
    gap: float
    objective: float
    objective_trace: Optional[np.ndarray] = None
    converged: bool = True


@dataclass(eq=False)
class SvrModel:
    hyperparams: SvrHyperparams
    support_vectors: np.ndarray
    coefficients: np.ndarray
    bias: float
    scaling: Optional[ScalingParams] = None
    support_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    n_train: int = 0
    info: Optional[SolverInfo] = None

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def full_beta(self) -> np.ndarray:
        """Coefficients for every training point (zeros for non-support vectors)."""
        beta = np.zeros(self.n_train)
        beta[self.support_indices] = self.coefficients
        return beta

    def with_scaling(self, scaling: ScalingParams) -> "SvrModel":
        return SvrModel(
            self.hyperparams,
            self.support_vectors,
            self.coefficients,
            self.bias,
            scaling,
            self.support_indices,
            self.n_train,
            self.info,
        )


# --------------------------------------------------------------------------
# kernel


def rbf_kernel(x, y, gamma: float) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments have shapes {x.shape} and {y.shape}")
    d = x - y
    return math.exp(-gamma * float(d @ d))


@numba.njit(cache=True, nogil=True)
def _gram_sym(X, gamma):
    n, d = X.shape
    K = np.empty((n, n))
    for i in range(n):
        K[i, i] = 1.0
        for j in range(i + 1, n):
            s = 0.0
            for c in range(d):
                diff = X[i, c] - X[j, c]
                s += diff * diff
            v = math.exp(-gamma * s)
            K[i, j] = v
            K[j, i] = v
    return K


@numba.njit(cache=True, nogil=True)
def _gram_cross(A, B, gamma):
    n, d = A.shape
    m = B.shape[0]
    K = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for c in range(d):
                diff = A[i, c] - B[j, c]
                s += diff * diff
            K[i, j] = math.exp(-gamma * s)
    return K


def gram(A, B=None, gamma: float = 1.0) -> np.ndarray:
    """RBF Gram matrix; symmetric by construction when ``B`` is omitted."""
    A = np.ascontiguousarray(A, dtype=float)
    if B is None:
        return _gram_sym(A, float(gamma))
    B = np.ascontiguousarray(B, dtype=float)
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"feature dimensions differ: {A.shape[1]} vs {B.shape[1]}")
    return _gram_cross(A, B, float(gamma))


# --------------------------------------------------------------------------
# scaling and features


def fit_scaling(samples: Sequence[Sample], targets: Sequence[float]) -> ScalingParams:
    if len(samples) == 0:
        raise EmptyTrainingSet("cannot fit scaling on an empty training set")
    if len(samples) != len(targets):
        raise DimensionMismatch(f"{len(samples)} samples but {len(targets)} targets")
    V = np.array([s[0] for s in samples], dtype=float)
    if V.shape[1] != HOURS:
        raise DimensionMismatch(f"samples must carry {HOURS} volumes")
    t = np.asarray(targets, dtype=float)
    scale = float(t.max())
    if not scale > 0:
        raise EmptyTrainingSet("training targets must include a positive AADT")
    return ScalingParams(tuple(V.min(axis=0).tolist()), tuple(V.max(axis=0).tolist()), scale)


def build_features(samples: Sequence[Sample], scaling: ScalingParams) -> np.ndarray:
    """Min-max scaled volumes followed by one-hot weekday and one-hot month."""
    n = len(samples)
    X = np.zeros((n, N_FEATURES))
    if n == 0:
        return X
    V = np.array([s[0] for s in samples], dtype=float)
    if V.ndim != 2 or V.shape[1] != HOURS:
        raise DimensionMismatch(f"samples must carry {HOURS} volumes")
    lo = np.asarray(scaling.vmin)
    span = np.asarray(scaling.vmax) - lo
    nz = span > 0
    X[:, :HOURS][:, nz] = (V[:, nz] - lo[nz]) / span[nz]
    rows = np.arange(n)
    wd = np.array([s[1] for s in samples], dtype=int)
    mo = np.array([s[2] for s in samples], dtype=int)
    if wd.min() < 0 or wd.max() > 6 or mo.min() < 1 or mo.max() > 12:
        raise ValueError("weekday must be 0..6 and month 1..12")
    X[rows, HOURS + wd] = 1.0
    X[rows, HOURS + 7 + mo - 1] = 1.0
    return X


# --------------------------------------------------------------------------
# solver


@numba.njit(cache=True, nogil=True, inline="always")
def _up(b, g, eps):
    # d W / d beta from the right
    return g - eps if b >= 0.0 else g + eps


@numba.njit(cache=True, nogil=True, inline="always")
def _down(b, g, eps):
    # d W / d beta from the left
    return g - eps if b > 0.0 else g + eps


@numba.njit(cache=True, nogil=True)
def _kernel_row(X, gamma, i, out):
    n, d = X.shape
    for k in range(n):
        s = 0.0
        for c in range(d):
            diff = X[i, c] - X[k, c]
            s += diff * diff
        out[k] = math.exp(-gamma * s)


@numba.njit(cache=True, nogil=True)
def _smo(K, X, gamma, use_cache, eps, C, tol, max_iter, second_order, beta, g, trace, obj0):
    """Run SMO in place on ``beta``/``g`` (g = y - K beta).

    Returns (iterations, final gap, status, objective); status 1 means the
    iteration budget ran out.
    """
    n = beta.shape[0]
    buf_i = np.empty(n)
    buf_j = np.empty(n)
    obj = obj0
    it = 0
    n_trace = trace.shape[0]
    if n_trace > 0:
        trace[0] = obj
    while True:
        gmax = -np.inf
        gmin = np.inf
        i = -1
        jmin = -1
        for t in range(n):
            if beta[t] < C:
                u = _up(beta[t], g[t], eps)
                if u > gmax:
                    gmax = u
                    i = t
            if beta[t] > -C:
                dn = _down(beta[t], g[t], eps)
                if dn < gmin:
                    gmin = dn
                    jmin = t
        gap = gmax - gmin
        if i < 0 or jmin < 0 or gap <= tol:
            return it, gap, 0, obj
        if it >= max_iter:
            return it, gap, 1, obj

        if use_cache:
            row_i = K[i]
        else:
            _kernel_row(X, gamma, i, buf_i)
            row_i = buf_i

        j = jmin
        if second_order:
            best = -np.inf
            for t in range(n):
                if beta[t] > -C:
                    bgain = gmax - _down(beta[t], g[t], eps)
                    if bgain > 0.0:
                        eta_t = 2.0 - 2.0 * row_i[t]
                        if eta_t <= 0.0:
                            eta_t = _TAU
                        v = bgain * bgain / eta_t
                        if v > best:
                            best = v
                            j = t

        if use_cache:
            row_j = K[j]
        else:
            _kernel_row(X, gamma, j, buf_j)
            row_j = buf_j

        bi = beta[i]
        bj = beta[j]
        eta_true = row_i[i] + row_j[j] - 2.0 * row_i[j]
        eta = eta_true if eta_true > _TAU else _TAU

        # step length t in (0, hi]; kinks where beta_i or beta_j pass zero
        hi_i = C - bi
        hi_j = bj + C
        hi = hi_i if hi_i < hi_j else hi_j
        k1 = -bi if (bi < 0.0 and -bi < hi) else np.inf
        k2 = bj if (bj > 0.0 and bj < hi) else np.inf
        if k1 > k2:
            k1, k2 = k2, k1
        dg = g[i] - g[j]
        a = 0.0
        step = hi
        for seg in range(3):
            if seg == 0:
                b_end = k1
            elif seg == 1:
                b_end = k2
            else:
                b_end = hi
            if b_end == np.inf:
                continue
            mid = 0.5 * (a + b_end)
            si = 1.0 if bi + mid > 0.0 else -1.0
            sj = 1.0 if bj - mid > 0.0 else -1.0
            tt = (dg - eps * si + eps * sj) / eta
            if tt <= a:
                step = a
                break
            if tt < b_end:
                step = tt
                break
            a = b_end

        nbi = bi + step
        nbj = bj - step
        if step == hi:
            if hi == hi_i:
                nbi = C
            if hi == hi_j:
                nbj = -C
        if step == -bi:
            nbi = 0.0
        if step == bj:
            nbj = 0.0
        dbi = nbi - bi
        dbj = nbj - bj

        obj += (
            step * dg
            - 0.5 * eta_true * step * step
            - eps * (abs(nbi) - abs(bi) + abs(nbj) - abs(bj))
        )
        beta[i] = nbi
        beta[j] = nbj
        for k in range(n):
            g[k] -= dbi * row_i[k] + dbj * row_j[k]
        it += 1
        if it < n_trace:
            trace[it] = obj


def _bias(beta: np.ndarray, g: np.ndarray, C: float, eps: float) -> float:
    free = (beta != 0.0) & (np.abs(beta) < C)
    if free.any():
        return float(np.mean(g[free] - eps * np.sign(beta[free])))
    up = np.where(beta >= 0, g - eps, g + eps)
    down = np.where(beta > 0, g - eps, g + eps)
    return 0.5 * (float(up[beta < C].max()) + float(down[beta > -C].min()))


def smo_train(
    X,
    y,
    hp: SvrHyperparams,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    *,
    selection: str = "second_order",
    init_beta=None,
    gram_matrix: Optional[np.ndarray] = None,
    trace_length: int = 0,
    on_max_iter: str = "raise",
) -> SvrModel:
    """Solve the epsilon-SVR dual for scaled features ``X`` and targets ``y``.

    ``selection`` is ``"second_order"`` (i from the maximal violating pair, j by
    largest second-order gain) or ``"max_violating"`` (both from the maximal
    violating pair). Stopping is the same for both: the maximal violation
    ``max(up) - min(down)`` drops to ``tol``.

    ``init_beta`` warm-starts from any feasible point (sum zero, within the
    box). ``trace_length > 0`` records the dual objective after each of the
    first ``trace_length - 1`` pair updates in ``model.info.objective_trace``.

    Hitting ``max_iter`` raises ``NoConvergence`` unless ``on_max_iter`` is
    ``"keep"``, in which case the current (feasible) iterate is returned with
    ``info.converged`` False.
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X has shape {X.shape}, y has shape {y.shape}")
    n = X.shape[0]
    if n < 2:
        raise EmptyTrainingSet("SMO needs at least two samples")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("features and targets must be finite")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if selection not in ("second_order", "max_violating"):
        raise ValueError(f"unknown selection rule {selection!r}")
    if on_max_iter not in ("raise", "keep"):
        raise ValueError(f"on_max_iter must be 'raise' or 'keep', got {on_max_iter!r}")

    C, gamma, eps = float(hp.C), float(hp.gamma), float(hp.epsilon)
    use_cache = gram_matrix is not None or n <= FULL_CACHE_LIMIT
    if gram_matrix is not None:
        K = np.ascontiguousarray(gram_matrix, dtype=float)
        if K.shape != (n, n):
            raise DimensionMismatch(f"Gram matrix shape {K.shape} for {n} samples")
    elif use_cache:
        K = _gram_sym(X, gamma)
    else:
        K = np.zeros((0, 0))

    if init_beta is None:
        beta = np.zeros(n)
        g = y.copy()
    else:
        beta = np.clip(np.array(init_beta, dtype=float), -C, C)
        if beta.shape != (n,):
            raise DimensionMismatch("init_beta must have one entry per sample")
        if abs(beta.sum()) > 1e-9 * max(1.0, C):
            raise ValueError("init_beta must sum to zero")
        nz = np.flatnonzero(beta)
        if use_cache:
            Kb = K[:, nz] @ beta[nz]
        else:
            Kb = _gram_cross(X, X[nz], gamma) @ beta[nz]
        g = y - Kb
    obj0 = 0.5 * float(beta @ (y + g)) - eps * float(np.abs(beta).sum())

    trace = np.zeros(max(0, int(trace_length)))
    it, gap, status, obj = _smo(
        K, X, gamma, use_cache, eps, C, float(tol), int(max_iter),
        selection == "second_order", beta, g, trace, obj0,
    )
    if status == 1 and on_max_iter == "raise":
        raise NoConvergence(int(max_iter), float(gap))

    b = _bias(beta, g, C, eps)
    sv = np.flatnonzero(beta)
    info = SolverInfo(
        int(it),
        float(gap),
        float(obj),
        trace[: min(len(trace), it + 1)] if len(trace) else None,
        converged=status != 1,
    )
    return SvrModel(
        hyperparams=hp,
        support_vectors=X[sv].copy(),
        coefficients=beta[sv].copy(),
        bias=b,
        scaling=None,
        support_indices=sv.astype(np.int64),
        n_train=n,
        info=info,
    )


# --------------------------------------------------------------------------
# prediction and diagnostics


def decision_function(model: SvrModel, X) -> np.ndarray:
    """Scaled-unit output sum_i beta_i K(sv_i, x) + b for each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != model.support_vectors.shape[1] and model.support_vectors.shape[0] > 0:
        raise DimensionMismatch(
            f"model expects {model.support_vectors.shape[1]} features, got {X.shape[1]}"
        )
    if model.coefficients.size == 0:
        return np.full(X.shape[0], model.bias)
    Kx = gram(X, model.support_vectors, model.hyperparams.gamma)
    return Kx @ model.coefficients + model.bias


def predict_many(model: SvrModel, samples: Sequence[Sample]) -> np.ndarray:
    """AADT (vehicles/day) for raw samples; negative outputs clamp to 0."""
    if model.scaling is None:
        raise ValueError("model has no scaling parameters; train it with fit_svr")
    X = build_features(samples, model.scaling)
    out = model.scaling.unscale_target(decision_function(model, X))
    return np.maximum(out, 0.0)


def predict(model: SvrModel, sample: Sample) -> float:
    return float(predict_many(model, [sample])[0])


def dual_objective_at(beta, K, y, epsilon: float) -> float:
    beta = np.asarray(beta, dtype=float)
    y = np.asarray(y, dtype=float)
    return float(-0.5 * beta @ K @ beta - epsilon * np.abs(beta).sum() + y @ beta)


def dual_objective(model: SvrModel, X, y) -> float:
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.shape[0] != model.n_train or y.shape[0] != model.n_train:
        raise DimensionMismatch(f"model was trained on {model.n_train} samples, got {X.shape[0]}")
    if model.support_vectors.shape[0] and X.shape[1] != model.support_vectors.shape[1]:
        raise DimensionMismatch("feature dimension differs from the model's")
    beta = model.full_beta()
    nz = np.flatnonzero(beta)
    if nz.size == 0:
        return 0.0
    K = gram(X[nz], None, model.hyperparams.gamma)
    b = beta[nz]
    return dual_objective_at(b, K, y[nz], model.hyperparams.epsilon)


def kkt_violations(model: SvrModel, X, y) -> np.ndarray:
    """Per-sample KKT violation at the model's bias, in scaled target units."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = model.full_beta()
    if X.shape[0] != beta.shape[0]:
        raise DimensionMismatch("X must be the training set of the model")
    C, eps = model.hyperparams.C, model.hyperparams.epsilon
    g = y - (decision_function(model, X) - model.bias)
    r = g - model.bias
    up = np.where(beta >= 0, r - eps, r + eps)
    down = np.where(beta > 0, r - eps, r + eps)
    v = np.zeros_like(r)
    v = np.where(beta < C, np.maximum(v, up), v)
    v = np.where(beta > -C, np.maximum(v, -down), v)
    return v


def fit_svr(
    samples: Sequence[Sample],
    targets: Sequence[float],
    hp: SvrHyperparams,
    tol: float = DEFAULT_TOL,
    **solver_kw,
) -> SvrModel:
    """Fit scaling on the training data, then train; the model carries its scaling."""
    scaling = fit_scaling(samples, targets)
    X = build_features(samples, scaling)
    y = scaling.scale_target(targets)
    return smo_train(X, y, hp, tol, **solver_kw).with_scaling(scaling)
