"""Exact multi-output GP regression over LogitMap pairs.

Each of the V logit dimensions is modelled by an independent GP sharing one
RBF kernel; with a shared noise level all dimensions reuse a single Cholesky
factorization of (K + sigma_n^2 I). Factorization failures escalate through a
progressive jitter schedule and then raise IllConditioned -- non-finite
values never escape this module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist, pdist

from .data import LogitMapSet, as_vector
from .errors import (
    DimensionMismatch,
    EmptyInput,
    EmptyTrainingSet,
    IllConditioned,
    NegativeVariance,
    NonFiniteInput,
    ParseError,
)

# Jitter schedule: start at 1e-8 * trace(K)/M, escalate x10 up to 1e-2 * trace(K)/M.
_JITTER_START = 1e-8
_JITTER_LIMIT = 1e-2
_NEG_VAR_TOL = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """RBF kernel hyperparameters plus a constant mean."""

    signal_variance: float = 1.0
    lengthscale: float = 1.0
    mean_const: float = 0.0

    def __post_init__(self) -> None:
        if not (self.signal_variance > 0 and math.isfinite(self.signal_variance)):
            raise NonFiniteInput(f"signal_variance must be positive, got {self.signal_variance}")
        if not (self.lengthscale > 0 and math.isfinite(self.lengthscale)):
            raise NonFiniteInput(f"lengthscale must be positive, got {self.lengthscale}")
        if not math.isfinite(self.mean_const):
            raise NonFiniteInput(f"mean_const must be finite, got {self.mean_const}")


@dataclass(frozen=True, eq=False)
class NoiseParams:
    """Observation-noise variance, shared across output dimensions by default.

    ``per_dim`` optionally overrides the shared value with one entry per
    logit dimension; distinct values cost one factorization each.
    """

    noise_variance: float = 1e-2
    per_dim: np.ndarray | None = None

    def __post_init__(self) -> None:
        if not (self.noise_variance >= 0 and math.isfinite(self.noise_variance)):
            raise NonFiniteInput(f"noise_variance must be >= 0, got {self.noise_variance}")
        if self.per_dim is not None:
            arr = np.asarray(self.per_dim, dtype=np.float64)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise NonFiniteInput("per_dim noise overrides must be finite and >= 0")
            object.__setattr__(self, "per_dim", arr)

    def expand(self, v: int) -> np.ndarray:
        if self.per_dim is not None:
            if self.per_dim.shape != (v,):
                raise DimensionMismatch(
                    f"per_dim noise has {self.per_dim.shape[0]} entries, expected V={v}"
                )
            return self.per_dim.copy()
        return np.full(v, self.noise_variance)


@dataclass(frozen=True)
class GateConfig:
    """Uncertainty gate: fall back to the oracle when tau^2 exceeds ``threshold``."""

    threshold: float
    target_fallback_fraction: float = 0.01

    def __post_init__(self) -> None:
        if not (self.threshold >= 0):
            raise NonFiniteInput(f"gate threshold must be >= 0, got {self.threshold}")
        if not (0 < self.target_fallback_fraction < 1):
            raise NonFiniteInput(
                f"target_fallback_fraction must be in (0,1), got {self.target_fallback_fraction}"
            )


@dataclass(eq=False)
class UncertaintyEstimate:
    """Per-dimension predictive variances and their scalar aggregate tau^2."""

    per_dim: np.ndarray
    scalar: float


@dataclass(eq=False)
class _FactorGroup:
    """One Cholesky factor of (K + sigma^2 I) shared by the dims with equal noise."""

    noise_variance: float
    dims: np.ndarray  # indices into the V output dimensions
    chol: np.ndarray  # (M, M) lower triangular
    jitter: float


@dataclass(eq=False)
class GPPosterior:
    """Fitted multi-output GP: training inputs, factors, and per-dim dual weights."""

    X: np.ndarray  # (M, d)
    kernel: KernelParams
    noise_per_dim: np.ndarray  # (V,)
    dual_weights: np.ndarray  # (M, V), column v = (K + sigma_v^2 I)^-1 (s_v - mean)
    factor_groups: list[_FactorGroup]

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def V(self) -> int:
        return self.dual_weights.shape[1]

    @property
    def cholesky_factor(self) -> np.ndarray:
        """The shared factor when all dimensions use one noise level."""
        if len(self.factor_groups) != 1:
            raise DimensionMismatch(
                "posterior has per-dimension factors; access factor_groups directly"
            )
        return self.factor_groups[0].chol


def rbf_kernel(a: np.ndarray, b: np.ndarray, params: KernelParams) -> float:
    """sigma_f^2 * exp(-||a - b||^2 / (2 l^2)); symmetric in (a, b)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"kernel inputs have shapes {a.shape} vs {b.shape}")
    sq = float(np.dot(a - b, a - b))
    return params.signal_variance * math.exp(-sq / (2.0 * params.lengthscale**2))


def rbf_matrix(A: np.ndarray, B: np.ndarray, params: KernelParams) -> np.ndarray:
    """Kernel matrix between row sets A (n, d) and B (m, d)."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise DimensionMismatch(f"kernel inputs have dims {A.shape[1]} vs {B.shape[1]}")
    sq = cdist(A, B, metric="sqeuclidean")
    return params.signal_variance * np.exp(-sq / (2.0 * params.lengthscale**2))


def default_kernel_params(pairs: LogitMapSet, mean: str = "zero") -> KernelParams:
    """Median-heuristic lengthscale and target-variance signal amplitude.

    ``mean`` is "zero" (default) or "empirical" (grand mean of all targets).
    """
    if pairs.M == 0:
        raise EmptyTrainingSet("cannot derive kernel defaults from an empty set")
    X = pairs.inputs()
    S = pairs.targets()
    if pairs.M >= 2:
        dists = pdist(X)
        ls = float(np.median(dists))
    else:
        ls = 0.0
    if not (ls > 0):
        ls = 1.0
    sig = float(np.mean(np.var(S, axis=0)))
    if not (sig > 0):
        sig = 1.0
    mean_const = float(np.mean(S)) if mean == "empirical" else 0.0
    return KernelParams(signal_variance=sig, lengthscale=ls, mean_const=mean_const)


def _chol_with_jitter(A: np.ndarray, trace_k: float, m: int) -> tuple[np.ndarray, float]:
    """Lower Cholesky of A, escalating diagonal jitter before giving up."""
    base = trace_k / m
    jitter = 0.0
    while True:
        try:
            mat = A if jitter == 0.0 else A + jitter * np.eye(m)
            L = cholesky(mat, lower=True)
        except np.linalg.LinAlgError:
            L = None
        if L is not None and np.all(np.isfinite(L)) and np.all(np.diag(L) > 0):
            return L, jitter
        jitter = _JITTER_START * base if jitter == 0.0 else jitter * 10.0
        if jitter > _JITTER_LIMIT * base:
            raise IllConditioned(
                f"factorization failed for M={m} even with jitter up to "
                f"{_JITTER_LIMIT * base:.3e}"
            )


def fit_gp(
    pairs: LogitMapSet,
    kernel: KernelParams | None = None,
    noise: NoiseParams | None = None,
) -> GPPosterior:
    """Fit independent per-dimension GPs with a shared kernel.

    Dimensions with equal noise share one factorization. Raises
    EmptyTrainingSet for M=0 and IllConditioned when the jitter schedule is
    exhausted or any computed quantity is non-finite.
    """
    if pairs.M == 0:
        raise EmptyTrainingSet("GP fit requires at least one LogitMap pair")
    X = pairs.inputs()
    S = pairs.targets()
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(S))):
        raise NonFiniteInput("training pairs contain non-finite values")
    if kernel is None:
        kernel = default_kernel_params(pairs)
    if noise is None:
        noise = NoiseParams()
    m, _ = X.shape
    v = S.shape[1]
    noise_vec = noise.expand(v)

    K = rbf_matrix(X, X, kernel)
    trace_k = float(np.trace(K))
    targets = S - kernel.mean_const

    dual = np.empty((m, v))
    groups: list[_FactorGroup] = []
    for value in np.unique(noise_vec):
        dims = np.flatnonzero(noise_vec == value)
        L, jitter = _chol_with_jitter(K + value * np.eye(m), trace_k, m)
        dual[:, dims] = cho_solve((L, True), targets[:, dims])
        groups.append(_FactorGroup(noise_variance=float(value), dims=dims, chol=L, jitter=jitter))
    if not np.all(np.isfinite(dual)):
        raise IllConditioned("dual weights came out non-finite")
    return GPPosterior(
        X=X, kernel=kernel, noise_per_dim=noise_vec, dual_weights=dual, factor_groups=groups
    )


def _check_query(posterior: GPPosterior, x: np.ndarray) -> np.ndarray:
    x = as_vector(x, what="query point")
    if x.shape != (posterior.d,):
        raise DimensionMismatch(f"query has dim {x.shape[0]}, expected {posterior.d}")
    return x


def predict_mean(posterior: GPPosterior, x: np.ndarray) -> np.ndarray:
    """Predictive mean logits at a single point; deterministic."""
    x = _check_query(posterior, x)
    return predict_mean_batch(posterior, x[None, :])[0]


def predict_mean_batch(posterior: GPPosterior, Xq: np.ndarray) -> np.ndarray:
    """Predictive mean logits for query rows, shape (n, V)."""
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    if Xq.shape[1] != posterior.d:
        raise DimensionMismatch(f"queries have dim {Xq.shape[1]}, expected {posterior.d}")
    if not np.all(np.isfinite(Xq)):
        raise NonFiniteInput("query points contain non-finite values")
    Kq = rbf_matrix(Xq, posterior.X, posterior.kernel)
    out = Kq @ posterior.dual_weights + posterior.kernel.mean_const
    if not np.all(np.isfinite(out)):
        raise IllConditioned("predictive mean came out non-finite")
    return out


def predict_uncertainty(
    posterior: GPPosterior, x: np.ndarray, aggregate: str = "max"
) -> UncertaintyEstimate:
    """Per-dimension predictive variances at one point plus a scalar aggregate.

    ``aggregate`` is "max" (conservative default: any unreliable dimension
    triggers fallback) or "mean".
    """
    x = _check_query(posterior, x)
    per_dim, scalar = predict_uncertainty_batch(posterior, x[None, :], aggregate=aggregate)
    return UncertaintyEstimate(per_dim=per_dim[0], scalar=float(scalar[0]))


def predict_uncertainty_batch(
    posterior: GPPosterior, Xq: np.ndarray, aggregate: str = "max"
) -> tuple[np.ndarray, np.ndarray]:
    """Batch variances: returns (per_dim (n, V), scalar (n,))."""
    if aggregate not in ("max", "mean"):
        raise ValueError(f"unknown aggregate {aggregate!r}")
    Xq = np.atleast_2d(np.asarray(Xq, dtype=np.float64))
    if Xq.shape[1] != posterior.d:
        raise DimensionMismatch(f"queries have dim {Xq.shape[1]}, expected {posterior.d}")
    if not np.all(np.isfinite(Xq)):
        raise NonFiniteInput("query points contain non-finite values")
    n = Xq.shape[0]
    Kq = rbf_matrix(Xq, posterior.X, posterior.kernel)  # (n, M)
    k_xx = posterior.kernel.signal_variance
    per_dim = np.empty((n, posterior.V))
    for group in posterior.factor_groups:
        w = solve_triangular(group.chol, Kq.T, lower=True)  # (M, n)
        var = k_xx - np.sum(w * w, axis=0)  # (n,)
        if np.any(var < -_NEG_VAR_TOL):
            raise NegativeVariance(
                f"variance {float(var.min()):.3e} below round-off tolerance -{_NEG_VAR_TOL:.0e}"
            )
        var = np.clip(var, 0.0, None)
        per_dim[:, group.dims] = var[:, None]
    if not np.all(np.isfinite(per_dim)):
        raise IllConditioned("predictive variance came out non-finite")
    scalar = per_dim.max(axis=1) if aggregate == "max" else per_dim.mean(axis=1)
    return per_dim, scalar


def log_marginal_likelihood(
    pairs: LogitMapSet,
    kernel: KernelParams | None = None,
    noise: NoiseParams | None = None,
) -> float:
    """Sum over output dimensions of the Gaussian log marginal likelihood."""
    posterior = fit_gp(pairs, kernel=kernel, noise=noise)
    targets = pairs.targets() - posterior.kernel.mean_const
    m = posterior.M
    total = 0.0
    for group in posterior.factor_groups:
        logdet_half = float(np.sum(np.log(np.diag(group.chol))))
        for dim in group.dims:
            y = targets[:, dim]
            alpha = posterior.dual_weights[:, dim]
            total += -0.5 * float(y @ alpha) - logdet_half - 0.5 * m * math.log(2.0 * math.pi)
    if not math.isfinite(total):
        raise IllConditioned("log marginal likelihood came out non-finite")
    return total


def tune_kernel_params(
    pairs: LogitMapSet,
    noise: NoiseParams | None = None,
    lengthscale_factors: tuple[float, ...] = (0.3, 1.0, 3.0),
    signal_factors: tuple[float, ...] = (0.3, 1.0, 3.0),
) -> KernelParams:
    """Grid search around the median-heuristic defaults, maximizing LML."""
    base = default_kernel_params(pairs)
    best, best_lml = base, -math.inf
    for lf in lengthscale_factors:
        for sf in signal_factors:
            cand = KernelParams(
                signal_variance=base.signal_variance * sf,
                lengthscale=base.lengthscale * lf,
                mean_const=base.mean_const,
            )
            try:
                lml = log_marginal_likelihood(pairs, kernel=cand, noise=noise)
            except IllConditioned:
                continue
            if lml > best_lml:
                best, best_lml = cand, lml
    return best


def calibrate_gate_threshold(
    posterior: GPPosterior,
    inputs: np.ndarray,
    p: float = 0.01,
    aggregate: str = "max",
) -> GateConfig:
    """Pick theta so that ceil(p*N) inputs strictly exceed it.

    Ascending (1-p)-quantile of the scalar uncertainties; ties resolve toward
    fewer fallbacks.
    """
    if not (0 < p < 1):
        raise EmptyInput(f"fallback fraction must be in (0,1), got {p}")
    Xq = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    n = Xq.shape[0]
    if n == 0:
        raise EmptyInput("gate calibration requires at least one input")
    _, scalar = predict_uncertainty_batch(posterior, Xq, aggregate=aggregate)
    ordered = np.sort(scalar)
    k = math.ceil(p * n)
    idx = max(0, n - k - 1)
    return GateConfig(threshold=float(ordered[idx]), target_fallback_fraction=p)


# ---------------------------------------------------------------------------
# Posterior serialization (npz container, format-tagged, bit-exact floats)
# ---------------------------------------------------------------------------

_POSTERIOR_FORMAT = 1


def save_posterior(posterior: GPPosterior, path) -> None:
    chols = np.stack([g.chol for g in posterior.factor_groups])
    group_noise = np.array([g.noise_variance for g in posterior.factor_groups])
    group_jitter = np.array([g.jitter for g in posterior.factor_groups])
    dim_group = np.empty(posterior.V, dtype=np.int64)
    for gi, g in enumerate(posterior.factor_groups):
        dim_group[g.dims] = gi
    np.savez(
        path,
        format_version=np.int64(_POSTERIOR_FORMAT),
        X=posterior.X,
        dual_weights=posterior.dual_weights,
        noise_per_dim=posterior.noise_per_dim,
        signal_variance=np.float64(posterior.kernel.signal_variance),
        lengthscale=np.float64(posterior.kernel.lengthscale),
        mean_const=np.float64(posterior.kernel.mean_const),
        group_chols=chols,
        group_noise=group_noise,
        group_jitter=group_jitter,
        dim_group=dim_group,
    )


def load_posterior(path) -> GPPosterior:
    with np.load(path) as blob:
        version = int(blob["format_version"])
        if version != _POSTERIOR_FORMAT:
            raise ParseError(f"unsupported posterior format {version}")
        kernel = KernelParams(
            signal_variance=float(blob["signal_variance"]),
            lengthscale=float(blob["lengthscale"]),
            mean_const=float(blob["mean_const"]),
        )
        dim_group = blob["dim_group"]
        groups = [
            _FactorGroup(
                noise_variance=float(blob["group_noise"][gi]),
                dims=np.flatnonzero(dim_group == gi),
                chol=blob["group_chols"][gi],
                jitter=float(blob["group_jitter"][gi]),
            )
            for gi in range(blob["group_chols"].shape[0])
        ]
        return GPPosterior(
            X=blob["X"],
            kernel=kernel,
            noise_per_dim=blob["noise_per_dim"],
            dual_weights=blob["dual_weights"],
            factor_groups=groups,
        )
