"""Per-class adaptive thresholds from a 1-D Gaussian mixture fit.

Confidence scores of one class are modeled as a two-component mixture
(true and false detections). The class threshold is the smallest score
whose posterior assigns it to the higher-mean component; classes where
the fit is impossible or degenerate fall back to a fixed threshold.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

SOURCE_FITTED = "fitted"
SOURCE_FALLBACK = "fallback"


class FallbackNeeded(Exception):
    """Raised when a class cannot get a fitted threshold."""


@dataclass(frozen=True)
class GmmConfig:
    """EM fitting knobs, all deterministic given ``seed``."""

    k: int = 2
    tol: float = 1e-6
    max_iter: int = 100
    n_restarts: int = 3
    min_samples: int = 8
    var_floor: float = 1e-6
    spread_floor: float = 1e-3
    window: int = 4096
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.min_samples < 2:
            raise ValueError("min_samples must be >= 2")
        if self.tol <= 0 or self.max_iter < 1 or self.window < 1:
            raise ValueError("tol, max_iter and window must be positive")
        if self.var_floor <= 0 or self.spread_floor <= 0:
            raise ValueError("var_floor and spread_floor must be positive")
        if self.seed < 0 or self.n_restarts < 0:
            raise ValueError("seed and n_restarts must be nonnegative")


@dataclass(frozen=True)
class GmmParams:
    """Fitted mixture: per-component weight, mean, variance.

    ``ll_trace`` records the log-likelihood after every EM iteration of
    the winning restart (nondecreasing by construction of EM).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    log_likelihood: float = float("-inf")
    n_iter: int = 0
    ll_trace: tuple = field(default=(), repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        mu = np.asarray(self.means, dtype=np.float64)
        var = np.asarray(self.variances, dtype=np.float64)
        if not (w.shape == mu.shape == var.shape) or w.ndim != 1:
            raise ValueError("weights, means, variances must share a 1-D shape")
        if abs(float(w.sum()) - 1.0) > 1e-9:
            raise ValueError("component weights must sum to 1")
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "variances", var)

    @property
    def k(self) -> int:
        return self.weights.size


def _log_density(x: np.ndarray, params_w, params_mu, params_var) -> np.ndarray:
    """(N, K) log of weight_k * Normal(x | mu_k, var_k)."""
    log_w = np.log(np.maximum(params_w, 1e-300))
    return log_w - 0.5 * (
        np.log(2.0 * np.pi * params_var) + (x[:, None] - params_mu) ** 2 / params_var
    )


def responsibilities(samples: np.ndarray, params: GmmParams) -> np.ndarray:
    """(N, K) posterior component probabilities; rows sum to 1."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    logd = _log_density(x, params.weights, params.means, params.variances)
    norm = _logsumexp_rows(logd)
    return np.exp(logd - norm[:, None])


def _logsumexp_rows(logd: np.ndarray) -> np.ndarray:
    top = logd.max(axis=1)
    return top + np.log(np.exp(logd - top[:, None]).sum(axis=1))


def _em_run(x: np.ndarray, mu0: np.ndarray, var0: np.ndarray, pi0: np.ndarray, cfg: GmmConfig):
    """One EM run from the given initialization; returns params or None."""
    pi, mu, var = pi0.copy(), mu0.copy(), var0.copy()
    trace = []
    prev_ll = -np.inf
    n_iter = 0
    for n_iter in range(1, cfg.max_iter + 1):
        logd = _log_density(x, pi, mu, var)
        norm = _logsumexp_rows(logd)
        ll = float(norm.sum())
        resp = np.exp(logd - norm[:, None])
        nk = resp.sum(axis=0)
        if np.any(nk < 1e-12):
            return None  # component died: restart unusable
        pi = nk / x.size
        mu = resp.T @ x / nk
        var = np.maximum((resp * (x[:, None] - mu) ** 2).sum(axis=0) / nk, cfg.var_floor)
        trace.append(ll)
        if abs(ll - prev_ll) < cfg.tol:
            break
        prev_ll = ll
    final_ll = float(_logsumexp_rows(_log_density(x, pi, mu, var)).sum())
    trace.append(final_ll)
    return GmmParams(
        weights=pi,
        means=mu,
        variances=var,
        log_likelihood=final_ll,
        n_iter=n_iter,
        ll_trace=tuple(trace),
    )


def fit_gmm_1d(samples, cfg: GmmConfig = GmmConfig(), k: int | None = None, seed: int | None = None) -> GmmParams:
    """Fit a K-component 1-D Gaussian mixture by EM.

    Initialization is a deterministic median split plus ``n_restarts``
    seeded random restarts; the best final log-likelihood wins. Samples
    are sorted on entry, so the result is independent of input order.

    Raises :class:`FallbackNeeded` when there are fewer than
    ``min_samples`` points, the sample spread is below ``spread_floor``,
    or every restart collapses.
    """
    x = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    k = cfg.k if k is None else k
    seed = cfg.seed if seed is None else seed
    if x.size < cfg.min_samples:
        raise FallbackNeeded(f"need at least {cfg.min_samples} samples, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise ValueError("samples must be finite")
    spread = float(x[-1] - x[0])
    if spread < cfg.spread_floor:
        raise FallbackNeeded(f"sample spread {spread:.3g} below floor {cfg.spread_floor:.3g}")
    if k < 2:
        mu = np.array([float(x.mean())])
        var = np.array([max(float(x.var()), cfg.var_floor)])
        fit = _em_run(x, mu, var, np.array([1.0]), cfg)
        if fit is None:
            raise FallbackNeeded("single-component fit collapsed")
        return fit

    global_var = max(float(x.var()), cfg.var_floor)
    inits = []
    # deterministic init: split at the median, one component per half
    halves = np.array_split(x, k)
    mu0 = np.array([float(h.mean()) for h in halves])
    var0 = np.maximum(np.array([float(h.var()) for h in halves]), cfg.var_floor)
    inits.append((mu0, var0))
    rng = np.random.default_rng(seed)
    for _ in range(cfg.n_restarts):
        mu_r = np.sort(rng.choice(x, size=k, replace=False))
        inits.append((mu_r, np.full(k, global_var)))

    pi0 = np.full(k, 1.0 / k)
    best = None
    for mu_i, var_i in inits:
        fit = _em_run(x, mu_i, var_i, pi0, cfg)
        if fit is not None and (best is None or fit.log_likelihood > best.log_likelihood):
            best = fit
    if best is None:
        raise FallbackNeeded("every EM restart collapsed")
    return best


def positive_component(params: GmmParams) -> int:
    """Index of the component modeling true detections.

    The larger mean wins; exact mean ties go to the larger variance, then
    to the lower index.
    """
    order = sorted(
        range(params.k),
        key=lambda j: (-params.means[j], -params.variances[j], j),
    )
    return order[0]


def class_threshold(samples, params: GmmParams) -> float:
    """Smallest sample assigned (posterior > 0.5) to the positive component."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise FallbackNeeded("no samples to threshold")
    pos = positive_component(params)
    resp = responsibilities(x, params)
    mask = resp[:, pos] > 0.5
    if not np.any(mask):
        raise FallbackNeeded("no sample assigned to the positive component")
    return float(x[mask].min())


@dataclass(frozen=True)
class ThresholdEntry:
    threshold: float
    source: str
    params: GmmParams | None = None


@dataclass
class ClassThresholds:
    """Per-class acceptance thresholds plus the mixtures that made them."""

    entries: dict[int, ThresholdEntry]
    fallback: float = 0.5

    def get(self, class_id: int) -> ThresholdEntry:
        """Entry for a class; unknown classes get the fallback threshold."""
        entry = self.entries.get(int(class_id))
        if entry is None:
            return ThresholdEntry(self.fallback, SOURCE_FALLBACK)
        return entry

    def threshold(self, class_id: int) -> float:
        return self.get(class_id).threshold

    @classmethod
    def uniform(cls, value: float, class_ids: Sequence[int] = ()) -> "ClassThresholds":
        entries = {int(c): ThresholdEntry(float(value), SOURCE_FALLBACK) for c in class_ids}
        return cls(entries=entries, fallback=float(value))

    def to_json_obj(self) -> dict:
        out = {}
        for class_id in sorted(self.entries):
            entry = self.entries[class_id]
            record = {"threshold": entry.threshold, "source": entry.source}
            if entry.params is not None:
                record["pi"] = [float(v) for v in entry.params.weights]
                record["mu"] = [float(v) for v in entry.params.means]
                record["sigma2"] = [float(v) for v in entry.params.variances]
            out[str(class_id)] = record
        return out

    @classmethod
    def from_json_obj(cls, obj: Mapping, fallback: float = 0.5) -> "ClassThresholds":
        entries = {}
        for key, record in obj.items():
            params = None
            if "pi" in record:
                params = GmmParams(
                    weights=np.asarray(record["pi"], dtype=np.float64),
                    means=np.asarray(record["mu"], dtype=np.float64),
                    variances=np.asarray(record["sigma2"], dtype=np.float64),
                )
            entries[int(key)] = ThresholdEntry(
                threshold=float(record["threshold"]),
                source=str(record["source"]),
                params=params,
            )
        return cls(entries=entries, fallback=fallback)

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), sort_keys=True)


def fit_all_thresholds(
    per_class_samples: Mapping[int, Sequence[float]],
    fallback_threshold: float = 0.5,
    cfg: GmmConfig = GmmConfig(),
    seed: int | None = None,
) -> ClassThresholds:
    """Fit every class independently; failures degrade to the fallback.

    Each class gets its own deterministic seed derived from (seed,
    class_id) so refits across rounds stay reproducible.
    """
    base_seed = cfg.seed if seed is None else seed
    entries: dict[int, ThresholdEntry] = {}
    for class_id in sorted(int(c) for c in per_class_samples):
        samples = np.asarray(per_class_samples[class_id], dtype=np.float64).ravel()
        try:
            params = fit_gmm_1d(samples, cfg, seed=_class_seed(base_seed, class_id))
            tau = class_threshold(samples, params)
            entries[class_id] = ThresholdEntry(tau, SOURCE_FITTED, params)
        except FallbackNeeded:
            entries[class_id] = ThresholdEntry(fallback_threshold, SOURCE_FALLBACK)
    return ClassThresholds(entries=entries, fallback=fallback_threshold)


def _class_seed(base: int, class_id: int) -> int:
    return int(np.random.SeedSequence([base, class_id]).generate_state(1)[0])
