"""Full-covariance Gaussian mixture densities fitted by EM, with MDL scoring."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

LOG_2PI = math.log(2 * math.pi)
COLLAPSE_WEIGHT = 1e-8


class EmCollapseError(RuntimeError):
    """EM kept collapsing a component after the allowed internal restarts."""


@dataclass(frozen=True)
class EmConfig:
    max_iters: int = 500
    rel_tol: float = 1e-7
    cov_floor: float = 1e-6
    # int, or a sequence of ints fed to numpy's SeedSequence
    seed: int | tuple = 0
    collapse_restarts: int = 3

    def __post_init__(self):
        if self.max_iters < 1 or self.rel_tol <= 0 or self.cov_floor <= 0:
            raise ValueError("max_iters, rel_tol and cov_floor must be positive")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if isinstance(d["seed"], tuple):
            d["seed"] = list(d["seed"])
        return d


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Gaussian mixture with full covariances.

    Parameters live in standardized feature units. ``pdf``/``log_pdf``
    evaluate through Cholesky factors of the covariances.
    """

    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    train_log_likelihood: float = float("nan")
    n_iter: int = 0
    converged: bool = True
    _chol_inv: np.ndarray = field(init=False, repr=False, compare=False)
    _log_norm: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        mu = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        cov = np.asarray(self.covariances, dtype=np.float64)
        K, d = mu.shape
        cov = cov.reshape(K, d, d)
        if w.size != K:
            raise ValueError("weights and means disagree on the component count")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("mixture weights must be nonnegative and sum to 1")
        chol = np.linalg.cholesky(cov)  # raises LinAlgError if not SPD
        chol_inv = np.linalg.inv(chol)
        log_det = 2.0 * np.log(np.diagonal(chol, axis1=1, axis2=2)).sum(axis=1)
        with np.errstate(divide="ignore"):
            log_w = np.log(w)
        for name, val in (("weights", w), ("means", mu), ("covariances", cov),
                          ("_chol_inv", chol_inv), ("_log_norm", log_w - 0.5 * (d * LOG_2PI + log_det))):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def K(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def component_log_pdf(self, X) -> np.ndarray:
        """Weighted per-component log densities, shape (K, n)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, self.d) if self.d > 1 else X[:, None]
        if X.shape[1] != self.d:
            raise ValueError(f"expected {self.d}-dimensional input, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input to GMM density")
        diff = X[None, :, :] - self.means[:, None, :]
        z = np.einsum("kij,knj->kni", self._chol_inv, diff)
        maha = np.einsum("kni,kni->kn", z, z)
        return self._log_norm[:, None] - 0.5 * maha

    def log_pdf(self, X) -> np.ndarray:
        return logsumexp(self.component_log_pdf(X), axis=0)

    def pdf(self, X) -> np.ndarray:
        return np.exp(self.log_pdf(X))

    def score(self, X) -> float:
        """Total log-likelihood of the rows of ``X``."""
        return float(self.log_pdf(X).sum())


def pdf(model: GmmModel, x) -> float:
    """Mixture density at a single point."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(model.pdf(x)[0])


def log_pdf(model: GmmModel, x) -> float:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return float(model.log_pdf(x)[0])


def _as_data(data) -> np.ndarray:
    X = np.asarray(data, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError("data must be an (n, d) matrix")
    if not np.all(np.isfinite(X)):
        raise ValueError("data contains non-finite values")
    return X


def _m_step(X, resp, cov_floor):
    n, d = X.shape
    nk = resp.sum(axis=1)
    weights = nk / nk.sum()
    means = (resp @ X) / nk[:, None]
    diff = X[None, :, :] - means[:, None, :]
    cov = np.einsum("kn,kni,knj->kij", resp, diff, diff) / nk[:, None, None]
    cov += cov_floor * np.eye(d)
    # symmetrise away rounding so Cholesky sees an exactly symmetric matrix
    cov = 0.5 * (cov + np.swapaxes(cov, 1, 2))
    return weights, means, cov


def _em_once(X, K, cfg, rng, history):
    n, d = X.shape
    centered = X - X.mean(axis=0)
    global_cov = centered.T @ centered / n + cfg.cov_floor * np.eye(d)
    weights = np.full(K, 1.0 / K)
    means = X[rng.choice(n, size=K, replace=False)]
    covs = np.repeat(global_cov[None], K, axis=0)

    prev = None
    converged = False
    it = 0
    while True:
        try:
            model = GmmModel(weights, means, covs)
        except np.linalg.LinAlgError:
            return None
        comp = model.component_log_pdf(X)
        # log-sum-exp by hand so the exponentials double as responsibilities
        top = comp.max(axis=0)
        expo = np.exp(comp - top)
        total = expo.sum(axis=0)
        ll = float(np.sum(top + np.log(total)))
        history.append(ll)
        if prev is not None and ll - prev < cfg.rel_tol * abs(prev):
            converged = True
            break
        if it >= cfg.max_iters:
            break
        resp = expo / total
        weights, means, covs = _m_step(X, resp, cfg.cov_floor)
        if np.any(weights < COLLAPSE_WEIGHT):
            return None
        prev = ll
        it += 1
    return replace(model, train_log_likelihood=ll, n_iter=it, converged=converged)


def em_fit(data, K: int, cfg: EmConfig = EmConfig(), history: list | None = None) -> GmmModel:
    """Fit a K-component full-covariance GMM by expectation maximisation.

    Means start at K distinct rows drawn with the seeded generator,
    covariances at the global sample covariance and weights uniform. Every
    M-step adds ``cov_floor`` to the covariance diagonals. Iteration stops
    after ``max_iters`` M-steps or once the relative log-likelihood gain
    drops below ``rel_tol``.

    If ``history`` is a list, the log-likelihood at each iteration of the
    successful attempt is appended to it.
    """
    X = _as_data(data)
    n, d = X.shape
    if K < 1:
        raise ValueError("K must be at least 1")
    if n <= K * d:
        raise ValueError(f"n too small: {n} rows for K={K}, d={d}")
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.collapse_restarts + 1):
        trace: list[float] = []
        model = _em_once(X, K, cfg, rng, trace)
        if model is not None:
            if history is not None:
                history.extend(trace)
            return model
    raise EmCollapseError(
        f"EM collapsed a component (weight < {COLLAPSE_WEIGHT}) for K={K} "
        f"after {cfg.collapse_restarts} restarts"
    )


def n_free_params(K: int, d: int) -> int:
    """Free parameters of a K-component, d-dimensional full-covariance GMM."""
    return (K - 1) + K * d + K * d * (d + 1) // 2


def mdl_score(model: GmmModel, n: int) -> float:
    """Two-part description length ``-LL + (P/2) ln n``; lower is better."""
    if n <= 1:
        raise ValueError("MDL needs n > 1 training points")
    return -model.train_log_likelihood + 0.5 * n_free_params(model.K, model.d) * math.log(n)
