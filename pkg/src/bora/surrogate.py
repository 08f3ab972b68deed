"""Gaussian-process surrogate (Matern 5/2, ARD), expected improvement and
candidate proposal.

Inputs are mapped to the unit cube and targets standardized before fitting;
every public quantity (posterior mean/std, EI) is reported in the original
output units.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import blas, cho_solve, lapack, solve_triangular
from scipy.optimize import minimize
from scipy.special import ndtr

from .core import Dataset, SamplerExhausted, SearchSpace

log = logging.getLogger(__name__)

SQRT5 = np.sqrt(5.0)
LENGTHSCALE_BOUNDS = (1e-3, 10.0)
SIGNAL_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (1e-10, 1.0)
DEGENERATE_NOISE = 1e-2
N_RESTARTS = 8
N_SEEDS = 2048
N_REFINE = 16
N_DISCRETE_CANDIDATES = 4096


@dataclass(frozen=True)
class KernelParams:
    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).ravel()
        object.__setattr__(self, "lengthscales", ls)
        if np.any(ls <= 0) or self.signal_variance <= 0:
            raise ValueError("lengthscales and signal variance must be positive")
        if self.noise_variance < NOISE_BOUNDS[0]:
            object.__setattr__(self, "noise_variance", NOISE_BOUNDS[0])

    def to_vector(self) -> np.ndarray:
        return np.log(np.r_[self.lengthscales, self.signal_variance, self.noise_variance])

    @classmethod
    def from_vector(cls, theta) -> "KernelParams":
        e = np.exp(np.asarray(theta, dtype=float))
        return cls(e[:-2], float(e[-2]), float(e[-1]))

    def to_dict(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_variance": float(self.signal_variance),
            "noise_variance": float(self.noise_variance),
        }


def matern52(A: np.ndarray, B: np.ndarray, params: KernelParams) -> np.ndarray:
    """Cross-covariance matrix between rows of A and B (unit-cube inputs)."""
    r = _scaled_dist(A, B, params.lengthscales)
    return params.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r ** 2) * np.exp(-SQRT5 * r)


def _scaled_dist(A, B, ls):
    a = np.asarray(A, dtype=float) / ls
    b = np.asarray(B, dtype=float) / ls
    d2 = (a ** 2).sum(1)[:, None] + (b ** 2).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


def _cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, adding diagonal jitter only if required."""
    jitter = 0.0
    for _ in range(8):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(len(K))), jitter
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
    raise np.linalg.LinAlgError("kernel matrix is not positive definite")


@dataclass
class GPModel:
    """A fitted GP. Immutable after construction; safe to query concurrently."""

    space: SearchSpace
    X: np.ndarray  # unit-cube training inputs
    z: np.ndarray  # standardized targets
    params: KernelParams
    y_mean: float = 0.0
    y_std: float = 1.0
    degenerate: bool = False
    nll: float = float("nan")
    _L: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)
    _Kinv: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.X):
            K = matern52(self.X, self.X, self.params) + self.params.noise_variance * np.eye(len(self.X))
            self._L, _ = _cholesky(K)
            self._alpha = cho_solve((self._L, True), self.z)
            self._Kinv = cho_solve((self._L, True), np.eye(len(self.X)))

    @classmethod
    def prior(cls, space: SearchSpace, params: KernelParams | None = None) -> "GPModel":
        params = params or KernelParams(np.full(space.d, 0.5), 1.0, 1e-6)
        return cls(space, np.empty((0, space.d)), np.empty(0), params)

    @classmethod
    def from_params(cls, space: SearchSpace, X, y, params: KernelParams, standardize: bool = True) -> "GPModel":
        """Condition a GP with fixed hyperparameters on raw (original-unit) data."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        mean, std = _standardizer(y) if standardize else (0.0, 1.0)
        return cls(space, space.to_unit(X), (y - mean) / std, params, mean, std)

    @property
    def n(self) -> int:
        return len(self.X)

    @property
    def y_best(self) -> float:
        return float(self.z.max() * self.y_std + self.y_mean)

    def predict(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and std (original units) at a batch of points."""
        U = self.space.to_unit(np.atleast_2d(np.asarray(points, dtype=float)))
        return self._predict_unit(U)

    def _predict_unit(self, U):
        s2 = self.params.signal_variance
        if self.n == 0:
            mu = np.zeros(len(U))
            var = np.full(len(U), s2)
        else:
            Ks = matern52(U, self.X, self.params)
            mu = Ks @ self._alpha
            v = solve_triangular(self._L, Ks.T, lower=True)
            var = np.maximum(s2 - (v ** 2).sum(0), 0.0)
        return self.y_mean + self.y_std * mu, self.y_std * np.sqrt(var)

    def posterior(self, point) -> tuple[float, float]:
        mu, sd = self.predict(np.asarray(point, dtype=float)[None, :])
        return float(mu[0]), float(sd[0])

    def _ei_and_grad_unit(self, U: np.ndarray, y_best: float) -> tuple[np.ndarray, np.ndarray]:
        """EI at a batch of unit-cube points and its gradient w.r.t. each point."""
        p = self.params
        diff = U[:, None, :] - self.X[None, :, :]
        r = np.sqrt(np.maximum(((diff / p.lengthscales) ** 2).sum(2), 0.0))
        e = np.exp(-SQRT5 * r)
        k = p.signal_variance * (1.0 + SQRT5 * r + 5.0 / 3.0 * r ** 2) * e
        dk = (-(5.0 / 3.0) * p.signal_variance * (1.0 + SQRT5 * r) * e)[:, :, None] * diff / p.lengthscales ** 2
        Kinv_k = k @ self._Kinv
        sd_s = np.sqrt(np.maximum(p.signal_variance - (k * Kinv_k).sum(1), 0.0))
        mu = self.y_mean + self.y_std * (k @ self._alpha)
        sd = self.y_std * sd_s
        dmu = self.y_std * np.einsum("bnd,n->bd", dk, self._alpha)
        imp = mu - y_best
        flat = sd < 1e-12
        safe = np.where(flat, 1.0, sd_s)
        dsd = -self.y_std * np.einsum("bnd,bn->bd", dk, Kinv_k) / safe[:, None]
        zz = imp / np.where(flat, 1.0, sd)
        cdf, pdf = ndtr(zz), np.exp(-0.5 * zz ** 2) / np.sqrt(2 * np.pi)
        ei = np.where(flat, np.maximum(imp, 0.0), np.maximum(imp * cdf + sd * pdf, 0.0))
        grad = np.where(flat[:, None], dmu * (imp > 0)[:, None], cdf[:, None] * dmu + pdf[:, None] * dsd)
        return ei, grad

    def hyperparameters(self) -> dict:
        d = self.params.to_dict()
        d.update(y_mean=self.y_mean, y_std=self.y_std, degenerate=self.degenerate)
        return d


def _standardizer(y: np.ndarray) -> tuple[float, float]:
    mean = float(y.mean()) if len(y) else 0.0
    std = float(y.std()) if len(y) > 1 else 1.0
    return mean, (std if std > 1e-12 else 1.0)


def _neg_log_marginal_likelihood(theta, z, D2, rows, cols):
    """NLL of standardized targets and its gradient w.r.t. log-hyperparameters.

    Only the strict lower triangle is formed: ``D2`` holds squared coordinate
    differences of the pairs ``(rows[k], cols[k])``, shape (n(n-1)/2, d).
    """
    n = len(z)
    d = D2.shape[1]
    ls2 = np.exp(2.0 * theta[:d])
    s2, noise = np.exp(theta[d]), np.exp(theta[d + 1])
    r = np.sqrt(D2 @ (1.0 / ls2))
    e = np.exp(-SQRT5 * r)
    poly = 1.0 + SQRT5 * r
    kf = s2 * (poly + 5.0 / 3.0 * r * r) * e
    K = np.empty((n, n), order="F")
    K[rows, cols] = kf
    K.flat[::n + 1] = s2 + noise
    L, info = lapack.dpotrf(K, lower=1, overwrite_a=1, clean=0)
    if info != 0:
        return 1e25, np.zeros_like(theta)
    logdet = np.log(L.diagonal()).sum()
    Kinv, info = lapack.dpotri(L, lower=1, overwrite_c=1)
    alpha = blas.dsymv(1.0, Kinv, z, lower=1)
    nll = 0.5 * z @ alpha + logdet + 0.5 * n * np.log(2 * np.pi)
    # W = alpha alpha^T - K^-1, split into diagonal and strict lower triangle
    w_diag = alpha * alpha - Kinv.diagonal()
    w_low = alpha[rows] * alpha[cols] - Kinv[rows, cols]
    grad = np.empty_like(theta)
    grad[:d] = -((w_low * (s2 * 5.0 / 3.0) * poly * e) @ D2) / ls2
    grad[d] = -(w_low @ kf) - 0.5 * s2 * w_diag.sum()
    grad[d + 1] = -0.5 * noise * w_diag.sum()
    return float(nll), grad


def fit(dataset: Dataset, space: SearchSpace | None = None, **kwargs) -> GPModel:
    """Fit a GP to a dataset by maximizing the log marginal likelihood."""
    space = space or dataset.space
    return fit_arrays(space, dataset.X, dataset.y, **kwargs)


def fit_arrays(space: SearchSpace, X, y, *, restarts: int = N_RESTARTS, seed: int = 0,
               noise: float | None = None, warm_start: KernelParams | None = None) -> GPModel:
    """Fit on raw arrays. ``noise`` fixes the noise variance instead of learning it."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if len(X) < 2:
        raise ValueError("fitting a GP needs at least 2 samples")
    d = space.d
    U = space.to_unit(X)
    mean, std = _standardizer(y)
    z = (y - mean) / std

    if len(np.unique(U, axis=0)) < 2:
        log.warning("degenerate dataset: all inputs identical; using prior lengthscales")
        params = KernelParams(np.full(d, 0.5), 1.0, max(DEGENERATE_NOISE, noise or 0.0))
        return GPModel(space, U, z, params, mean, std, degenerate=True)

    rows, cols = np.tril_indices(len(U), -1)
    D2 = (U[rows] - U[cols]) ** 2
    lo = np.log(np.r_[np.full(d, LENGTHSCALE_BOUNDS[0]), SIGNAL_BOUNDS[0], NOISE_BOUNDS[0]])
    hi = np.log(np.r_[np.full(d, LENGTHSCALE_BOUNDS[1]), SIGNAL_BOUNDS[1], NOISE_BOUNDS[1]])
    if noise is not None:
        lo[-1] = hi[-1] = np.log(max(noise, NOISE_BOUNDS[0]))
    bounds = list(zip(lo, hi))

    rng = np.random.default_rng(seed)
    starts = [np.log(np.r_[np.full(d, 0.5), 1.0, noise if noise is not None else 1e-4])]
    if warm_start is not None:
        starts.append(warm_start.to_vector())
    while len(starts) < max(restarts, 1):
        s = np.r_[rng.uniform(np.log(0.05), np.log(2.0), d), rng.uniform(np.log(0.1), np.log(10.0)),
                  rng.uniform(np.log(1e-8), np.log(1e-2))]
        starts.append(s)

    best_theta, best_nll = None, np.inf
    for s in starts:
        s = np.clip(s, lo, hi)
        try:
            res = minimize(_neg_log_marginal_likelihood, s, args=(z, D2, rows, cols), jac=True,
                           method="L-BFGS-B", bounds=bounds, options={"maxiter": 200})
        except (np.linalg.LinAlgError, ValueError, FloatingPointError):
            continue
        if np.isfinite(res.fun) and res.fun < best_nll:
            best_theta, best_nll = res.x, float(res.fun)
    if best_theta is None:
        best_theta = np.clip(starts[0], lo, hi)
    return GPModel(space, U, z, KernelParams.from_vector(best_theta), mean, std, nll=best_nll)


def ei_from_moments(mu, sigma, y_best):
    """Closed-form EI for maximization; degenerates to max(0, mu - y_best) as sigma -> 0."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    imp = mu - y_best
    safe = np.where(sigma < 1e-12, 1.0, sigma)
    zz = imp / safe
    ei = imp * ndtr(zz) + safe * np.exp(-0.5 * zz ** 2) / np.sqrt(2 * np.pi)
    ei = np.where(sigma < 1e-12, np.maximum(imp, 0.0), ei)
    return np.maximum(ei, 0.0)


def expected_improvement(model: GPModel, points, y_best: float):
    pts = np.asarray(points, dtype=float)
    mu, sd = model.predict(np.atleast_2d(pts))
    ei = ei_from_moments(mu, sd, y_best)
    return float(ei[0]) if pts.ndim == 1 else ei


def propose_candidates(model: GPModel, space: SearchSpace, n: int, rng: np.random.Generator,
                       dataset: Dataset | None = None, y_best: float | None = None) -> list[np.ndarray]:
    """Return the ``n`` highest-EI distinct points, excluding already evaluated ones."""
    if n < 1:
        raise ValueError("n must be >= 1")
    y_best = model.y_best if y_best is None else y_best
    taken = set(dataset.keys) if dataset is not None else set()

    if not space.is_continuous:
        try:
            cands = np.array(space.sample_uniform(rng, N_DISCRETE_CANDIDATES, dedupe=dataset))
        except SamplerExhausted:
            cands = np.array(space.sample_uniform(rng, n, dedupe=dataset))
        ei = expected_improvement(model, cands, y_best)
        order = np.argsort(-ei, kind="stable")
        return [cands[i] for i in order[:n]]

    U = rng.uniform(size=(N_SEEDS, space.d))
    mu, sd = model._predict_unit(U)
    seed_ei = ei_from_moments(mu, sd, y_best)
    pool_U = [U]
    pool_ei = [seed_ei]
    if model.n > 0:
        top = np.argsort(-seed_ei, kind="stable")[:N_REFINE]
        # the refinements are independent, so they share one separable L-BFGS problem
        starts = U[top]
        shape = starts.shape

        def negative(flat):
            v, g = model._ei_and_grad_unit(flat.reshape(shape), y_best)
            return -v.sum(), -g.ravel()

        try:
            res = minimize(negative, starts.ravel(), jac=True, method="L-BFGS-B",
                           bounds=[(0.0, 1.0)] * starts.size, options={"maxiter": 200})
            refined = np.clip(res.x.reshape(shape), 0.0, 1.0)
            m, s = model._predict_unit(refined)
            pool_U.append(refined)
            pool_ei.append(ei_from_moments(m, s, y_best))
        except (ValueError, np.linalg.LinAlgError):
            log.warning("acquisition refinement failed; using seed points")
    allU = np.vstack(pool_U)
    allei = np.concatenate(pool_ei)
    order = np.argsort(-allei, kind="stable")

    chosen: list[np.ndarray] = []
    chosen_U: list[np.ndarray] = []
    for i in order:
        u = allU[i]
        x = np.clip(space.from_unit(u), space.lower, space.upper)
        key = space.canonical_key(x)
        if key in taken:
            continue
        if any(np.max(np.abs(u - c)) < 1e-6 for c in chosen_U):
            continue
        taken.add(key)
        chosen.append(x)
        chosen_U.append(u)
        if len(chosen) == n:
            break
    return chosen


@dataclass(frozen=True)
class MonitorSet:
    """Points fixed at the start of a run where GP uncertainty is averaged."""

    points: np.ndarray

    @property
    def q(self) -> int:
        return len(self.points)

    @classmethod
    def sample(cls, space: SearchSpace, rng: np.random.Generator, q: int = 5000) -> "MonitorSet":
        if space.is_continuous:
            pts = rng.uniform(space.lower, space.upper, size=(q, space.d))
        else:
            pts = np.array(space.sample_uniform(rng, q))
        return cls(pts)


def monitor_stds(model: GPModel, monitor: MonitorSet) -> np.ndarray:
    return model.predict(monitor.points)[1]


def mean_uncertainty(model: GPModel, monitor: MonitorSet) -> float:
    return float(np.mean(monitor_stds(model, monitor)))
