"""Gaussian-process surrogates.

Regression uses a Matern-5/2 ARD kernel whose hyperparameters are fitted
by maximizing the log marginal likelihood (type-II maximum likelihood).
Binary constraint feedback is modelled with a GP classifier using a
logistic likelihood and the Laplace approximation.

All hyperparameter optimization happens in log space over the vector
``[log amplitude, log lengthscale_1..w, log noise]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.special import expit

from .errors import DomainError, NumericalError

SQRT5 = math.sqrt(5.0)
JITTER_FLOOR = 1e-6
JITTER_LADDER = (1e-6, 1e-4, 1e-2)

AMPLITUDE_BOUNDS = (1e-3, 1e3)
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
NOISE_BOUNDS = (1e-6, 1.0)

N_STARTS = 4
MAX_ITER = 200


@dataclass(frozen=True)
class KernelParams:
    amplitude: float
    lengthscales: tuple
    noise_variance: float = JITTER_FLOOR

    def __post_init__(self):
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        object.__setattr__(self, "lengthscales", ls)
        if not self.amplitude > 0 or not all(v > 0 for v in ls):
            raise DomainError("amplitude and lengthscales must be strictly positive")
        # small tolerance: exp(log(1e-6)) may land one ulp below the floor
        if not self.noise_variance >= JITTER_FLOOR * (1 - 1e-9):
            raise DomainError(f"noise_variance must be >= {JITTER_FLOOR}")

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def to_log(self) -> np.ndarray:
        return np.log(np.r_[self.amplitude, self.lengthscales, self.noise_variance])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        theta = np.asarray(theta, dtype=float)
        return cls(float(np.exp(theta[0])), tuple(np.exp(theta[1:-1])), float(np.exp(theta[-1])))


def _check_dim(X, params: KernelParams):
    if X.shape[-1] != params.dim:
        raise DomainError(f"input width {X.shape[-1]} does not match {params.dim} lengthscales")


def _matern_from_r(r):
    return (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * np.exp(-SQRT5 * r)


def kernel_matern52(x1, x2, params: KernelParams) -> float:
    """Matern-5/2 ARD covariance between two encoded points."""
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise DomainError("kernel inputs must have the same length")
    _check_dim(x1, params)
    r = math.sqrt(float(np.sum(((x1 - x2) / np.asarray(params.lengthscales)) ** 2)))
    return params.amplitude * float(_matern_from_r(r))


def kernel_matrix(X1, X2, params: KernelParams) -> np.ndarray:
    X1 = np.atleast_2d(X1)
    X2 = np.atleast_2d(X2)
    _check_dim(X1, params)
    _check_dim(X2, params)
    ls = np.asarray(params.lengthscales)
    diff = (X1[:, None, :] - X2[None, :, :]) / ls
    r = np.sqrt(np.sum(diff**2, axis=-1))
    return params.amplitude * _matern_from_r(r)


def _kernel_and_grads(X, params: KernelParams):
    """Kernel matrix and its derivatives w.r.t. log amplitude / log lengthscales."""
    ls = np.asarray(params.lengthscales)
    sq = ((X[:, None, :] - X[None, :, :]) / ls) ** 2  # n x n x d
    r = np.sqrt(np.sum(sq, axis=-1))
    e = np.exp(-SQRT5 * r)
    K = params.amplitude * (1.0 + SQRT5 * r + 5.0 / 3.0 * r**2) * e
    # dk/dlog l_d = (5/3) a (1 + sqrt5 r) exp(-sqrt5 r) (dx_d / l_d)^2
    g = (5.0 / 3.0) * params.amplitude * (1.0 + SQRT5 * r) * e
    dK_dls = np.moveaxis(g[:, :, None] * sq, -1, 0)  # d x n x n
    return K, dK_dls


def cholesky_with_jitter(A: np.ndarray):
    """Lower Cholesky factor of ``A``, escalating diagonal jitter on failure.

    Returns ``(L, jitter)`` with ``jitter`` the extra diagonal actually added.
    """
    try:
        return np.linalg.cholesky(A), 0.0
    except np.linalg.LinAlgError:
        pass
    n = A.shape[0]
    for jitter in JITTER_LADDER:
        try:
            return np.linalg.cholesky(A + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            continue
    raise NumericalError(f"Cholesky failed after jitter {JITTER_LADDER[-1]:g}")


def _cho_solve(L, b):
    return solve_triangular(L.T, solve_triangular(L, b, lower=True, check_finite=False),
                            lower=False, check_finite=False)


def log_marginal_likelihood(params: KernelParams, X, y, jitter: float = 0.0):
    """GP log evidence and its gradient over ``params.to_log()``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    n = len(y)
    if n < 1 or X.shape[0] != n:
        raise DomainError("need n >= 1 inputs matching the targets")
    _check_dim(X, params)
    K, dK_dls = _kernel_and_grads(X, params)
    noise = params.noise_variance + jitter
    L, extra = cholesky_with_jitter(K + noise * np.eye(n))
    Linv = solve_triangular(L, np.eye(n), lower=True, check_finite=False)
    Kinv = Linv.T @ Linv
    alpha = Kinv @ y
    value = -0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * math.log(2 * math.pi)

    M = np.outer(alpha, alpha) - Kinv
    grad = np.empty(params.dim + 2)
    grad[0] = 0.5 * np.sum(M * K)
    grad[1:-1] = 0.5 * np.einsum("ij,dij->d", M, dK_dls)
    grad[-1] = 0.5 * params.noise_variance * np.trace(M)
    return float(value), grad


def _log_bounds(dim: int, with_noise: bool = True):
    b = [tuple(np.log(AMPLITUDE_BOUNDS))] + [tuple(np.log(LENGTHSCALE_BOUNDS))] * dim
    if with_noise:
        b.append(tuple(np.log(NOISE_BOUNDS)))
    return b


def median_heuristic(X) -> np.ndarray:
    """Per-coordinate median absolute pairwise distance, clipped to bounds."""
    X = np.atleast_2d(X)
    n, d = X.shape
    if n < 2:
        return np.ones(d)
    iu = np.triu_indices(n, k=1)
    dist = np.abs(X[:, None, :] - X[None, :, :])[iu]
    med = np.median(dist, axis=0)
    med[med <= 0] = 1.0
    return np.clip(med, *LENGTHSCALE_BOUNDS)


def _starting_points(X, rng, n_starts, with_noise=True):
    d = X.shape[1]
    first = [0.0] + list(np.log(median_heuristic(X)))
    if with_noise:
        first.append(math.log(1e-3))
    starts = [np.array(first)]
    bounds = np.array(_log_bounds(d, with_noise))
    for _ in range(n_starts - 1):
        starts.append(rng.uniform(bounds[:, 0], bounds[:, 1]))
    return starts, bounds


def _multistart(objective, starts, bounds, max_iter):
    best_theta, best_val = None, np.inf
    for theta0 in starts:
        try:
            res = minimize(objective, theta0, jac=True, method="L-BFGS-B",
                           bounds=bounds, options={"maxiter": max_iter})
        except NumericalError:
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val, best_theta = res.fun, np.clip(res.x, bounds[:, 0], bounds[:, 1])
    if best_theta is None:
        raise NumericalError("hyperparameter fitting failed from every start")
    return best_theta


@dataclass(frozen=True, eq=False)
class GpModel:
    params: KernelParams
    X: np.ndarray
    y: np.ndarray  # standardized targets
    y_mean: float
    y_std: float
    chol: np.ndarray
    alpha_vec: np.ndarray
    jitter: float = 0.0

    @property
    def n(self) -> int:
        return len(self.y)

    def predict(self, Xq):
        """Posterior mean and variance at each row of ``Xq``, on the target scale."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        Ks = kernel_matrix(Xq, self.X, self.params)
        mean = Ks @ self.alpha_vec
        v = solve_triangular(self.chol, Ks.T, lower=True)
        var = self.params.amplitude - np.sum(v**2, axis=0)
        var = np.maximum(var, 0.0)
        return mean * self.y_std + self.y_mean, var * self.y_std**2

    def posterior(self, x):
        mean, var = self.predict(np.asarray(x, dtype=float)[None, :])
        return float(mean[0]), float(var[0])


def _standardize(y):
    y_mean = float(np.mean(y))
    y_std = float(np.std(y))
    if not y_std > 1e-12:
        y_std = 1.0
    return (y - y_mean) / y_std, y_mean, y_std


def condition_gp(X, y, params: KernelParams, jitter: float = 0.0) -> GpModel:
    """Build the posterior for fixed kernel parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) < 1:
        raise DomainError("cannot condition a GP on empty data")
    if not np.all(np.isfinite(y)):
        raise DomainError("targets must be finite")
    _check_dim(X, params)
    ys, y_mean, y_std = _standardize(y)
    K = kernel_matrix(X, X, params)
    L, extra = cholesky_with_jitter(K + (params.noise_variance + jitter) * np.eye(len(y)))
    return GpModel(params, X, ys, y_mean, y_std, L, _cho_solve(L, ys), jitter + extra)


def fit_gp(X, y, seed: int = 0, n_starts: int = N_STARTS, max_iter: int = MAX_ITER,
           jitter: float = 0.0) -> GpModel:
    """Fit kernel hyperparameters by multi-start type-II maximum likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(y) == 0:
        raise DomainError("cannot fit a GP on empty data")
    if X.shape[0] != len(y):
        raise DomainError("X and y have different numbers of rows")
    if not np.all(np.isfinite(y)):
        raise DomainError("targets must be finite")
    ys, _, _ = _standardize(y)
    rng = np.random.default_rng(seed)
    starts, bounds = _starting_points(X, rng, n_starts)

    def neg_lml(theta):
        try:
            val, grad = log_marginal_likelihood(KernelParams.from_log(theta), X, ys, jitter)
        except NumericalError:
            return 1e25, np.zeros_like(theta)
        return -val, -grad

    theta = _multistart(neg_lml, starts, bounds, max_iter)
    return condition_gp(X, y, KernelParams.from_log(theta), jitter)


def posterior(model: GpModel, x):
    return model.posterior(x)


# --------------------------------------------------------------------------
# classification


def _log_lik(labels, f):
    t = (labels + 1) / 2
    pi = expit(f)
    logp = -np.logaddexp(0.0, -labels * f)
    return logp, t - pi, pi * (1 - pi), -pi * (1 - pi) * (1 - 2 * pi)


@dataclass(frozen=True, eq=False)
class _LaplaceState:
    f: np.ndarray
    a: np.ndarray
    grad: np.ndarray
    W: np.ndarray
    L: np.ndarray
    log_z: float


def _laplace_mode(K, labels, max_iter=100, tol=1e-6) -> _LaplaceState:
    """Damped Newton iteration for the posterior mode (a-parametrization)."""
    n = len(labels)
    a = np.zeros(n)
    f = np.zeros(n)

    def psi(a_, f_):
        return float(-0.5 * a_ @ f_ + np.sum(_log_lik(labels, f_)[0]))

    cur = psi(a, f)
    for _ in range(max_iter):
        logp, grad, W, _ = _log_lik(labels, f)
        if np.linalg.norm(grad - a) <= tol:
            break
        sW = np.sqrt(W)
        L, _ = cholesky_with_jitter(np.eye(n) + sW[:, None] * K * sW[None, :])
        b = W * f + grad
        a_new = b - sW * _cho_solve(L, sW * (K @ b))
        step, d = 1.0, a_new - a
        for _ in range(30):
            a_try = a + step * d
            f_try = K @ a_try
            val = psi(a_try, f_try)
            if val >= cur - 1e-12:
                break
            step *= 0.5
        a, f, cur = a_try, f_try, val
    else:
        logp, grad, W, _ = _log_lik(labels, f)
        if np.linalg.norm(grad - a) > tol:
            raise NumericalError(f"Laplace Newton iteration did not converge in {max_iter} steps")
    logp, grad, W, _ = _log_lik(labels, f)
    sW = np.sqrt(W)
    L, _ = cholesky_with_jitter(np.eye(n) + sW[:, None] * K * sW[None, :])
    log_z = -0.5 * a @ f + float(np.sum(logp)) - float(np.sum(np.log(np.diag(L))))
    return _LaplaceState(f, a, grad, W, L, log_z)


def laplace_evidence(params: KernelParams, X, labels):
    """Laplace-approximate log evidence and its gradient over log amplitude and
    log lengthscales (the noise term is fixed at the jitter floor)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=float)
    n = len(labels)
    Kf, dK_dls = _kernel_and_grads(X, params)
    K = Kf + params.noise_variance * np.eye(n)
    st = _laplace_mode(K, labels)
    _, _, W, d3 = _log_lik(labels, st.f)
    sW = np.sqrt(W)
    R = sW[:, None] * _cho_solve(st.L, np.diag(sW))
    C = solve_triangular(st.L, sW[:, None] * K, lower=True)
    # d log q / d f_hat = +1/2 diag((K^-1 + W)^-1) * third derivative of log p
    s2 = 0.5 * (np.diag(K) - np.sum(C**2, axis=0)) * d3
    grads = []
    for Cj in [Kf, *dK_dls]:
        s1 = 0.5 * st.a @ Cj @ st.a - 0.5 * np.sum(R * Cj)
        b = Cj @ st.grad
        s3 = b - K @ (R @ b)
        grads.append(s1 + s2 @ s3)
    return st.log_z, np.array(grads)


@dataclass(frozen=True, eq=False)
class GpClassifier:
    params: KernelParams
    X: np.ndarray
    labels: np.ndarray
    f_hat: np.ndarray
    W: np.ndarray
    a: np.ndarray
    grad: np.ndarray
    chol_b: np.ndarray  # Cholesky of I + W^1/2 K W^1/2

    @property
    def stationarity_residual(self) -> float:
        return float(np.linalg.norm(self.grad - self.a))

    def latent(self, Xq):
        """Laplace posterior mean and variance of the latent at each row."""
        Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
        Ks = kernel_matrix(Xq, self.X, self.params)
        mean = Ks @ self.grad
        v = solve_triangular(self.chol_b, (np.sqrt(self.W)[:, None] * Ks.T), lower=True)
        var = np.maximum(self.params.amplitude - np.sum(v**2, axis=0), 0.0)
        return mean, var

    def predict_proba(self, Xq) -> np.ndarray:
        mean, var = self.latent(Xq)
        return expit(mean / np.sqrt(1.0 + math.pi * var / 8.0))


def condition_classifier(X, labels, params: KernelParams) -> GpClassifier:
    """Laplace posterior for fixed kernel parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=float)
    K = kernel_matrix(X, X, params) + params.noise_variance * np.eye(len(labels))
    st = _laplace_mode(K, labels)
    return GpClassifier(params, X, labels, st.f, st.W, st.a, st.grad, st.L)


def fit_gp_classifier(X, labels, seed: int = 0, n_starts: int = N_STARTS,
                      max_iter: int = MAX_ITER, jitter: float = 0.0) -> GpClassifier:
    """Fit a Laplace GP classifier on labels in {-1, +1}.

    The latent covariance gets ``JITTER_FLOOR + jitter`` on its diagonal.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels, dtype=float).ravel()
    if len(labels) == 0:
        raise DomainError("cannot fit a classifier on empty data")
    if not np.all(np.isin(labels, (-1.0, 1.0))):
        raise DomainError("labels must be in {-1, +1}")
    rng = np.random.default_rng(seed)
    starts, bounds = _starting_points(X, rng, n_starts, with_noise=False)

    noise = JITTER_FLOOR + jitter

    def neg_evidence(theta):
        params = KernelParams(float(np.exp(theta[0])), tuple(np.exp(theta[1:])), noise)
        val, grad = laplace_evidence(params, X, labels)
        return -val, -grad

    theta = _multistart(neg_evidence, starts, bounds, max_iter)
    params = KernelParams(float(np.exp(theta[0])), tuple(np.exp(theta[1:])), noise)
    return condition_classifier(X, labels, params)


def predict_probability(clf: GpClassifier, x) -> float:
    return float(clf.predict_proba(np.asarray(x, dtype=float)[None, :])[0])


def probit_scaled_sigmoid(mean, std):
    """sigmoid(mean / sqrt(1 + pi std^2 / 8)): approximate Gaussian-averaged sigmoid."""
    return expit(np.asarray(mean) / np.sqrt(1.0 + math.pi * np.asarray(std) ** 2 / 8.0))
