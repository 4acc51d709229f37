"""Sliding-window GP regression of the wind force, one output per axis.

The three axes share the kernel and inputs, so one Cholesky factor of
K + sigma_n^2 I serves all of them.
"""

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from .dynamics import thrust_axis

JITTER = 1e-8


@dataclass(frozen=True)
class KernelParams:
    sigma_f: float = 1.0
    L: float = 10.0
    sigma_n: float = 1e-2
    linear: bool = False
    sigma_l: float = 0.0

    def __post_init__(self):
        if min(self.sigma_f, self.L, self.sigma_n) <= 0:
            raise ValueError("kernel parameters must be positive")


@dataclass(frozen=True)
class Observation:
    q_in: np.ndarray
    d_hat: np.ndarray


def kernel_matrix(X, Y, params):
    X = np.atleast_2d(X)
    Y = np.atleast_2d(Y)
    d2 = np.sum((X[:, None, :] - Y[None, :, :]) ** 2, axis=-1)
    K = params.sigma_f ** 2 * np.exp(-0.5 * d2 / params.L ** 2)
    if params.linear:
        K = K + params.sigma_l ** 2 * (X @ Y.T)
    return K


def kernel_eval(x, x_prime, params):
    return float(kernel_matrix(np.asarray(x, float), np.asarray(x_prime, float), params)[0, 0])


def residual_observe(state_prev, state_next, u, dt, params):
    """Force the model does not explain, from one step of measured motion."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    ang_mid = 0.5 * (state_prev.omega_euler + state_next.omega_euler)
    accel = (state_next.v - state_prev.v) / dt
    d_hat = params.m * accel - params.m * params.g_vec - thrust_axis(ang_mid) * u.F
    q_in = 0.5 * (state_prev.p + state_next.p)
    return Observation(q_in, d_hat)


class GPWindow:
    def __init__(self, capacity=20):
        self.capacity = int(capacity)
        self.items = deque(maxlen=self.capacity)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    def push(self, obs):
        self.items.append(obs)
        return self


def window_push(window, obs):
    return window.push(obs)


class GPModel:
    def __init__(self, X, Y, params):
        self.params = params
        self.X = np.asarray(X, dtype=float).reshape(-1, 3)
        self.Y = np.asarray(Y, dtype=float).reshape(-1, 3)
        self.factor = None
        self.alpha = np.zeros((0, 3))
        if len(self.X):
            n = len(self.X)
            K = kernel_matrix(self.X, self.X, params) + params.sigma_n ** 2 * np.eye(n)
            try:
                self.factor = cho_factor(K, lower=True)
            except LinAlgError:
                self.factor = cho_factor(K + JITTER * np.eye(n), lower=True)
            self.alpha = cho_solve(self.factor, self.Y)

    @property
    def empty(self):
        return len(self.X) == 0

    def predict(self, q_star):
        q_star = np.asarray(q_star, dtype=float).reshape(3)
        prior = kernel_eval(q_star, q_star, self.params)
        if self.empty:
            return np.zeros(3), np.full(3, np.sqrt(prior))
        k = kernel_matrix(q_star, self.X, self.params)[0]
        mu = k @ self.alpha
        var = prior - k @ cho_solve(self.factor, k)
        return mu, np.full(3, np.sqrt(max(var, 0.0)))


def gp_fit(window, params):
    obs = list(window)
    if not obs:
        return GPModel(np.zeros((0, 3)), np.zeros((0, 3)), params)
    return GPModel([o.q_in for o in obs], [o.d_hat for o in obs], params)


def gp_predict(model, q_star):
    return model.predict(q_star)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: np.ndarray
    upper: np.ndarray

    def contains(self, d, tol=0.0):
        d = np.asarray(d, dtype=float)
        return bool(np.all(d >= self.lower - tol) and np.all(d <= self.upper + tol))


def confidence_interval(mu, sigma, c_delta):
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise ValueError("negative standard deviation")
    return ConfidenceInterval(mu - c_delta * sigma, mu + c_delta * sigma)
