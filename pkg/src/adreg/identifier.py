"""Discrete-time identifiers: recursive least squares with forgetting and a
mini-batch (moving window) scheme, plus polynomial regressors and the
parameter output map.

The saturated continuous extensions of the update ingredients are realized as
norm clamps with configurable radii (default 1e6): generous enough to stay
inactive on sane data while preserving the boundedness contract.
"""

from dataclasses import dataclass, field, replace
from itertools import combinations_with_replacement
from typing import Callable

import numpy as np

from .errors import InvalidConfigError
from .numerics import DEFAULT_CUTOFF_REL, min_nonzero_singular_value, pseudoinverse
from .regulator import saturate

REGRESSOR_MODES = ("full-multiset", "pure-powers")
DEFAULT_CLAMP = 1e6


@dataclass
class IdentifierModel:
    """Parametrized model gamma_hat(theta, eta) with Jacobian in eta."""

    d_theta: int
    eval_gamma_hat: Callable
    eval_dgamma_deta: Callable


class PolyRegressor:
    """Odd-order polynomial regressor sigma(eta).

    mode "full-multiset" enumerates every non-decreasing multi-index of odd
    length <= max_order; "pure-powers" keeps only pure powers eta_i^n. The
    component order is fixed lexicographically (ascending order, then index
    tuple) so parameter indexing is deterministic.
    """

    def __init__(self, d_eta, max_order, mode="full-multiset"):
        if max_order < 1 or max_order % 2 == 0:
            raise InvalidConfigError("max_order must be odd and >= 1")
        if mode not in REGRESSOR_MODES:
            raise InvalidConfigError(f"unknown regressor mode {mode!r}")
        self.d_eta = d_eta
        self.max_order = max_order
        self.mode = mode
        index_list = []
        for n in range(1, max_order + 1, 2):
            if mode == "full-multiset":
                index_list.extend(combinations_with_replacement(range(d_eta), n))
            else:
                index_list.extend((i,) * n for i in range(d_eta))
        self.index_list = index_list
        exps = np.zeros((len(index_list), d_eta), dtype=np.int64)
        for k, idx in enumerate(index_list):
            for i in idx:
                exps[k, i] += 1
        self._exps = exps
        self._cols = np.arange(d_eta)
        # flattened gather indices into the power table for sigma and d sigma
        stride = max_order + 1
        self._flat_pow = self._cols[None, :] * stride + exps
        # transposed copies keep the jacobian cumprods on the long axis
        self._flat_pow_t = np.ascontiguousarray(self._flat_pow.T)
        self._flat_dpow_t = np.ascontiguousarray(
            (self._cols[None, :] * stride + np.maximum(exps - 1, 0)).T
        )
        self._exps_ft = np.ascontiguousarray(exps.T.astype(float))

    @property
    def d_sigma(self):
        return self._exps.shape[0]

    def _power_table(self, eta):
        # p[i, m] = eta_i^m for m = 0..max_order
        p = np.ones((self.d_eta, self.max_order + 1))
        for m in range(1, self.max_order + 1):
            p[:, m] = p[:, m - 1] * eta
        return p

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=float)
        if eta.ndim == 2:
            return self.batch(eta)
        p = self._power_table(eta)
        return np.take(p.ravel(), self._flat_pow).prod(axis=1)

    def batch(self, eta_rows):
        """sigma evaluated rowwise: (n, d_eta) -> (n, d_sigma)."""
        out = np.ones((eta_rows.shape[0], self.d_sigma))
        for i in range(self.d_eta):
            out *= eta_rows[:, i, None] ** self._exps[None, :, i]
        return out

    def jacobian(self, eta):
        """d sigma / d eta, shape (d_sigma, d_eta)."""
        eta = np.asarray(eta, dtype=float)
        flat = self._power_table(eta).ravel()
        t = np.take(flat, self._flat_pow_t)  # (d_eta, d_sigma) factor table
        out = np.take(flat, self._flat_dpow_t)
        out *= self._exps_ft
        if eta.all():
            # prod over j != k of t_j as a total product divided by t_k
            out *= np.prod(t, axis=0)
            out /= t
        else:
            left = np.cumprod(t[:-1], axis=0)
            right = np.cumprod(t[:0:-1], axis=0)[::-1]
            out[1:] *= left
            out[:-1] *= right
        return out.T


def build_poly_regressor(d_eta, N, mode="full-multiset"):
    return PolyRegressor(d_eta, N, mode)


def linear_model(regressor):
    """gamma_hat(theta, eta) = theta . sigma(eta) for a scalar output."""

    def gamma_hat(theta, eta):
        return np.atleast_1d(float(np.dot(theta, regressor(eta))))

    def dgamma_deta(theta, eta):
        return (theta @ regressor.jacobian(eta))[None, :]

    model = IdentifierModel(
        d_theta=regressor.d_sigma,
        eval_gamma_hat=gamma_hat,
        eval_dgamma_deta=dgamma_deta,
    )
    model.regressor = regressor
    return model


def theta_map_ls(xi1, xi2, omega, theta_bound, cutoff_rel=DEFAULT_CUTOFF_REL):
    """theta = (xi1 + Omega)^+ xi2, norm-clamped at theta_bound."""
    theta = pseudoinverse(xi1 + omega, cutoff_rel) @ xi2
    return saturate(theta, theta_bound)


@dataclass
class LsIdentifierState:
    """State of the recursive least-squares identifier with forgetting."""

    xi1: np.ndarray
    xi2: np.ndarray
    theta: np.ndarray
    mu_f: float
    omega: np.ndarray
    rho_sigma: float = DEFAULT_CLAMP
    rho_lambda: float = DEFAULT_CLAMP
    theta_bound: float = DEFAULT_CLAMP
    cutoff_rel: float = DEFAULT_CUTOFF_REL

    def __post_init__(self):
        if not (0.0 < self.mu_f < 1.0):
            raise InvalidConfigError("mu_f must lie in (0, 1)")

    @classmethod
    def zero(cls, d_theta, mu_f, omega, **kw):
        omega = np.asarray(omega, dtype=float)
        if omega.ndim == 0:
            omega = float(omega) * np.eye(d_theta)
        return cls(
            xi1=np.zeros((d_theta, d_theta)),
            xi2=np.zeros(d_theta),
            theta=np.zeros(d_theta),
            mu_f=mu_f,
            omega=omega,
            **kw,
        )


def ls_jump(state, eta_in, u_out, regressor):
    """One identifier update: geometric forgetting plus the clamped rank-one
    accumulation, then the parameter output map."""
    sig = regressor(eta_in)
    big_sigma = saturate(np.outer(sig, sig).ravel(), state.rho_sigma).reshape(
        sig.size, sig.size
    )
    lam = saturate(sig * float(np.atleast_1d(u_out)[0]), state.rho_lambda)
    xi1 = state.mu_f * state.xi1 + big_sigma
    xi1 = 0.5 * (xi1 + xi1.T)  # suppress drift from the PSD cone
    xi2 = state.mu_f * state.xi2 + lam
    theta = theta_map_ls(xi1, xi2, state.omega, state.theta_bound, state.cutoff_rel)
    return replace(state, xi1=xi1, xi2=xi2, theta=theta)


def pe_check(samples, mu_f, omega, epsilon, cutoff_rel=DEFAULT_CUTOFF_REL):
    """Persistence-of-excitation test on the weighted regressor Gram matrix."""
    samples = [np.asarray(s, dtype=float) for s in samples]
    if not samples:
        raise InvalidConfigError("pe_check needs at least one sample")
    j = len(samples)
    gram = np.asarray(omega, dtype=float).copy()
    for i, sig in enumerate(samples):
        gram += mu_f ** (j - i - 1) * np.outer(sig, sig)
    return min_nonzero_singular_value(gram, cutoff_rel) >= epsilon


@dataclass
class MiniBatchState:
    """Shift-register window of the last n_window (eta, u) samples plus the
    batch solver producing theta once the window is full."""

    n_window: int
    solver: Callable  # (window_in, window_out) -> theta
    theta: np.ndarray
    window_in: list = field(default_factory=list)
    window_out: list = field(default_factory=list)
    fill_count: int = 0


def mb_jump(state, eta_in, u_out):
    """Drop the oldest sample, append the newest; re-solve once full."""
    win_in = list(state.window_in)
    win_out = list(state.window_out)
    win_in.append(np.asarray(eta_in, dtype=float).copy())
    win_out.append(np.atleast_1d(np.asarray(u_out, dtype=float)).copy())
    if len(win_in) > state.n_window:
        win_in.pop(0)
        win_out.pop(0)
    fill = state.fill_count + 1
    theta = state.theta
    if fill >= state.n_window:
        theta = state.solver(win_in, win_out)
    return replace(
        state, window_in=win_in, window_out=win_out, fill_count=fill, theta=theta
    )


def batch_solver_ls(window_in, window_out, regressor, omega, weights=None,
                    cutoff_rel=DEFAULT_CUTOFF_REL):
    """Regularized weighted linear least squares on the window.

    Minimizes sum_i w_i |u_i - theta . sigma(eta_i)|^2 + theta' Omega theta
    via the normal equations and the pseudoinverse (minimum-norm minimizer
    when rank-deficient). The first-order optimality residual is checked
    a posteriori.
    """
    n = len(window_in)
    if weights is None:
        weights = np.ones(n)
    omega = np.asarray(omega, dtype=float)
    if omega.ndim == 0:
        omega = float(omega) * np.eye(regressor.d_sigma)
    gram = omega.copy()
    rhs = np.zeros(regressor.d_sigma)
    for wgt, eta, u in zip(weights, window_in, window_out):
        sig = regressor(eta)
        gram += wgt * np.outer(sig, sig)
        rhs += wgt * sig * float(np.atleast_1d(u)[0])
    theta = pseudoinverse(gram, cutoff_rel) @ rhs
    resid = gram @ theta - rhs
    scale = 1.0 + np.linalg.norm(rhs)
    if np.linalg.norm(resid) > 1e-8 * scale:
        # rank-deficient Gram with rhs outside its range cannot occur here
        # (rhs is built from the same regressors), so this is a conditioning
        # failure worth surfacing.
        raise InvalidConfigError(
            f"batch solver optimality residual {np.linalg.norm(resid):.3e} too large"
        )
    return theta


def prediction_error(model, theta, tau_w, ustar_w):
    """u*(w) - gamma_hat(theta, tau(w))."""
    return np.atleast_1d(ustar_w) - np.atleast_1d(model.eval_gamma_hat(theta, tau_w))


class LsIdentifier:
    """Stateful wrapper pairing an LsIdentifierState with its regressor."""

    kind = "ls"

    def __init__(self, state, regressor):
        self.state = state
        self.regressor = regressor

    @property
    def theta(self):
        return self.state.theta

    def jump(self, eta_in, u_out):
        self.state = ls_jump(self.state, eta_in, u_out, self.regressor)

    def clone(self):
        return LsIdentifier(
            replace(self.state, xi1=self.state.xi1.copy(), xi2=self.state.xi2.copy(),
                    theta=self.state.theta.copy()),
            self.regressor,
        )

    def model(self):
        return linear_model(self.regressor)


class MiniBatchIdentifier:
    """Stateful wrapper around the moving-window identifier."""

    kind = "mini-batch"

    def __init__(self, state, regressor, omega=0.0):
        self.state = state
        self.regressor = regressor
        self.omega = omega

    @property
    def theta(self):
        return self.state.theta

    def jump(self, eta_in, u_out):
        self.state = mb_jump(self.state, eta_in, u_out)

    def clone(self):
        return MiniBatchIdentifier(
            replace(self.state, window_in=list(self.state.window_in),
                    window_out=list(self.state.window_out),
                    theta=self.state.theta.copy()),
            self.regressor,
            omega=self.omega,
        )

    def model(self):
        return linear_model(self.regressor)
