"""Normal-form plant and exosystem abstractions plus the Van der Pol scenario.

The tracked reference is the triangular-wave output of a harmonic exosystem,

    p1*(w) = 2 sqrt(w1^2 + w2^2) * arcsin(w1 / sqrt(w1^2 + w2^2)),

which is non-smooth where w2 = 0 (the wave peaks). Lie derivatives there are
evaluated by one-sided limits; the closed-loop field only needs them along
trajectories, which cross a peak on a measure-zero set.

Note: the exosystem conserves the quadratic form V(w) = (rho*w1^2 + w2^2)/2
(the linear combination rho*w1/2 + w2/2 sometimes quoted for this wave
generator is not constant along the flow; the quadratic form is what the
tests assert).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BranchPointError, InvalidConfigError
from .numerics import _check_finite

BRANCH_TOL = 1e-9


@dataclass
class ExoSpec:
    """Autonomous exosystem w' = s(w)."""

    d_w: int
    eval_s: Callable


@dataclass
class ExoState:
    w: np.ndarray
    rho: float  # squared frequency, > 0

    def __post_init__(self):
        if self.rho <= 0.0:
            raise InvalidConfigError("rho must be positive")
        self.w = np.asarray(self.w, dtype=float)


@dataclass
class PlantSpec:
    """Multivariable normal-form plant: integrator chain driven by q + b u.

    Evaluators are pure functions; ``extras`` carries scenario-specific
    attachments such as the ideal feedforward u*(w).
    """

    d_w: int
    d_z: int
    d_y: int
    r: int
    eval_s: Callable  # s(w)
    eval_f: Callable  # f(w, z, x)
    eval_q: Callable  # q(w, z, x)
    eval_b: Callable  # b(w, z, x)
    b_bar: np.ndarray
    mu_b: float
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.b_bar = np.atleast_2d(np.asarray(self.b_bar, dtype=float))
        if abs(np.linalg.det(self.b_bar)) < 1e-14:
            raise InvalidConfigError("b_bar must be nonsingular")
        if not (0.0 < self.mu_b < 1.0):
            raise InvalidConfigError("mu_b must lie in (0, 1)")

    @property
    def d_x(self):
        return self.r * self.d_y

    def check_b_bound(self, test_points):
        """Sampled check of ||(b - b_bar) b_bar^{-1}|| <= 1 - mu_b."""
        b_bar_inv = np.linalg.inv(self.b_bar)
        for w, z, x in test_points:
            b = np.atleast_2d(self.eval_b(w, z, x))
            if np.linalg.norm((b - self.b_bar) @ b_bar_inv, 2) > 1.0 - self.mu_b + 1e-12:
                return False
        return True


def build_chain_matrices(r, d_y):
    """(A, B, C) of a chain of r integrators of dimension d_y."""
    if r < 1 or d_y < 1:
        raise InvalidConfigError("r and d_y must be at least 1")
    dx = r * d_y
    a = np.zeros((dx, dx))
    if r > 1:
        a[: (r - 1) * d_y, d_y:] = np.eye((r - 1) * d_y)
    b = np.zeros((dx, d_y))
    b[(r - 1) * d_y :, :] = np.eye(d_y)
    c = np.zeros((d_y, dx))
    c[:, :d_y] = np.eye(d_y)
    return a, b, c


def triangular_output(w):
    """Triangular-wave reference p1*(w); 0 at the removable singularity w=0."""
    w = _check_finite(w, "w").ravel()
    rad = float(np.hypot(w[0], w[1]))
    if rad == 0.0:
        return 0.0
    return 2.0 * rad * float(np.arcsin(np.clip(w[0] / rad, -1.0, 1.0)))


def _lie_formulas(w1, w2, rho, sgn):
    """First and second Lie derivatives of p1* along s(w) = (w2, -rho*w1).

    ``sgn`` fixes the sign(w2) convention (one-sided at the peaks). Works
    elementwise on arrays. Hand-derived from the p1* formula; the test suite
    cross-checks against central finite differences.
    """
    rad = np.hypot(w1, w2)
    phi = np.arcsin(np.clip(w1 / rad, -1.0, 1.0))
    l1 = 2.0 * (1.0 - rho) * w1 * w2 * phi / rad + 2.0 * sgn * (w2**2 + rho * w1**2) / rad
    l2 = 2.0 * (1.0 - rho) * phi * (
        (w2**2 - rho * w1**2) / rad - (1.0 - rho) * w1**2 * w2**2 / rad**3
    )
    return l1, l2


def lie_derivatives_p1star(w, rho, branch_side=None):
    """(L_s p1*, L_s^2 p1*) at w for the exosystem with squared frequency rho.

    Raises BranchPointError within tolerance of the non-smooth set w2 = 0
    unless ``branch_side`` (+1 or -1) selects a one-sided limit.
    """
    w = _check_finite(w, "w").ravel()
    w1, w2 = float(w[0]), float(w[1])
    rad = np.hypot(w1, w2)
    if rad == 0.0:
        raise BranchPointError("Lie derivatives undefined at w = 0")
    if abs(w2) / rad <= BRANCH_TOL:
        if branch_side is None:
            raise BranchPointError(
                f"w2/|w| = {w2 / rad:.3e} is within the branch-point tolerance"
            )
        sgn = float(np.sign(branch_side))
    else:
        sgn = 1.0 if w2 > 0.0 else -1.0
    l1, l2 = _lie_formulas(w1, w2, rho, sgn)
    return float(l1), float(l2)


def _p1star_rows(w_rows):
    rad = np.hypot(w_rows[:, 0], w_rows[:, 1])
    safe = np.where(rad > 0.0, rad, 1.0)
    out = 2.0 * rad * np.arcsin(np.clip(w_rows[:, 0] / safe, -1.0, 1.0))
    return np.where(rad > 0.0, out, 0.0)


def _lie_rows(w_rows, rho):
    # vectorized one-sided convention sign(0) = +1, for post-processing only
    w1, w2 = w_rows[:, 0], w_rows[:, 1]
    sgn = np.where(w2 >= 0.0, 1.0, -1.0)
    return _lie_formulas(w1, w2, rho, sgn)


def vdp_ustar_rows(w_rows, a, rho):
    """Ideal feedforward u*(w) evaluated rowwise (n, 2) -> (n,)."""
    p1 = _p1star_rows(w_rows)
    l1, l2 = _lie_rows(w_rows, rho)
    return p1 + l2 - a * (1.0 - p1**2) * l1


def build_vdp_scenario(a, rho):
    """PlantSpec for the forced Van der Pol tracking problem in error form.

    Error coordinates x = (p1 - p1*(w), p2 - L_s p1*(w)) give a chain of two
    integrators with b = 1 and

        q(w, x) = -x1 - p1*(w) - L_s^2 p1* + a (1 - (x1 + p1*)^2)(x2 + L_s p1*).

    extras: "ustar" (ideal feedforward evaluator), "ustar_rows" (vectorized),
    "a", "rho". No z-dynamics, so the minimum-phase assumption is vacuous.
    """
    if a <= 0.0 or rho <= 0.0:
        raise InvalidConfigError("require a > 0 and rho > 0")

    def eval_s(w):
        return np.array([w[1], -rho * w[0]])

    def eval_f(w, z, x):
        return np.zeros(0)

    def eval_q(w, z, x):
        p1 = triangular_output(w)
        l1, l2 = lie_derivatives_p1star(w, rho, branch_side=+1)
        return np.array(
            [-x[0] - p1 - l2 + a * (1.0 - (x[0] + p1) ** 2) * (x[1] + l1)]
        )

    def eval_b(w, z, x):
        return np.array([[1.0]])

    def ustar(w):
        p1 = triangular_output(w)
        l1, l2 = lie_derivatives_p1star(w, rho, branch_side=+1)
        return np.array([p1 + l2 - a * (1.0 - p1**2) * l1])

    return PlantSpec(
        d_w=2,
        d_z=0,
        d_y=1,
        r=2,
        eval_s=eval_s,
        eval_f=eval_f,
        eval_q=eval_q,
        eval_b=eval_b,
        b_bar=np.array([[1.0]]),
        mu_b=0.5,
        extras={
            "ustar": ustar,
            "ustar_rows": lambda rows: vdp_ustar_rows(rows, a, rho),
            "fast_q": _make_fast_vdp_q(a, rho),
            "a": a,
            "rho": rho,
        },
    )


def _make_fast_vdp_q(a, rho):
    """Scalar-math q(w, x) for the inner integration loop.

    Same formula as eval_q with the one-sided sign(0) = +1 convention,
    avoiding array allocation; the tests assert agreement with eval_q.
    """
    from math import asin, hypot

    one_minus_rho = 1.0 - rho

    def fast_q(w1, w2, x1, x2):
        rad = hypot(w1, w2)
        if rad == 0.0:
            return -x1 + a * (1.0 - x1 * x1) * x2
        arg = w1 / rad
        phi = asin(1.0 if arg > 1.0 else (-1.0 if arg < -1.0 else arg))
        p1 = 2.0 * rad * phi
        sgn = 1.0 if w2 >= 0.0 else -1.0
        l1 = (2.0 * one_minus_rho * w1 * w2 * phi
              + 2.0 * sgn * (w2 * w2 + rho * w1 * w1)) / rad
        l2 = 2.0 * one_minus_rho * phi * (
            (w2 * w2 - rho * w1 * w1) / rad
            - one_minus_rho * w1 * w1 * w2 * w2 / rad**3
        )
        return -x1 - p1 - l2 + a * (1.0 - (x1 + p1) ** 2) * (x2 + l1)

    return fast_q
