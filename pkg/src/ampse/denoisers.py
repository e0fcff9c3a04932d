"""Scalar nonlinearities applied componentwise, with a.e. derivatives.

Each denoiser object exposes ``__call__`` (value), ``derivative`` (w.r.t. its
argument), the finite set of ``kinks`` where the derivative jumps, and a
declared Lipschitz constant. Threshold/gain schedules live in
:class:`Schedule`, which turns an iteration index and the current SE variance
into a concrete denoiser.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Prior


class InvalidParameter(ValueError):
    pass


def soft_threshold(x, theta):
    """eta(x; theta) = sign(x) * max(|x| - theta, 0)."""
    if not theta > 0:
        raise InvalidParameter(f"threshold must be positive, got {theta}")
    x = np.asarray(x, dtype=float)
    return np.sign(x) * np.maximum(np.abs(x) - theta, 0.0)


def soft_threshold_derivative(x, theta):
    # 0 at the kinks |x| == theta
    return (np.abs(np.asarray(x, dtype=float)) > theta).astype(float)


def linear_denoiser(x, gain):
    return gain * np.asarray(x, dtype=float)


def tanh_denoiser(x, tau2):
    if not tau2 > 0:
        raise InvalidParameter(f"tau^2 must be positive, got {tau2}")
    return np.tanh(np.asarray(x, dtype=float) / tau2)


def optimal_linear_gain(v2, tau2):
    """v^2 / (v^2 + tau^2): the MSE-optimal gain for a gaussian prior."""
    return v2 / (v2 + tau2)


def _posterior_weights(x, tau, prior: Prior):
    vals = np.array([v for v, _ in prior.atoms])
    logp = np.log(np.array([p for _, p in prior.atoms]))
    x = np.asarray(x, dtype=float)[..., None]
    logw = logp - (x - vals) ** 2 / (2.0 * tau * tau)
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    w /= w.sum(axis=-1, keepdims=True)
    return vals, w


def mmse_denoiser(x, tau, prior: Prior):
    """E{X0 | X0 + tau Z = x} for a discrete or gaussian prior."""
    if not tau > 0:
        raise InvalidParameter(f"tau must be positive, got {tau}")
    if prior.kind == "gaussian":
        return optimal_linear_gain(prior.variance, tau * tau) * np.asarray(x, dtype=float)
    if not prior.is_discrete:
        raise InvalidParameter(f"unsupported prior kind {prior.kind!r}")
    vals, w = _posterior_weights(x, tau, prior)
    return w @ vals


def mmse_denoiser_derivative(x, tau, prior: Prior):
    """Posterior variance / tau^2."""
    if prior.kind == "gaussian":
        g = optimal_linear_gain(prior.variance, tau * tau)
        return np.full(np.shape(x), g, dtype=float)
    vals, w = _posterior_weights(x, tau, prior)
    mean = w @ vals
    var = w @ (vals**2) - mean**2
    return np.maximum(var, 0.0) / (tau * tau)


class Denoiser:
    kinks: tuple = ()
    lipschitz: float = np.inf

    def __call__(self, x):
        raise NotImplementedError

    def derivative(self, x):
        raise NotImplementedError

    def split_points(self) -> tuple:
        """Points where quadrature should split: kinks plus steep regions."""
        return tuple(self.kinks)

    def solve(self, target: float) -> tuple:
        """Points x with eta(x) == target at which eta crosses the level.

        Used to place quadrature breakpoints for observables that are kinked
        where the estimate equals the true value. Empty when unknown.
        """
        return ()


@dataclass(frozen=True)
class SoftThreshold(Denoiser):
    theta: float
    lipschitz: float = 1.0

    def __post_init__(self):
        if not self.theta > 0:
            raise InvalidParameter(f"threshold must be positive, got {self.theta}")

    @property
    def kinks(self):
        return (-self.theta, self.theta)

    def __call__(self, x):
        return soft_threshold(x, self.theta)

    def derivative(self, x):
        return soft_threshold_derivative(x, self.theta)

    def solve(self, target):
        if target > 0:
            return (target + self.theta,)
        if target < 0:
            return (target - self.theta,)
        return ()


@dataclass(frozen=True)
class Linear(Denoiser):
    gain: float

    @property
    def lipschitz(self):
        return abs(self.gain)

    def __call__(self, x):
        return linear_denoiser(x, self.gain)

    def derivative(self, x):
        return np.full(np.shape(x), float(self.gain))

    def solve(self, target):
        return (target / self.gain,) if self.gain != 0 else ()


@dataclass(frozen=True)
class Tanh(Denoiser):
    """tanh(x / tau2); with tau2 = 1/beta this is tanh(beta x)."""

    tau2: float

    def __post_init__(self):
        if not self.tau2 > 0:
            raise InvalidParameter(f"tau^2 must be positive, got {self.tau2}")

    @property
    def lipschitz(self):
        return 1.0 / self.tau2

    def __call__(self, x):
        return tanh_denoiser(x, self.tau2)

    def derivative(self, x):
        th = np.tanh(np.asarray(x, dtype=float) / self.tau2)
        return (1.0 - th * th) / self.tau2

    def split_points(self):
        return tuple(self.tau2 * s for s in (-12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0))

    def solve(self, target):
        return (self.tau2 * np.arctanh(target),) if abs(target) < 1 else ()


@dataclass(frozen=True)
class MMSE(Denoiser):
    prior: Prior
    tau: float

    def __post_init__(self):
        if not self.tau > 0:
            raise InvalidParameter(f"tau must be positive, got {self.tau}")
        if self.prior.kind not in ("discrete", "antipodal", "gaussian"):
            raise InvalidParameter(f"unsupported prior kind {self.prior.kind!r}")

    @property
    def lipschitz(self):
        if self.prior.kind == "gaussian":
            return optimal_linear_gain(self.prior.variance, self.tau**2)
        vals = [v for v, _ in self.prior.atoms]
        return (max(vals) - min(vals)) ** 2 / (4.0 * self.tau**2)

    def __call__(self, x):
        return mmse_denoiser(x, self.tau, self.prior)

    def derivative(self, x):
        return mmse_denoiser_derivative(x, self.tau, self.prior)


@dataclass(frozen=True)
class Custom(Denoiser):
    """User-supplied (f, f') pair with declared kinks and Lipschitz constant."""

    f: object
    df: object
    kinks: tuple = ()
    lipschitz: float = np.inf

    def __call__(self, x):
        return np.asarray(self.f(np.asarray(x, dtype=float)), dtype=float)

    def derivative(self, x):
        return np.asarray(self.df(np.asarray(x, dtype=float)), dtype=float)


SCHEDULE_KINDS = ("soft_threshold", "linear", "tanh", "mmse")


@dataclass(frozen=True)
class Schedule:
    """Sequence of denoisers indexed by iteration.

    policy 'fixed' reads the parameter from ``values`` (the last entry is
    reused past the end). policy 'se' derives it from the state-evolution
    variance tau_t^2:

    ======================  =============================
    soft_threshold          theta_t = alpha * tau_t
    linear                  lambda_t = v^2 / (v^2 + tau_t^2)
    tanh                    tanh(x / tau_t^2)
    mmse                    E{X0 | X0 + tau_t Z = x}
    ======================  =============================
    """

    kind: str
    policy: str = "se"
    values: tuple = ()
    alpha: float = 1.0
    prior: Prior | None = None
    factory: object = None

    def __post_init__(self):
        if self.kind == "custom":
            if self.factory is None:
                raise InvalidParameter("custom schedule needs a factory(t, tau2)")
            return
        if self.kind not in SCHEDULE_KINDS:
            raise InvalidParameter(f"unknown denoiser kind {self.kind!r}")
        if self.policy not in ("fixed", "se"):
            raise InvalidParameter(f"unknown schedule policy {self.policy!r}")
        if self.policy == "fixed" and not self.values:
            raise InvalidParameter("fixed schedule needs a non-empty values list")
        if self.kind in ("linear", "mmse") and self.policy == "se" and self.prior is None:
            raise InvalidParameter(f"{self.kind} schedule with policy 'se' needs a prior")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def needs_se(self) -> bool:
        return self.kind == "custom" or self.policy == "se"

    @property
    def stationary_after(self) -> float:
        """First t from which the map tau_t^2 -> eta_t no longer depends on t."""
        if self.kind == "custom":
            return np.inf
        if self.policy == "fixed":
            return len(self.values) - 1
        return 0

    def _fixed(self, t):
        return self.values[min(t, len(self.values) - 1)]

    def at(self, t: int, tau2: float | None = None) -> Denoiser:
        if self.kind == "custom":
            return self.factory(t, tau2)
        if self.policy == "fixed":
            p = self._fixed(t)
        elif tau2 is None:
            raise InvalidParameter("schedule with policy 'se' needs tau_t^2")
        if self.kind == "soft_threshold":
            return SoftThreshold(p if self.policy == "fixed" else self.alpha * np.sqrt(tau2))
        if self.kind == "linear":
            if self.policy == "fixed":
                return Linear(p)
            return Linear(optimal_linear_gain(self.prior.second_moment, tau2))
        if self.kind == "tanh":
            return Tanh(p if self.policy == "fixed" else tau2)
        prior = self.prior
        return MMSE(prior, p if self.policy == "fixed" else np.sqrt(tau2))

    def describe(self) -> dict:
        d = {"kind": self.kind, "policy": self.policy}
        if self.policy == "fixed":
            d["values"] = list(self.values)
        if self.kind == "soft_threshold" and self.policy == "se":
            d["alpha"] = self.alpha
        return d


def constant_schedule(denoiser: Denoiser) -> Schedule:
    return Schedule("custom", factory=lambda t, tau2: denoiser)


def _no_kinks(t, v):
    return ()


@dataclass(frozen=True)
class GeneralPair:
    """Time-indexed pair (f_t, g_t) for the h/q/b/m recursion.

    ``f(t, h, x0)`` and ``g(t, b, w)`` act componentwise; ``df``/``dg`` are
    derivatives in the first argument. ``f_kinks(t, x0)`` lists the values of
    h at which f_t(., x0) is not differentiable (same for ``g_kinks``).
    """

    f: object
    df: object
    g: object
    dg: object
    f_kinks: object = _no_kinks
    g_kinks: object = _no_kinks


def identity_pair() -> GeneralPair:
    return GeneralPair(
        f=lambda t, h, x0: np.asarray(h, dtype=float),
        df=lambda t, h, x0: np.ones(np.shape(h)),
        g=lambda t, b, w: np.asarray(b, dtype=float),
        dg=lambda t, b, w: np.ones(np.shape(b)),
    )


def amp_pair(denoiser_at) -> GeneralPair:
    """Pair under which the general recursion reproduces AMP.

    f_t(s, x0) = eta_{t-1}(x0 - s) - x0 and g_t(s, w) = s - w, where
    ``denoiser_at(t)`` returns eta_t. Start it from q^0 = -x0.
    """

    def f(t, h, x0):
        return denoiser_at(t - 1)(x0 - h) - x0

    def df(t, h, x0):
        return -denoiser_at(t - 1).derivative(x0 - h)

    def f_kinks(t, x0):
        return tuple(x0 - k for k in denoiser_at(t - 1).kinks)

    return GeneralPair(
        f=f,
        df=df,
        g=lambda t, b, w: np.asarray(b, dtype=float) - w,
        dg=lambda t, b, w: np.ones(np.shape(b)),
        f_kinks=f_kinks,
    )
