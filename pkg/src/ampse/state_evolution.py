"""Scalar state-evolution recursions and the linear closed form."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .denoisers import Denoiser, GeneralPair, Schedule, optimal_linear_gain
from .model import NoiseSpec, Prior
from .quadrature import DEFAULT, QuadratureConfig, expect_prior_z, expect_z

FIXED_POINT_RTOL = 1e-10
FIXED_POINT_ATOL = 1e-14
MULTIUSER_TAU2_FLOOR = 1e-12


@dataclass(frozen=True)
class SeSpec:
    """Inputs of the compressed-sensing recursion."""

    prior: Prior
    sigma2: float
    delta: float
    schedule: Schedule
    quad: QuadratureConfig = DEFAULT

    def __post_init__(self):
        if self.sigma2 < 0 or not self.delta > 0:
            raise ValueError("need sigma2 >= 0 and delta > 0")

    @property
    def tau2_initial(self) -> float:
        return self.sigma2 + self.prior.second_moment / self.delta


@dataclass(frozen=True)
class SeTrajectory:
    tau2: tuple
    sigma2: tuple = ()
    spec: object = None
    fixed_point: bool = False
    tolerance: float = FIXED_POINT_RTOL
    start: int = 0

    def __len__(self):
        return len(self.tau2)

    def tau2_at(self, t: int) -> float:
        """tau_t^2, held constant past a declared fixed point."""
        i = t - self.start
        if i < 0:
            raise IndexError(t)
        if i >= len(self.tau2):
            if not self.fixed_point:
                raise IndexError(f"trajectory has no entry for t={t}")
            return self.tau2[-1]
        return self.tau2[i]

    def denoiser(self, t: int) -> Denoiser:
        return self.spec.schedule.at(t, self.tau2_at(t))

    def metadata(self) -> dict:
        return {
            "tau2": list(self.tau2),
            "fixed_point": self.fixed_point,
            "stopping_rule": f"|tau2[t+1]-tau2[t]| < max({self.tolerance:g}*tau2[t], "
                             f"{FIXED_POINT_ATOL:g})",
        }


def _kink_breaks(eta: Denoiser, tau: float):
    kinks = np.asarray(eta.split_points(), dtype=float)
    if tau == 0 or kinks.size == 0:
        return None
    return lambda x0: (kinks - x0) / tau


def denoised_error(tau2: float, eta: Denoiser, prior: Prior, quad: QuadratureConfig = DEFAULT):
    """E{[eta(X0 + tau Z) - X0]^2}."""
    tau = float(np.sqrt(tau2))
    return expect_prior_z(lambda x0, z: (eta(x0 + tau * z) - x0) ** 2,
                          prior, _kink_breaks(eta, tau), quad)


def se_step(tau2: float, spec: SeSpec, t: int = 0, denoiser: Denoiser | None = None) -> float:
    """tau_{t+1}^2 = sigma^2 + E{[eta_t(X0 + tau_t Z) - X0]^2} / delta."""
    if tau2 < 0:
        raise ValueError("tau^2 must be nonnegative")
    eta = denoiser if denoiser is not None else spec.schedule.at(t, tau2)
    return spec.sigma2 + denoised_error(tau2, eta, spec.prior, spec.quad) / spec.delta


def _converged(new, old, tol):
    return abs(new - old) < max(tol * old, FIXED_POINT_ATOL)


def iterate_se(step, tau2_start: float, T: int, tol: float = FIXED_POINT_RTOL,
               stationary_after: float = 0, start: int = 0):
    """Apply ``step(tau2, t)`` up to T times; returns (values, fixed_point)."""
    if T < 1:
        raise ValueError("T must be >= 1")
    vals = [float(tau2_start)]
    for t in range(start, start + T):
        nxt = float(step(vals[-1], t))
        done = tol > 0 and t >= stationary_after and _converged(nxt, vals[-1], tol)
        vals.append(nxt)
        if done:
            return vals, True
    return vals, False


def se_trajectory(spec: SeSpec, T: int, tol: float = FIXED_POINT_RTOL) -> SeTrajectory:
    """tau_0^2, ..., tau_T^2, stopping early once a fixed point is reached."""
    vals, fixed = iterate_se(lambda v, t: se_step(v, spec, t), spec.tau2_initial, T, tol,
                             spec.schedule.stationary_after)
    return SeTrajectory(tuple(vals), spec=spec, fixed_point=fixed, tolerance=tol)


# -- general two-sequence recursion ------------------------------------------

def _general_f_second_moment(tau2_prev, t, pair: GeneralPair, prior, quad):
    tau = float(np.sqrt(tau2_prev))

    def breaks(x0):
        k = np.asarray(pair.f_kinks(t, x0), dtype=float)
        return k / tau if tau > 0 and k.size else ()

    return expect_prior_z(lambda x0, z: pair.f(t, tau * z, x0) ** 2, prior, breaks, quad)


def _general_g_second_moment(sigma2_t, t, pair: GeneralPair, noise: NoiseSpec, quad):
    sig = float(np.sqrt(sigma2_t))

    def breaks(w):
        k = np.asarray(pair.g_kinks(t, w), dtype=float)
        return k / sig if sig > 0 and k.size else ()

    return expect_prior_z(lambda w, z: pair.g(t, sig * z, w) ** 2, noise.distribution,
                          breaks, quad)


def general_se_initial(sigma0_2: float, pair: GeneralPair, noise: NoiseSpec,
                       quad: QuadratureConfig = DEFAULT) -> float:
    """tau_0^2 = E g_0(sigma_0 Z, W)^2 given sigma_0^2 = <q0, q0> / delta."""
    return _general_g_second_moment(sigma0_2, 0, pair, noise, quad)


def general_se_step(tau2_prev: float, t: int, pair: GeneralPair, prior: Prior,
                    noise: NoiseSpec, delta: float, quad: QuadratureConfig = DEFAULT):
    """One step for t >= 1: returns (tau_t^2, sigma_t^2).

    sigma_t^2 = E f_t(tau_{t-1} Z, X0)^2 / delta,  tau_t^2 = E g_t(sigma_t Z, W)^2.
    """
    if t < 1:
        raise ValueError("general_se_step starts at t=1; use general_se_initial for t=0")
    sigma2_t = _general_f_second_moment(tau2_prev, t, pair, prior, quad) / delta
    tau2_t = _general_g_second_moment(sigma2_t, t, pair, noise, quad)
    return tau2_t, sigma2_t


def general_se_trajectory(sigma0_2: float, T: int, pair: GeneralPair, prior: Prior,
                          noise: NoiseSpec, delta: float,
                          quad: QuadratureConfig = DEFAULT) -> SeTrajectory:
    sig = [float(sigma0_2)]
    tau = [general_se_initial(sigma0_2, pair, noise, quad)]
    for t in range(1, T + 1):
        a, b = general_se_step(tau[-1], t, pair, prior, noise, delta, quad)
        tau.append(a)
        sig.append(b)
    return SeTrajectory(tuple(tau), tuple(sig), spec=pair)


# -- closed forms and special recursions --------------------------------------

def linear_se_step(tau2: float, v2: float, sigma2: float, delta: float, gain=None) -> float:
    """Gaussian prior, eta(x) = gain * x; optimal gain when ``gain`` is None."""
    lam = optimal_linear_gain(v2, tau2) if gain is None else gain
    return sigma2 + ((1 - lam) ** 2 * v2 + lam * lam * tau2) / delta


def linear_se_fixed_point(v2: float, sigma2: float, delta: float):
    """(tau_inf^2, asymptotic MSE) for optimal linear estimation."""
    if not v2 > 0 or sigma2 < 0 or not delta > 0:
        raise ValueError("need v2 > 0, sigma2 >= 0, delta > 0")
    c = (1 - delta) / delta
    root = np.sqrt((sigma2 + c * v2) ** 2 + 4 * sigma2 * v2)
    tau2 = 0.5 * ((sigma2 + c * v2) + root)
    mse = (tau2 - sigma2) * delta
    mse_direct = 0.5 * delta * ((-sigma2 + c * v2) + root)
    if abs(mse - mse_direct) > 1e-12 * max(1.0, abs(mse_direct)):
        raise ArithmeticError(f"linear MSE forms disagree: {mse!r} vs {mse_direct!r}")
    return float(tau2), float(mse)


def multiuser_integrand(z, tau2):
    """[tanh(1/tau^2 + z/tau) - 1]^2 written as (2 expit(-2u))^2 to avoid cancellation."""
    u = 1.0 / tau2 + z / np.sqrt(tau2)
    return (2.0 * expit(-2.0 * u)) ** 2


def multiuser_se_step(tau2: float, sigma2: float, delta: float,
                      quad: QuadratureConfig = DEFAULT) -> float:
    """Antipodal signalling with the tanh(x/tau_t^2) detector."""
    if tau2 < MULTIUSER_TAU2_FLOOR:
        return float(sigma2)
    tau = np.sqrt(tau2)
    # the integrand switches from 0 to 1 around z = -1/tau over a width ~ tau
    bp = -1.0 / tau + tau * np.array([-12.0, -6.0, -3.0, 0.0, 3.0, 6.0, 12.0])
    return sigma2 + expect_z(lambda z: multiuser_integrand(z, tau2), bp, quad) / delta


def multiuser_trajectory(sigma2: float, delta: float, T: int, tol=FIXED_POINT_RTOL,
                         quad: QuadratureConfig = DEFAULT) -> SeTrajectory:
    tau2_0 = sigma2 + 1.0 / delta
    vals, fixed = iterate_se(lambda v, t: multiuser_se_step(v, sigma2, delta, quad),
                             tau2_0, T, tol)
    return SeTrajectory(tuple(vals), fixed_point=fixed, tolerance=tol)


def symmetric_se_step(tau2: float, f: Denoiser, quad: QuadratureConfig = DEFAULT) -> float:
    """tau_{t+1}^2 = E f(tau_t Z)^2."""
    if tau2 < 0:
        raise ValueError("tau^2 must be nonnegative")
    tau = float(np.sqrt(tau2))
    kinks = np.asarray(f.split_points(), dtype=float)
    bp = kinks / tau if tau > 0 and kinks.size else ()
    return expect_z(lambda z: f(tau * z) ** 2, bp, quad)


def symmetric_trajectory(tau1_2: float, f: Denoiser, T: int, tol=FIXED_POINT_RTOL,
                         quad: QuadratureConfig = DEFAULT) -> SeTrajectory:
    """tau_1^2 = <m^1, m^1>, then T steps; indexed from t=1."""
    vals, fixed = iterate_se(lambda v, t: symmetric_se_step(v, f, quad), tau1_2, T, tol,
                             start=1)
    return SeTrajectory(tuple(vals), fixed_point=fixed, tolerance=tol, start=1)
