"""Empirical functionals of the iterates, their state-evolution limits, and
finite-size diagnostics for the Gaussian-conditioning identities."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .denoisers import Denoiser
from .model import Prior, make_rng, AUX
from .quadrature import DEFAULT, QuadratureConfig, expect_prior_z


class MissingHistory(ValueError):
    pass


@dataclass(frozen=True)
class Observable:
    """psi(x, x0) applied componentwise.

    ``kinks(x0)`` lists the x values where psi(., x0) is not differentiable;
    SE quadrature splits there.
    """

    name: str
    fn: object
    k: int = 2
    lipschitz: float = 1.0
    kinks: object = None

    def __call__(self, x, x0):
        return self.fn(np.asarray(x, dtype=float), np.asarray(x0, dtype=float))


def mse() -> Observable:
    return Observable("mse", lambda x, x0: (x - x0) ** 2, k=2, lipschitz=2.0)


def lp(p: float) -> Observable:
    p = float(p)
    if p <= 0:
        raise ValueError("p must be positive")
    name = "l1" if p == 1 else f"lp:{p:g}"
    return Observable(name, lambda x, x0: np.abs(x - x0) ** p, k=max(2, math.ceil(p)),
                      lipschitz=max(1.0, p), kinks=lambda x0: (x0,))


def parse_observable(spec: str) -> Observable:
    if spec == "mse":
        return mse()
    if spec == "l1":
        return lp(1)
    if spec.startswith("lp:"):
        return lp(float(spec[3:]))
    if spec == "custom":
        raise ValueError("'custom' observables are available programmatically only")
    raise ValueError(f"unknown observable {spec!r}")


def empirical_functional(x, x0, psi: Observable) -> float:
    """(1/N) sum_i psi(x_i, x0_i)."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if x.shape != x0.shape:
        raise ValueError(f"length mismatch: {x.shape} vs {x0.shape}")
    return float(np.mean(psi(x, x0)))


def se_prediction(psi: Observable, tau: float, prior: Prior, eta: Denoiser,
                  quad: QuadratureConfig = DEFAULT) -> float:
    """E psi(eta(X0 + tau Z), X0)."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    splits = np.asarray(eta.split_points(), dtype=float)

    def breaks(x0):
        if tau == 0:
            return ()
        pts = list(splits)
        if psi.kinks is not None:
            for level in psi.kinks(x0):
                pts += list(eta.solve(level))
        return (np.asarray(pts, dtype=float) - x0) / tau

    return expect_prior_z(lambda x0, z: psi(eta(x0 + tau * z), x0), prior, breaks, quad)


# -- pseudo-Lipschitz check ---------------------------------------------------

def pseudo_lipschitz_validate(psi, k: int, L: float, trials: int = 10_000, seed=0,
                              m: int = 2, R: float = 20.0):
    """Sample pairs in [-R, R]^m and test the order-k pseudo-Lipschitz bound.

    ``psi`` takes an (trials, m) array and returns (trials,). Half of the pairs
    are far apart, half are local perturbations. Returns (passed, worst_ratio).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = make_rng(seed, 0, AUX)
    x = rng.uniform(-R, R, (trials, m))
    y = rng.uniform(-R, R, (trials, m))
    half = trials // 2
    y[:half] = np.clip(x[:half] + rng.normal(0, 1e-3, (half, m)), -R, R)
    dist = np.linalg.norm(x - y, axis=1)
    ok = dist > 0
    bound = L * (1 + np.linalg.norm(x, axis=1) ** (k - 1)
                 + np.linalg.norm(y, axis=1) ** (k - 1)) * dist
    diff = np.abs(np.asarray(psi(x), dtype=float) - np.asarray(psi(y), dtype=float))
    ratio = diff[ok] / bound[ok]
    worst = float(ratio.max()) if ratio.size else 0.0
    return worst <= 1.0, worst


# -- Gaussian-conditioning diagnostics ----------------------------------------

def inner(u, v) -> float:
    """<u, v> = (1/m) sum_i u_i v_i."""
    return float(np.sum(u * v) / np.size(u))


@dataclass(frozen=True)
class DiagnosticReport:
    """Gram matrices indexed by (r, s), 0 <= r, s < t.

    hh[r, s] = <h^{r+1}, h^{s+1}>, mm[r, s] = <m^r, m^s>,
    bb[r, s] = <b^r, b^s>, qq[r, s] = <q^r, q^s> / delta.
    """

    hh: np.ndarray
    mm: np.ndarray
    bb: np.ndarray
    qq: np.ndarray

    @property
    def residual_h(self) -> np.ndarray:
        return np.abs(self.hh - self.mm)

    @property
    def residual_b(self) -> np.ndarray:
        return np.abs(self.bb - self.qq)


def _history(gstate):
    hist = getattr(gstate, "history", gstate)
    if not hist or not hist.get("h"):
        raise MissingHistory("run the general recursion with keep=True")
    return hist


def _gram(vectors, scale=1.0):
    t = len(vectors)
    out = np.empty((t, t))
    for r in range(t):
        for s in range(r, t):
            out[r, s] = out[s, r] = inner(vectors[r], vectors[s]) * scale
    return out


def lemma_inner_product_check(gstate, delta: float) -> DiagnosticReport:
    hist = _history(gstate)
    t = len(hist["h"])
    return DiagnosticReport(
        hh=_gram(hist["h"][:t]),
        mm=_gram(hist["m"][:t]),
        bb=_gram(hist["b"][:t]),
        qq=_gram(hist["q"][:t], 1.0 / delta),
    )


def stein_identity_check(gstate, phi, dphi, r: int, s: int, x0) -> float:
    """|<h^{r+1}, phi(h^{s+1}, x0)> - <h^{r+1}, h^{s+1}> <phi'(h^{s+1}, x0)>|."""
    hist = _history(gstate)
    if max(r, s) >= len(hist["h"]):
        raise MissingHistory(f"history holds h^1..h^{len(hist['h'])}")
    hr, hs = hist["h"][r], hist["h"][s]
    lhs = inner(hr, phi(hs, x0))
    d = np.asarray(dphi(hs, x0), dtype=float)
    rhs = inner(hr, hs) * float(np.sum(d) / d.size)
    return abs(lhs - rhs)


# -- decoupling ---------------------------------------------------------------

@dataclass(frozen=True)
class DecouplingResult:
    joint: float
    product: float
    residual: float
    stderr: float
    exact_joint: float

    @property
    def exact_residual(self) -> float:
        return self.exact_joint - self.product


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def distinct_tuple_mean(values: np.ndarray) -> float:
    """Mean of prod_s values[s, J(s)] over all ordered tuples of distinct indices.

    Inclusion-exclusion over set partitions of the factor labels.
    """
    ell, N = values.shape
    total = 0.0
    for part in _set_partitions(list(range(ell))):
        coef = 1.0
        term = 1.0
        for block in part:
            coef *= (-1) ** (len(block) - 1) * math.factorial(len(block) - 1)
            term *= float(np.sum(np.prod(values[block], axis=0)))
        total += coef * term
    return total / math.perm(N, ell)


def _distinct_indices(rng, N, ell, count):
    idx = rng.integers(0, N, (count, ell))
    while True:
        s = np.sort(idx, axis=1)
        bad = np.any(s[:, 1:] == s[:, :-1], axis=1)
        if not bad.any():
            return idx
        idx[bad] = rng.integers(0, N, (int(bad.sum()), ell))


def decoupling_check(x, x0, ell: int, psi_factors, pairs: int = 100_000, seed=0,
                     replicate: int = 0) -> DecouplingResult:
    """Joint mean of prod_s psi_s(x_J(s), x0_J(s)) over random distinct index
    tuples versus the product of the marginal empirical means."""
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    N = x.size
    if ell < 2:
        raise ValueError("ell must be >= 2")
    if ell > N:
        raise ValueError(f"cannot draw {ell} distinct indices from {N}")
    factors = list(psi_factors)
    if len(factors) == 1:
        factors = factors * ell
    if len(factors) != ell:
        raise ValueError("need one factor per tuple position (or a single shared one)")
    values = np.stack([np.asarray(f(x, x0), dtype=float) * np.ones(N) for f in factors])
    product = float(np.prod(values.mean(axis=1)))
    rng = make_rng(seed, replicate, AUX)
    J = _distinct_indices(rng, N, ell, int(pairs))
    samples = np.prod(values[np.arange(ell)[None, :], J], axis=1)
    joint = float(samples.mean())
    stderr = float(samples.std(ddof=1) / np.sqrt(samples.size)) if samples.size > 1 else 0.0
    return DecouplingResult(joint, product, joint - product, stderr, distinct_tuple_mean(values))


clipped_abs = Observable("clipped_abs", lambda x, x0: np.minimum(np.abs(x), 1.0),
                         kinks=lambda x0: (-1.0, 0.0, 1.0))
clipped_error = Observable("clipped_error", lambda x, x0: np.minimum(np.abs(x - x0), 1.0),
                           kinks=lambda x0: (x0 - 1.0, x0, x0 + 1.0))

# bounded Lipschitz factors for the decoupling check
DEFAULT_DECOUPLING_FACTORS = (clipped_abs, clipped_error)
