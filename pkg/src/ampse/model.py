"""Problem generation: Gaussian sensing matrices, signal priors, noise, y = A x0 + w."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# purpose codes for per-replicate RNG streams
MATRIX, SIGNAL, NOISE, AUX = 0, 1, 2, 3

# incremented on every dense matrix draw; lets tests assert that pure
# scalar runs never allocate one
MATRIX_ALLOCATIONS = 0


class InvalidDimension(ValueError):
    pass


class InvalidPrior(ValueError):
    pass


def make_rng(seed, replicate: int = 0, purpose: int = 0) -> np.random.Generator:
    """Independent Philox stream for one (seed, replicate, purpose) tuple.

    Streams are keyed by the tuple rather than drawn sequentially, so results
    do not depend on the order in which replicates are scheduled.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), int(purpose)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class Prior:
    """Scalar distribution of the signal entries.

    kind is 'discrete', 'gaussian' or 'antipodal'. Discrete priors carry
    (value, probability) atoms; gaussian priors are zero-mean with the given
    variance.
    """

    kind: str
    atoms: tuple = ()
    variance: float = 0.0
    k: int = 2

    def __post_init__(self):
        if self.kind == "antipodal":
            object.__setattr__(self, "atoms", ((-1.0, 0.5), (1.0, 0.5)))
        elif self.kind == "discrete":
            if not self.atoms:
                raise InvalidPrior("discrete prior needs at least one atom")
            atoms = tuple((float(v), float(p)) for v, p in self.atoms)
            probs = np.array([p for _, p in atoms])
            if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
                raise InvalidPrior("atom probabilities must be nonnegative and sum to 1")
            object.__setattr__(self, "atoms", atoms)
        elif self.kind == "gaussian":
            if not self.variance > 0:
                raise InvalidPrior("gaussian prior needs a positive variance")
        else:
            raise InvalidPrior(f"unknown prior kind {self.kind!r}")
        if self.k < 2:
            raise InvalidPrior("moment order k must be >= 2")

    @classmethod
    def discrete(cls, atoms, k=2):
        return cls("discrete", atoms=tuple(atoms), k=k)

    @classmethod
    def gaussian(cls, variance, k=2):
        return cls("gaussian", variance=float(variance), k=k)

    @classmethod
    def antipodal(cls, k=2):
        return cls("antipodal", k=k)

    @classmethod
    def three_point(cls, epsilon, amplitude=1.0, k=2):
        """Sparse source: 0 w.p. 1-epsilon, +-amplitude w.p. epsilon/2 each."""
        e = float(epsilon)
        a = float(amplitude)
        return cls.discrete([(-a, e / 2), (0.0, 1.0 - e), (a, e / 2)], k=k)

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian"

    def moment(self, p: float) -> float:
        """E|X0|^p."""
        if self.is_discrete:
            return float(sum(prob * abs(v) ** p for v, prob in self.atoms))
        # E|X|^p = v^p 2^{p/2} Gamma((p+1)/2) / sqrt(pi)
        from scipy.special import gamma

        s = np.sqrt(self.variance)
        return float(s**p * 2 ** (p / 2) * gamma((p + 1) / 2) / np.sqrt(np.pi))

    @property
    def second_moment(self) -> float:
        if self.is_discrete:
            return self.moment(2)
        return float(self.variance)

    def nodes(self, n_nodes: int = 61):
        """(values, weights) representing expectations over X0.

        Exact atoms for discrete priors; Gauss-Hermite nodes otherwise.
        """
        if self.is_discrete:
            vals = np.array([v for v, _ in self.atoms])
            wts = np.array([p for _, p in self.atoms])
            return vals, wts
        x, w = np.polynomial.hermite.hermgauss(n_nodes)
        return np.sqrt(2.0 * self.variance) * x, w / np.sqrt(np.pi)

    def sample(self, N: int, rng) -> np.ndarray:
        if self.is_discrete:
            vals = np.array([v for v, _ in self.atoms])
            probs = np.array([p for _, p in self.atoms])
            idx = rng.choice(len(vals), size=N, p=probs)
            return vals[idx]
        return rng.standard_normal(N) * np.sqrt(self.variance)


@dataclass(frozen=True)
class NoiseSpec:
    """Zero-mean measurement noise, gaussian(sigma2) or a discrete law."""

    kind: str = "gaussian"
    sigma2: float = 0.0
    atoms: tuple = ()

    def __post_init__(self):
        if self.kind == "gaussian":
            if self.sigma2 < 0:
                raise InvalidPrior("noise variance must be >= 0")
        elif self.kind == "discrete":
            d = Prior.discrete(self.atoms)
            object.__setattr__(self, "atoms", d.atoms)
            object.__setattr__(self, "sigma2", d.second_moment)
        else:
            raise InvalidPrior(f"unknown noise kind {self.kind!r}")

    @classmethod
    def gaussian(cls, sigma2):
        return cls("gaussian", sigma2=float(sigma2))

    @property
    def distribution(self) -> Prior:
        if self.kind == "discrete":
            return Prior.discrete(self.atoms)
        if self.sigma2 == 0:
            return Prior.discrete([(0.0, 1.0)])
        return Prior.gaussian(self.sigma2)

    def sample(self, n: int, rng) -> np.ndarray:
        if self.kind == "gaussian" and self.sigma2 == 0:
            return np.zeros(n)
        return self.distribution.sample(n, rng)


@dataclass(frozen=True)
class SensingMatrix:
    entries: np.ndarray

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def N(self) -> int:
        return self.entries.shape[1]


@dataclass(frozen=True)
class ProblemInstance:
    A: SensingMatrix
    x0: np.ndarray
    w: np.ndarray
    y: np.ndarray
    delta: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", self.A.n / self.A.N)

    @property
    def n(self) -> int:
        return self.A.n

    @property
    def N(self) -> int:
        return self.A.N


@dataclass(frozen=True)
class EmpiricalDistribution:
    """Point mass 1/N at each stored sample."""

    samples: np.ndarray
    k: int = 2

    def moment(self, p: float) -> float:
        return float(np.mean(np.abs(self.samples) ** p))

    @property
    def moments(self) -> dict:
        return {p: self.moment(p) for p in range(1, 2 * self.k - 1)}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def sample_sensing_matrix(n: int, N: int, seed, replicate: int = 0) -> SensingMatrix:
    """n x N matrix with i.i.d. N(0, 1/n) entries, row-major."""
    global MATRIX_ALLOCATIONS
    if n < 1 or N < 1:
        raise InvalidDimension(f"matrix dimensions must be positive, got {n}x{N}")
    rng = make_rng(seed, replicate, MATRIX)
    MATRIX_ALLOCATIONS += 1
    A = rng.standard_normal((n, N)) / np.sqrt(n)
    return SensingMatrix(_frozen(A))


def sample_symmetric_matrix(N: int, seed, replicate: int = 0) -> np.ndarray:
    """G = A + A^T with A_ij ~ N(0, 1/(2N)); exactly symmetric."""
    global MATRIX_ALLOCATIONS
    if N < 1:
        raise InvalidDimension(f"matrix dimension must be positive, got {N}")
    rng = make_rng(seed, replicate, MATRIX)
    MATRIX_ALLOCATIONS += 1
    A = rng.standard_normal((N, N)) / np.sqrt(2.0 * N)
    return _frozen(A + A.T)


def sample_signal(prior: Prior, N: int, seed, replicate: int = 0) -> np.ndarray:
    if N < 1:
        raise InvalidDimension("signal length must be positive")
    return _frozen(prior.sample(N, make_rng(seed, replicate, SIGNAL)))


def build_instance(A: SensingMatrix, x0, noise: NoiseSpec, seed, replicate: int = 0,
                   w=None) -> ProblemInstance:
    """Draw w from `noise` (unless given) and form y = A x0 + w."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (A.N,):
        raise InvalidDimension(f"x0 has shape {x0.shape}, expected ({A.N},)")
    if w is None:
        w = noise.sample(A.n, make_rng(seed, replicate, NOISE))
    w = np.asarray(w, dtype=float)
    if w.shape != (A.n,):
        raise InvalidDimension(f"w has shape {w.shape}, expected ({A.n},)")
    y = A.entries @ x0 + w
    return ProblemInstance(A, _frozen(x0), _frozen(w), _frozen(y))


def random_instance(n: int, N: int, prior: Prior, noise: NoiseSpec, seed,
                    replicate: int = 0) -> ProblemInstance:
    A = sample_sensing_matrix(n, N, seed, replicate)
    x0 = sample_signal(prior, N, seed, replicate)
    return build_instance(A, x0, noise, seed, replicate)
