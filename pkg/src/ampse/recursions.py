"""Matrix iterations: AMP, IST, the general h/q/b/m recursion, the symmetric
TAP iteration and full edge-message passing."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .denoisers import Denoiser, GeneralPair, amp_pair
from .model import InvalidDimension, ProblemInstance

MP_EDGE_CAP = 4_000_000


class DivergedIteration(ArithmeticError):
    def __init__(self, t, what="iterate"):
        super().__init__(f"non-finite {what} at iteration {t}")
        self.t = t


class ResourceLimit(RuntimeError):
    pass


def _finite(t, *arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergedIteration(t)


def mean(v) -> float:
    """<v> = (1/m) sum v_i with numpy's pairwise summation."""
    return float(np.sum(v) / np.size(v))


# -- AMP / IST ----------------------------------------------------------------

@dataclass(frozen=True)
class AmpState:
    """x = x^t, z = z^{t-1}, onsager_avg = <eta'_{t-1}(A*z^{t-1} + x^{t-1})>.

    The initial state (t=0) has x = 0, z = 0 and onsager_avg = 0, so the first
    step produces z^0 = y.
    """

    x: np.ndarray
    z: np.ndarray
    onsager_avg: float = 0.0
    t: int = 0

    @classmethod
    def initial(cls, inst: ProblemInstance) -> "AmpState":
        return cls(np.zeros(inst.N), np.zeros(inst.n))


def _check_dims(state: AmpState, inst: ProblemInstance):
    if state.x.shape != (inst.N,) or state.z.shape != (inst.n,):
        raise InvalidDimension("state does not match the problem dimensions")


def _advance(state, inst, eta, z):
    A = inst.A.entries
    _finite(state.t, z)
    pseudo = A.T @ z + state.x
    x_new = eta(pseudo)
    _finite(state.t, x_new)
    return AmpState(x_new, z, mean(eta.derivative(pseudo)), state.t + 1)


def amp_step(state: AmpState, inst: ProblemInstance, eta: Denoiser) -> AmpState:
    """z^t = y - A x^t + z^{t-1} <eta'_{t-1}> / delta;  x^{t+1} = eta_t(A* z^t + x^t)."""
    _check_dims(state, inst)
    z = inst.y - inst.A.entries @ state.x + (state.onsager_avg / inst.delta) * state.z
    return _advance(state, inst, eta, z)


def ist_step(state: AmpState, inst: ProblemInstance, eta: Denoiser) -> AmpState:
    """Same iteration without the Onsager correction: z^t = y - A x^t."""
    _check_dims(state, inst)
    z = inst.y - inst.A.entries @ state.x
    return _advance(state, inst, eta, z)


def run_amp(inst: ProblemInstance, denoiser_at, T: int, step=amp_step):
    """Iterates x^1..x^T; returns the list of states after each step."""
    state = AmpState.initial(inst)
    states = []
    for t in range(T):
        state = step(state, inst, denoiser_at(t))
        states.append(state)
    return states


# -- general recursion --------------------------------------------------------

@dataclass(frozen=True)
class GeneralState:
    """q = q^t, h = h^t, m_prev = m^{t-1}; lam = lambda_t.

    After a step the state also carries b = b^t, m = m^t and xi = xi_t from the
    half-step that produced it. Histories are kept only when ``keep`` is set.
    """

    q: np.ndarray
    h: np.ndarray
    m_prev: np.ndarray
    lam: float = 0.0
    t: int = 0
    b: np.ndarray | None = None
    m: np.ndarray | None = None
    xi: float | None = None
    keep: bool = False
    history: dict = field(default_factory=dict)

    @classmethod
    def initial(cls, q0, n: int, keep: bool = False) -> "GeneralState":
        q0 = np.asarray(q0, dtype=float)
        hist = {"h": [], "q": [q0], "b": [], "m": [], "xi": [], "lam": [0.0]} if keep else {}
        return cls(q0, np.full(q0.shape, np.nan), np.zeros(n), 0.0, 0, keep=keep, history=hist)


def general_step(state: GeneralState, A, x0, w, pair: GeneralPair) -> GeneralState:
    """b^t, m^t, then h^{t+1}, q^{t+1}.

    b^t = A q^t - lambda_t m^{t-1},  m^t = g_t(b^t, w),  xi_t = <g_t'(b^t, w)>,
    h^{t+1} = A* m^t - xi_t q^t,     q^{t+1} = f_{t+1}(h^{t+1}, x0),
    lambda_{t+1} = <f_{t+1}'(h^{t+1}, x0)> / delta.
    """
    A = getattr(A, "entries", A)
    n, N = A.shape
    if state.q.shape != (N,) or state.m_prev.shape != (n,):
        raise InvalidDimension("state does not match the matrix dimensions")
    delta = n / N
    t = state.t
    b = A @ state.q - state.lam * state.m_prev
    m = pair.g(t, b, w)
    xi = mean(pair.dg(t, b, w))
    h = A.T @ m - xi * state.q
    q = pair.f(t + 1, h, x0)
    lam = mean(pair.df(t + 1, h, x0)) / delta
    _finite(t, b, m, h, q)
    hist = state.history
    if state.keep:
        hist = {k: list(v) for k, v in hist.items()}
        hist["b"].append(b)
        hist["m"].append(m)
        hist["xi"].append(xi)
        hist["h"].append(h)
        hist["q"].append(q)
        hist["lam"].append(lam)
    return GeneralState(q, h, m, lam, t + 1, b, m, xi, state.keep, hist)


def run_general(A, x0, w, pair: GeneralPair, q0, T: int, keep: bool = False):
    n = getattr(A, "entries", A).shape[0]
    state = GeneralState.initial(q0, n, keep)
    states = []
    for _ in range(T):
        state = general_step(state, A, x0, w, pair)
        states.append(state)
    return states


def mapping_check(inst: ProblemInstance, denoiser_at, T: int) -> float:
    """Max deviation between AMP and the general recursion under the AMP mapping.

    Compares x^t with q^t + x0 and -z^t with m^t for t <= T.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    amp = run_amp(inst, denoiser_at, T)
    gen = run_general(inst.A, inst.x0, inst.w, amp_pair(denoiser_at), -inst.x0, T)
    dev = 0.0
    for sa, sg in zip(amp, gen):
        # sa holds x^{t+1}, z^t; sg holds q^{t+1}, m^t
        dev = max(dev, float(np.max(np.abs(sa.x - (sg.q + inst.x0)))))
        dev = max(dev, float(np.max(np.abs(-sa.z - sg.m))))
    return dev


# -- full message passing -----------------------------------------------------

@dataclass(frozen=True)
class MessageState:
    """z_msgs[a, i] = z_{a->i}^{t-1}, x_msgs[i, a] = x_{i->a}^t."""

    z_msgs: np.ndarray
    x_msgs: np.ndarray
    t: int = 0
    marginal: np.ndarray | None = None

    @classmethod
    def initial(cls, inst: ProblemInstance, cap: int = MP_EDGE_CAP) -> "MessageState":
        check_edge_cap(inst.n, inst.N, cap)
        return cls(np.zeros((inst.n, inst.N)), np.zeros((inst.N, inst.n)))


def check_edge_cap(n, N, cap=MP_EDGE_CAP):
    if n * N > cap:
        raise ResourceLimit(f"message passing needs n*N = {n * N} edges, above the cap of {cap}")


def mp_step(state: MessageState, inst: ProblemInstance, eta: Denoiser) -> MessageState:
    """z_{a->i} = y_a - sum_{j != i} A_aj x_{j->a};  x_{i->a} = eta(sum_{b != a} A_bi z_{b->i}).

    ``marginal`` holds eta_t(sum_b A_bi z_{b->i}), the node estimate x_i^{t+1}.
    """
    A = inst.A.entries
    X = state.x_msgs
    full = np.einsum("aj,ja->a", A, X)
    Z = inst.y[:, None] - (full[:, None] - A * X.T)
    AZ = A * Z
    total = AZ.sum(axis=0)
    X_new = eta(total[:, None] - AZ.T)
    marginal = eta(total)
    _finite(state.t, Z, X_new)
    return MessageState(Z, X_new, state.t + 1, marginal)


def mp_vs_amp_deviation(inst: ProblemInstance, denoiser_at, T: int,
                        cap: int = MP_EDGE_CAP) -> list:
    """max_i |x_i^t(AMP) - node marginal of message passing| for t = 1..T."""
    mp = MessageState.initial(inst, cap)
    amp = AmpState.initial(inst)
    out = []
    for t in range(T):
        eta = denoiser_at(t)
        mp = mp_step(mp, inst, eta)
        amp = amp_step(amp, inst, eta)
        out.append(float(np.max(np.abs(amp.x - mp.marginal))))
    return out


# -- symmetric case -----------------------------------------------------------

@dataclass(frozen=True)
class SymmetricState:
    """h = h^t, m = m^t, m_prev = m^{t-1}, lam = <f'(h^t)>."""

    G: np.ndarray
    h: np.ndarray | None
    m: np.ndarray
    m_prev: np.ndarray
    lam: float = 0.0
    t: int = 1

    @classmethod
    def initial(cls, G, m1) -> "SymmetricState":
        m1 = np.asarray(m1, dtype=float)
        if G.shape != (m1.size, m1.size):
            raise InvalidDimension("G must be N x N with N = len(m1)")
        return cls(G, None, m1, np.zeros_like(m1), 0.0, 1)


def default_m1(N: int, tau1_2: float) -> np.ndarray:
    """All-ones vector scaled so that <m1, m1> = tau1_2."""
    return np.full(N, np.sqrt(tau1_2))


def symmetric_step(state: SymmetricState, f: Denoiser) -> SymmetricState:
    """h^{t+1} = G m^t - lambda_t m^{t-1};  m^{t+1} = f(h^{t+1})."""
    if state.t == 1:
        # m^0 = 0 kills the memory term
        h = state.G @ state.m
    else:
        h = state.G @ state.m - state.lam * state.m_prev
    m = f(h)
    _finite(state.t, h, m)
    return replace(state, h=h, m=m, m_prev=state.m, lam=mean(f.derivative(h)), t=state.t + 1)
