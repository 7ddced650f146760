"""Continuous-time Markov chains as the commuting special case.

Rates follow the column convention ``R[z, z'] = r(z | z')`` (the rate of
jumping from ``z'`` to ``z``), so probability vectors evolve as
``dP/dt = R P`` and every column of ``R`` sums to zero.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.sparse.csgraph import connected_components

from .geometry import TangentFamily
from .lindblad import GkslModel


@dataclass(frozen=True)
class MarkovChain:
    """Irreducible chain built from its off-diagonal rates."""

    rates: np.ndarray
    stationary: np.ndarray = field(init=False)

    def __post_init__(self):
        R = np.array(self.rates, dtype=float)
        if R.ndim != 2 or R.shape[0] != R.shape[1]:
            raise ValueError("rate matrix must be square")
        np.fill_diagonal(R, 0.0)
        if np.any(R < 0):
            raise ValueError("off-diagonal rates must be non-negative")
        n = R.shape[0]
        if n > 1:
            ncomp, _ = connected_components(R > 0, directed=True, connection="strong")
            if ncomp != 1:
                raise ValueError("chain is not irreducible; the stationary distribution is not unique")
        R -= np.diag(R.sum(axis=0))
        object.__setattr__(self, "rates", R)
        if n == 1:
            S = np.ones(1)
        else:
            ker = scipy.linalg.null_space(R)
            if ker.shape[1] != 1:
                raise ValueError("rate matrix kernel is not one-dimensional")
            S = np.abs(ker[:, 0])
            S = S / S.sum()
        if np.any(S <= 0):
            raise ValueError("stationary distribution has zero entries")
        object.__setattr__(self, "stationary", S)

    @property
    def n(self):
        return self.rates.shape[0]

    def transition(self, t):
        return scipy.linalg.expm(self.rates * t)


@dataclass
class ClassicalFamily:
    """Tangents ``d_j P(z)`` at the stationary point, plus an optional exact ``P(theta)``."""

    tangents: np.ndarray
    distribution: object = None

    def __post_init__(self):
        self.tangents = np.atleast_2d(np.asarray(self.tangents, dtype=float))
        if np.max(np.abs(self.tangents.sum(axis=1)), initial=0.0) > 1e-10:
            raise ValueError("tangent vectors must sum to zero")

    @property
    def p(self):
        return self.tangents.shape[0]


def exponential_tilt_family(S, G):
    """``P(z|theta) ~ S(z) exp(theta . G(z))``; ``G`` has one row per parameter."""
    S = np.asarray(S, dtype=float)
    G = np.atleast_2d(np.asarray(G, dtype=float))
    tangents = S * (G - G @ S[:, None])

    def dist(theta):
        w = S * np.exp(np.asarray(theta) @ G)
        return w / w.sum()

    return ClassicalFamily(tangents, dist)


def classical_prediction(chain):
    """``(L^* a)(z) = sum_z' r(z'|z) a(z')``."""
    return chain.rates.T.copy()


def classical_retrodiction(chain):
    """``(L_* a)(z) = sum_z' r(z|z') S(z') a(z') / S(z)``."""
    S = chain.stationary
    return chain.rates * S[None, :] / S[:, None]


def classical_fisher(chain, fam, grid):
    """Scores ``s_j(z, t)``, Fisher information ``J(t)``, its loss rate ``K(t)`` and ``O``."""
    S = chain.stationary
    t = np.asarray(grid, dtype=float)
    Lr = classical_retrodiction(chain)
    s0 = fam.tangents / S[None, :]
    scores, J, K = [], [], []
    for ti in t:
        s = (scipy.linalg.expm(Lr * ti) @ s0.T).T
        sd = (Lr @ s.T).T
        scores.append(s)
        J.append((s * S) @ s.T)
        K.append(-((sd * S) @ s.T + (s * S) @ sd.T))
    O = -(s0 * S) @ (Lr @ s0.T)
    return {"times": t, "scores": np.array(scores), "J": np.array(J), "K": np.array(K), "O": O}


def classical_relative_entropy(P, S):
    P, S = np.asarray(P, dtype=float), np.asarray(S, dtype=float)
    return float(np.sum(P * np.log(P / S)))


def classical_rate(chain, P):
    """``R = -d/dt D(P(t) || S) = -sum_z (R P)(z) ln(P(z) / S(z))``."""
    P = np.asarray(P, dtype=float)
    return float(-np.sum((chain.rates @ P) * np.log(P / chain.stationary)))


def classical_fluxes(chain, fam, theta, grid):
    """Classical variables ``x_j = E_P[s_j(t)]``, ``y_j = E_P[s_j(0)]`` and ``R(t)`` along ``P(t)``."""
    if fam.distribution is None:
        raise ValueError("family has no exact distribution")
    t = np.asarray(grid, dtype=float)
    fish = classical_fisher(chain, fam, t)
    P0 = fam.distribution(theta)
    Ps = [chain.transition(ti) @ P0 for ti in t]
    x = np.array([s @ P for s, P in zip(fish["scores"], Ps)])
    y = np.array([fish["scores"][0] @ P for P in Ps])
    R = np.array([classical_rate(chain, P) for P in Ps])
    return {"times": t, "P": np.array(Ps), "x": x, "y": y, "R": R}


def classical_db_check(chain, perm, tol=1e-10):
    """Residuals of ``r(z'|z) S(z) = r(Tz|Tz') S(Tz')`` and ``S(z) = S(Tz)``.

    ``perm[z]`` is the image ``Tz``.
    """
    perm = np.asarray(perm, dtype=int)
    n = chain.n
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError("T must be a permutation of the states")
    R, S = chain.rates, chain.stationary
    flux = R * S[None, :]  # flux[z', z] = r(z'|z) S(z)
    flux_T = flux[np.ix_(perm, perm)].T  # r(Tz|Tz') S(Tz') at [z', z]
    off = ~np.eye(n, dtype=bool)
    rate_res = float(np.max(np.abs(flux - flux_T)[off], initial=0.0))
    st_res = float(np.max(np.abs(S - S[perm])))
    return {"rates": rate_res, "stationary": st_res, "pass": rate_res < tol and st_res < tol}


def reversal_unitary(perm):
    """``w`` with ``w|z> = |T^{-1} z>``, so conjugation by ``w`` relabels the states."""
    perm = np.asarray(perm, dtype=int)
    n = perm.size
    w = np.zeros((n, n))
    inv = np.argsort(perm)
    w[inv, np.arange(n)] = 1.0
    return w


def embed_diagonal(chain, fam):
    """GKSL model with jumps ``sqrt(r(z|z')) |z><z'|`` and the diagonal tangent family."""
    n = chain.n
    jumps = []
    for z in range(n):
        for zp in range(n):
            if z != zp and chain.rates[z, zp] > 0:
                A = np.zeros((n, n), dtype=complex)
                A[z, zp] = 1.0
                jumps.append((A, chain.rates[z, zp]))
    model = GkslModel(np.zeros((n, n), dtype=complex), tuple(jumps))
    sigma = np.diag(chain.stationary).astype(complex)
    tangents = [np.diag(row).astype(complex) for row in fam.tangents]
    tau = None
    if fam.distribution is not None:
        dist = fam.distribution
        tau = lambda theta: np.diag(dist(theta)).astype(complex)  # noqa: E731
    return model, TangentFamily(sigma, tangents, tau=tau, kind="classical")


def random_reversible_chain(n, rng):
    """Reversible chain from symmetric conductances: ``r(z|z') = c(z, z') / S(z')``."""
    S = rng.uniform(0.5, 1.5, size=n)
    S = S / S.sum()
    C = rng.uniform(0.2, 1.0, size=(n, n))
    C = 0.5 * (C + C.T)
    return MarkovChain(C / S[None, :])


def birth_death_chain(up, down):
    """Nearest-neighbour chain with ``up[k]`` for k -> k+1 and ``down[k]`` for k+1 -> k."""
    n = len(up) + 1
    R = np.zeros((n, n))
    for k in range(n - 1):
        R[k + 1, k] = up[k]
        R[k, k + 1] = down[k]
    return MarkovChain(R)
