"""Scores, Fisher information, information loss rate and Onsager tensors.

Everything here works on a fixed generator ``L`` (a superoperator), a steady
state ``sigma`` wrapped in a :class:`~qonsager.petz.PetzDensityMap`, and a
:class:`TangentFamily` describing how the initial state leaves ``sigma``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operators import (
    OperatorError,
    apply_hermitian_fn,
    check_density,
    check_hermitian,
    commutator,
    dag,
    logm_pd,
    sqrtm_psd,
    superop_exp,
    unvec,
    vec,
)
from .petz import KMB, PetzDensityMap, get_phi


@dataclass
class TangentFamily:
    """Steady state, tangents ``d_j tau`` and, when known, the exact ``tau(theta)``."""

    sigma: np.ndarray
    tangents: list
    labels: list = None
    tau: object = field(default=None, repr=False)
    kind: str = "custom"

    def __post_init__(self):
        self.sigma = check_density(self.sigma, "sigma", tol=1e-8)
        tangents = []
        for j, T in enumerate(self.tangents):
            T = check_hermitian(T, f"tangent {j}", tol=1e-9)
            tr = abs(np.trace(T))
            if tr > 1e-9:
                raise OperatorError(f"tangent {j} is not traceless (|trace| = {tr:.3e})")
            tangents.append(T)
        self.tangents = tangents
        if self.labels is None:
            self.labels = [f"theta{j + 1}" for j in range(len(tangents))]
        if len(self.labels) != len(tangents):
            raise ValueError("one label per tangent is required")

    @property
    def p(self):
        return len(self.tangents)

    def initial_state(self, theta):
        """``tau(theta)``; first order in ``theta`` when no exact ``tau`` is known."""
        theta = np.asarray(theta, dtype=float)
        if self.tau is not None:
            return self.tau(theta)
        return self.sigma + sum(th * T for th, T in zip(theta, self.tangents))


@dataclass(frozen=True)
class PerturbationSpec:
    epsilon: float
    v: np.ndarray

    @property
    def theta(self):
        return self.epsilon * np.asarray(self.v, dtype=float)

    @property
    def force(self):
        return -self.theta


@dataclass
class GeometryProfile:
    times: np.ndarray
    J: np.ndarray
    K: np.ndarray
    scores: list
    dJdt_fd: np.ndarray = None
    fd_residual: float = None
    phi: str = ""

    def monotonicity(self, vs):
        """Largest ``v^T dJ/dt v`` over the given vectors and all grid points."""
        vs = np.atleast_2d(vs)
        return float(np.max(-np.einsum("ai,tij,aj->ta", vs, self.K, vs)))


@dataclass
class OnsagerReport:
    O: np.ndarray
    K0: np.ndarray
    symmetry_residual: float
    k0_residual: float
    psd_min_eig: float
    phi: str = ""

    def as_dict(self):
        return {
            "O": self.O.tolist(),
            "K0": self.K0.tolist(),
            "symmetry_residual": self.symmetry_residual,
            "k0_residual": self.k0_residual,
            "psd_min_eig": self.psd_min_eig,
            "phi": self.phi,
        }


# --- parametrized families -------------------------------------------------

def _gibbs_state(log_unnorm):
    X = apply_hermitian_fn(log_unnorm, lambda x: np.exp(x - x.max()))
    return X / np.trace(X).real


def gibbs_family(G, lam=None, sigma=None):
    """Perturbed Gibbs family ``exp((lambda + theta) . G) / Z``.

    Either ``lam`` fixes the centre, or ``sigma`` is given directly (its
    logarithm then plays the role of ``lambda . G`` up to a constant).
    Tangents come from Duhamel's formula, ``E_KMB(G_j - tr(G_j sigma))``.
    """
    G = [check_hermitian(g, f"G[{j}]") for j, g in enumerate(G)]
    if sigma is None:
        lam = np.zeros(len(G)) if lam is None else np.asarray(lam, dtype=float)
        base = sum(l * g for l, g in zip(lam, G)) if len(G) else 0.0
        base = base + np.zeros_like(G[0])
        sigma = _gibbs_state(base)
    else:
        sigma = check_density(sigma, "sigma", tol=1e-8)
        base = logm_pd(sigma)
    E = PetzDensityMap(sigma, KMB)
    d = sigma.shape[0]
    tangents = []
    for g in G:
        c = np.trace(g @ sigma).real
        T = E.apply(g - c * np.eye(d))
        tangents.append(0.5 * (T + dag(T)))

    def tau(theta):
        return _gibbs_state(base + sum(th * g for th, g in zip(theta, G)))

    return TangentFamily(sigma, tangents, tau=tau, kind="gibbs")


def kick_family(G, sigma):
    """Unitary kick ``exp(-i theta . G)`` applied to ``sigma``; tangents ``-i[G_j, sigma]``."""
    G = [check_hermitian(g, f"G[{j}]") for j, g in enumerate(G)]
    sigma = check_density(sigma, "sigma", tol=1e-8)
    tangents = []
    for g in G:
        T = -1j * commutator(g, sigma)
        tangents.append(0.5 * (T + dag(T)))

    def tau(theta):
        gen = sum(th * g for th, g in zip(theta, G))
        U = scipy.linalg.expm(-1j * gen)
        rho = U @ sigma @ dag(U)
        return 0.5 * (rho + dag(rho))

    return TangentFamily(sigma, tangents, tau=tau, kind="kick")


def finite_diff_family(tau, p, h=1e-5):
    """Tangents of an arbitrary ``tau`` by central differences."""
    sigma = np.asarray(tau(np.zeros(p)), dtype=complex)
    tangents = []
    for j in range(p):
        e = np.zeros(p)
        e[j] = h
        T = (np.asarray(tau(e)) - np.asarray(tau(-e))) / (2 * h)
        T = 0.5 * (T + dag(T))
        T = T - np.trace(T) * np.eye(T.shape[0]) / T.shape[0]
        tangents.append(T)
    return TangentFamily(sigma, tangents, tau=tau, kind="finite-diff")


# --- scores and retrodiction ----------------------------------------------

def score(E, tangent):
    X = E.apply_inverse(tangent)
    X = 0.5 * (X + dag(X))
    mean = abs(np.trace(X @ E.sigma))
    if mean > 1e-9 * max(1.0, np.abs(X).max()):
        raise OperatorError(f"score has non-zero mean {mean:.3e}; is the tangent traceless?")
    return X


def retrodiction_generator(L, E):
    """``L_* = E^{-1} L E``."""
    return E.conjugate_superop(L)


def _check_grid(grid):
    t = np.asarray(grid, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] != 0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be ascending and start at 0")
    return t


class _Stepper:
    """Applies ``exp(S dt)`` to column-stacked vectors, caching one exponential per step size."""

    def __init__(self, S):
        self.S = np.asarray(S)
        self._cache = {}

    def __call__(self, V, dt):
        if dt == 0:
            return V
        key = round(dt, 14)
        P = self._cache.get(key)
        if P is None:
            P = superop_exp(self.S, dt)
            self._cache[key] = P
        return P @ V


def _gram(E, Xs, Ys=None):
    """Real Gram matrix ``Re tr(X_j E Y_k)`` of Hermitian operators given as columns."""
    Ys = Xs if Ys is None else Ys
    W = E.basis_change()
    k = E.kernel.reshape(-1, order="F")
    Xe = W @ Xs
    Ye = W @ Ys
    return np.real(Xe.conj().T @ (k[:, None] * Ye))


def geometry_profile(L, E, fam, grid, fd_step=1e-3):
    """``J(t)``, ``K(t)`` and scores on ``grid``.

    ``K`` uses the analytic form ``-<X_j, (L^* + L_*) X_k>``. As an
    independent check, ``-dJ/dt`` is also estimated at every grid point with
    a 5-point stencil of width ``fd_step`` and the largest deviation from
    ``K`` is stored in ``fd_residual``; ``fd_step=None`` skips that check.
    """
    t = _check_grid(grid)
    L = np.asarray(L)
    Lstar_w = retrodiction_generator(L, E)
    Ladj = dag(L)
    X0 = np.column_stack([vec(score(E, T)) for T in fam.tangents])
    step = _Stepper(Lstar_w)
    back = _Stepper(-Lstar_w)
    Js, Ks, fds, scores = [], [], [], []
    X = X0
    prev = 0.0
    for ti in t:
        X = step(X, ti - prev)
        prev = ti
        Js.append(_gram(E, X))
        M = _gram(E, X, (Ladj + Lstar_w) @ X)
        Ks.append(-M)
        if fd_step:
            Xp1 = step(X, fd_step)
            Xp2 = step(Xp1, fd_step)
            Xm1 = back(X, fd_step)
            Xm2 = back(Xm1, fd_step)
            dJ = (-_gram(E, Xp2) + 8 * _gram(E, Xp1) - 8 * _gram(E, Xm1) + _gram(E, Xm2))
            fds.append(dJ / (12 * fd_step))
        scores.append([unvec(X[:, j], E.dim) for j in range(X.shape[1])])
    J = np.array(Js)
    K = np.array(Ks)
    if fd_step:
        dJ = np.array(fds)
        return GeometryProfile(t, J, K, scores, dJ, float(np.max(np.abs(K + dJ))), E.phi.name)
    return GeometryProfile(t, J, K, scores, phi=E.phi.name)


def onsager_tensor(L, E, fam):
    """``O_jk = -<X_j(0), L_* X_k(0)>_sigma`` with the ``K(0) = O + O^T`` bookkeeping."""
    L = np.asarray(L)
    Lstar_w = retrodiction_generator(L, E)
    X0 = np.column_stack([vec(score(E, T)) for T in fam.tangents])
    O = -_gram(E, X0, Lstar_w @ X0)
    M = _gram(E, X0, (dag(L) + Lstar_w) @ X0)
    K0 = -M
    sym = 0.5 * (O + O.T)
    return OnsagerReport(
        O=O,
        K0=K0,
        symmetry_residual=float(np.max(np.abs(O - O.T))),
        k0_residual=float(np.max(np.abs(K0 - (O + O.T)))),
        psd_min_eig=float(np.linalg.eigvalsh(sym).min()),
        phi=E.phi.name,
    )


# --- divergences ------------------------------------------------------------

MATCHED_PHI = {"umegaki": "KMB", "bures": "Helstrom"}


def divergence(kind, rho, sigma):
    kind = kind.lower()
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if kind == "umegaki":
        if np.linalg.eigvalsh(rho).min() <= 0 or np.linalg.eigvalsh(sigma).min() <= 0:
            raise OperatorError("Umegaki relative entropy needs full-rank arguments")
        D = np.trace(rho @ (logm_pd(rho) - logm_pd(sigma))).real
    elif kind == "bures":
        sr = sqrtm_psd(rho)
        D = 4.0 * (1.0 - np.trace(sqrtm_psd(sr @ sigma @ sr)).real)
    else:
        raise ValueError(f"unknown divergence {kind!r}")
    if not np.isfinite(D):
        raise OperatorError("divergence is not finite")
    return float(D)


def check_pairing(kind, phi):
    expected = MATCHED_PHI.get(kind.lower())
    if expected is None:
        raise ValueError(f"unknown divergence {kind!r}")
    if get_phi(phi).name != expected:
        raise ValueError(
            f"divergence {kind!r} expands with the {expected} metric, not {get_phi(phi).name}"
        )


def _propagated(L, rho0, times):
    step = _Stepper(L)
    out, v, prev = [], vec(rho0), 0.0
    for ti in times:
        v = step(v, ti - prev)
        prev = ti
        out.append(unvec(v))
    return out


def expansion_check(kind, L, E, fam, pert, t):
    """``|D(rho(t) || sigma) - eps^2 v^T J(t) v / 2|`` at a single time ``t``."""
    check_pairing(kind, E.phi)
    if pert.epsilon == 0:
        return {"divergence": 0.0, "quadratic": 0.0, "residual": 0.0}
    rho0 = fam.initial_state(pert.theta)
    rho_t = _propagated(np.asarray(L), rho0, [0.0, t] if t > 0 else [0.0])[-1]
    rho_t = 0.5 * (rho_t + dag(rho_t))
    D = divergence(kind, rho_t, fam.sigma)
    prof = geometry_profile(L, E, fam, [0.0, t] if t > 0 else [0.0])
    v = np.asarray(pert.v, dtype=float)
    quad = 0.5 * pert.epsilon**2 * float(v @ prof.J[-1] @ v)
    return {"divergence": D, "quadratic": quad, "residual": abs(D - quad)}


def expansion_order(kind, L, E, fam, v, eps=1e-2, t=0.5):
    """Residual ratio when ``eps`` is halved; expansion is accurate when it exceeds ~4."""
    r1 = expansion_check(kind, L, E, fam, PerturbationSpec(eps, v), t)["residual"]
    r2 = expansion_check(kind, L, E, fam, PerturbationSpec(eps / 2, v), t)["residual"]
    return {"residual": r1, "residual_half": r2, "ratio": r1 / r2 if r2 > 0 else np.inf}


# --- currents ---------------------------------------------------------------

def _rate_of_divergence(kind, L, rho, sigma):
    """Analytic ``R = -dD/dt`` along ``d rho/dt = L rho``.

    Umegaki: ``-tr(L rho (ln rho - ln sigma))``. Bures: with
    ``M = sigma^{1/2} rho sigma^{1/2}``, ``R = 2 tr(M^{-1/2} sigma^{1/2} (L rho) sigma^{1/2})``.
    """
    L = np.asarray(L)
    rho_dot = unvec(L @ vec(rho))
    if kind == "umegaki":
        return float(-np.trace(rho_dot @ (logm_pd(rho) - logm_pd(sigma))).real)
    s = sqrtm_psd(sigma)
    M = s @ rho @ s
    Minv_half = apply_hermitian_fn(0.5 * (M + dag(M)), lambda x: x**-0.5)
    return float(2.0 * np.trace(Minv_half @ s @ rho_dot @ s).real)


def divergence_rate_fd(kind, L, rho, sigma, h=1e-3):
    """``-dD/dt`` by a 5-point stencil in time (an independent check of the analytic rate)."""
    vals = []
    for k in (-2, -1, 1, 2):
        r = unvec(superop_exp(np.asarray(L), k * h) @ vec(rho))
        vals.append(divergence(kind, 0.5 * (r + dag(r)), sigma))
    return float(-(vals[0] - 8 * vals[1] + 8 * vals[2] - vals[3]) / (12 * h))


def currents_and_rate(L, E, fam, pert, grid, kind=None):
    """Geometric and experimental variables, their rates, and the convergence rate.

    ``kind`` selects the divergence behind ``R(t)``; by default it is the one
    matched to ``E``'s metric (Umegaki for KMB, Bures for Helstrom). For other
    metrics ``R`` is omitted.
    """
    t = _check_grid(grid)
    L = np.asarray(L)
    if kind is None:
        kind = {v: k for k, v in MATCHED_PHI.items()}.get(E.phi.name)
    elif kind:
        check_pairing(kind, E.phi)
    prof = geometry_profile(L, E, fam, t)
    rep = onsager_tensor(L, E, fam)
    Lstar_w = retrodiction_generator(L, E)
    f = pert.force
    rho0 = fam.initial_state(pert.theta)
    rhos = _propagated(L, rho0, t)
    X0 = prof.scores[0]
    p = fam.p
    x = np.zeros((len(t), p))
    y = np.zeros((len(t), p))
    xdot = np.zeros((len(t), p))
    ydot = np.zeros((len(t), p))
    R = np.full(len(t), np.nan)
    for i, (rho, Xs) in enumerate(zip(rhos, prof.scores)):
        rho_dot = unvec(L @ vec(rho))
        for j in range(p):
            LX = unvec(Lstar_w @ vec(Xs[j]))
            x[i, j] = np.trace(Xs[j] @ rho).real
            y[i, j] = np.trace(X0[j] @ rho).real
            xdot[i, j] = np.trace(LX @ rho).real + np.trace(Xs[j] @ rho_dot).real
            ydot[i, j] = np.trace(X0[j] @ rho_dot).real
        if kind and pert.epsilon != 0:
            R[i] = _rate_of_divergence(kind, L, 0.5 * (rho + dag(rho)), fam.sigma)
        elif pert.epsilon == 0:
            R[i] = 0.0
    xdot_res = np.array([np.linalg.norm(xdot[i] - prof.K[i] @ f) for i in range(len(t))])
    out = {
        "times": t,
        "x": x,
        "y": y,
        "xdot": xdot,
        "ydot": ydot,
        "force": f,
        "K": prof.K,
        "O": rep.O,
        "R": R,
        "divergence": kind,
        "xdot_residual": float(xdot_res.max()),
        "ydot0_residual": float(np.linalg.norm(ydot[0] - rep.O @ f)),
        "orthogonality_residual": float(abs(f @ (ydot[0] - 0.5 * xdot[0]))),
    }
    if kind:
        out["R0_residual"] = float(abs(R[0] - f @ ydot[0]))
        out["Rt_residual"] = float(np.max(np.abs(R - 0.5 * xdot @ f)))
    return out


ORDER_FLOORS = {
    "xdot_residual": 1.9,
    "ydot0_residual": 1.9,
    "R0_residual": 3.8,
    "Rt_residual": 3.8,
    "orthogonality_residual": 3.8,
}
# residuals below EXACT_REL * eps^k are round-off: the relation holds exactly there
EXACT_REL = 1e-10


def rate_order_check(L, E, fam, v, grid, eps=1e-3, kind=None):
    """Halve ``eps`` and compare residuals.

    An ``o(eps)`` residual must shrink by at least 1.9x and an ``o(eps^2)``
    residual by at least 3.8x, unless both residuals sit at round-off
    (below ``EXACT_REL * eps^k``), in which case the relation holds exactly.
    """
    a = currents_and_rate(L, E, fam, PerturbationSpec(eps, v), grid, kind)
    b = currents_and_rate(L, E, fam, PerturbationSpec(eps / 2, v), grid, kind)
    table = {}
    for key, floor in ORDER_FLOORS.items():
        if key not in a:
            continue
        r1, r2 = a[key], b[key]
        order = 1 if floor < 2 else 2
        exact = bool(max(r1, r2) <= EXACT_REL * eps**order)
        ratio = r1 / r2 if r2 > 0 else np.inf
        table[key] = {"residual": r1, "residual_half": r2, "ratio": ratio, "floor": floor,
                      "exact": exact, "pass": bool(ratio >= floor or exact)}
    return table
