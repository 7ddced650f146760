"""Motion reversal, reverse dynamics, detailed balance and Onsager-Casimir checks.

A motion reversal acts on operators as ``Theta A = w conj(A) w^dag`` for a
unitary ``w``. On column-stacked vectors this is ``M conj(.)`` with
``M = conj(w) (x) w``, so conjugating a superoperator gives
``Theta S Theta^{-1} = M conj(S) M^dag``.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import TangentFamily, onsager_tensor, retrodiction_generator, score
from .operators import (
    OperatorError,
    apply_superop,
    as_matrix,
    check_density,
    choi_matrix,
    dag,
    sqrtm_psd,
    superop_dim,
    vec,
)
from .petz import PetzDensityMap

TOL_REVERSAL = 1e-8


class MotionReversal:
    def __init__(self, w):
        w = as_matrix(w)
        err = np.max(np.abs(dag(w) @ w - np.eye(w.shape[0])))
        if err > 1e-10:
            raise OperatorError(f"w is not unitary (max |w^dag w - I| = {err:.3e})")
        self.w = w
        self._M = np.kron(w.conj(), w)

    @classmethod
    def conjugation(cls, d):
        """Entrywise complex conjugation in the computational basis.

        In a Fock basis this fixes ``q`` (real matrix elements) and flips
        ``p`` (imaginary ones).
        """
        return cls(np.eye(d))

    @property
    def dim(self):
        return self.w.shape[0]

    def __call__(self, A):
        return self.w @ np.conj(A) @ dag(self.w)

    def inverse(self, A):
        return np.conj(dag(self.w) @ A @ self.w)

    def conjugate_superop(self, S):
        """``Theta S Theta^{-1}`` (a linear superoperator)."""
        return self._M @ np.conj(S) @ dag(self._M)

    def tensor(self, other):
        """Separable reversal on a bipartite space."""
        return MotionReversal(np.kron(self.w, other.w))


def apply_reversal(theta, A):
    return theta(A)


def cp_diagnostic(K):
    """Smallest eigenvalue of the generator's Choi matrix off the maximally entangled vector.

    Non-negative (up to round-off) exactly when ``exp(K t)`` is completely
    positive for all ``t >= 0``.
    """
    d = superop_dim(K)
    C = choi_matrix(K)
    omega = np.zeros(d * d, dtype=complex)
    omega[[i * d + i for i in range(d)]] = 1 / np.sqrt(d)
    P = np.eye(d * d) - np.outer(omega, omega.conj())
    ev = np.linalg.eigvalsh(P @ (0.5 * (C + dag(C))) @ P)
    return float(ev.min())


def reverse_generator(L, E, theta):
    """Generator ``K`` with ``K^* = Theta L_* Theta^{-1}``.

    ``K`` need not be completely positive; see :func:`cp_diagnostic`.
    """
    Kadj = theta.conjugate_superop(retrodiction_generator(np.asarray(L), E))
    return dag(Kadj)


@dataclass
class ReversalPair:
    """Forward system ``(L, E)`` and its reverse ``(K, E_rev)`` under ``theta``."""

    L: np.ndarray
    E: PetzDensityMap
    K: np.ndarray
    E_rev: PetzDensityMap
    theta: MotionReversal

    @classmethod
    def from_forward(cls, L, E, theta):
        K = reverse_generator(L, E, theta)
        E_rev = PetzDensityMap(theta(E.sigma), E.phi)
        return cls(np.asarray(L), E, K, E_rev, theta)

    def residuals(self):
        """Relative ``|K^* - Theta L_* Theta^{-1}|`` and ``|sigma_rev - Theta sigma|``."""
        target = self.theta.conjugate_superop(retrodiction_generator(self.L, self.E))
        scale = max(1.0, np.linalg.norm(self.L))
        return {
            "generator": float(np.linalg.norm(dag(self.K) - target) / scale),
            "steady_state": float(np.linalg.norm(self.E_rev.sigma - self.theta(self.E.sigma))),
            "reverse_annihilates": float(np.linalg.norm(apply_superop(self.K, self.E_rev.sigma))),
        }


def detailed_balance_check(L, E, theta, tol=TOL_REVERSAL):
    """Residuals of ``L^* = Theta L_* Theta^{-1}`` (relative to ``|L|``) and ``sigma = Theta sigma``."""
    L = np.asarray(L)
    target = theta.conjugate_superop(retrodiction_generator(L, E))
    scale = max(1.0, np.linalg.norm(L))
    gen = float(np.linalg.norm(dag(L) - target) / scale)
    st = float(np.linalg.norm(E.sigma - theta(E.sigma)))
    return {"generator": gen, "steady_state": st, "tolerance": tol, "pass": gen < tol and st < tol}


def map_reversal_residual(F, G, E, theta):
    """``|G^* - Theta F_* Theta^{-1}|`` for maps (not generators)."""
    target = theta.conjugate_superop(E.conjugate_superop(F))
    return float(np.linalg.norm(dag(np.asarray(G)) - target))


def reverse_family(fam, theta):
    """The family ``Theta tau(theta)``: steady state and tangents mapped by ``Theta``."""
    tau = None if fam.tau is None else (lambda th: theta(fam.tau(th)))
    return TangentFamily(theta(fam.sigma), [theta(T) for T in fam.tangents],
                         labels=list(fam.labels), tau=tau, kind=fam.kind)


def _scores(E, fam):
    return [score(E, T) for T in fam.tangents]


def casimir_pair_check(pair, fam_fwd, fam_rev, tol=TOL_REVERSAL):
    """Compare ``O`` with the transpose of the reverse system's tensor."""
    X = _scores(pair.E, fam_fwd)
    Xr = _scores(pair.E_rev, fam_rev)
    if len(X) != len(Xr):
        raise ValueError("families have different numbers of parameters")
    mismatch = max(np.max(np.abs(pair.theta(a) - b)) for a, b in zip(X, Xr))
    if mismatch > tol * max(1.0, max(np.abs(a).max() for a in X)):
        raise ValueError(f"reverse scores are not Theta of the forward ones (residual {mismatch:.3e})")
    O = onsager_tensor(pair.L, pair.E, fam_fwd).O
    Ot = onsager_tensor(pair.K, pair.E_rev, fam_rev).O
    res = float(np.max(np.abs(O - Ot.T)))
    return {"O": O, "O_rev": Ot, "residual": res, "tolerance": tol, "pass": res < tol}


def score_transform(theta, E, fam):
    """Least-squares ``T`` with ``Theta X_j = T_jk X_k`` and its residual."""
    X = _scores(E, fam)
    A = np.column_stack([vec(x) for x in X])
    B = np.column_stack([vec(theta(x)) for x in X])
    T, *_ = np.linalg.lstsq(A, B, rcond=None)
    T = T.T.real
    res = float(np.max(np.abs(A @ T.T - B)))
    return T, res


def casimir_field_check(pair, fam, T, tol=TOL_REVERSAL):
    """Onsager-Casimir relation for two systems sharing steady state and preparation."""
    T = np.asarray(T, dtype=float)
    sig_res = float(np.max(np.abs(pair.E_rev.sigma - pair.E.sigma)))
    if sig_res > tol:
        raise ValueError(f"steady states differ (residual {sig_res:.3e})")
    X = _scores(pair.E, fam)
    rel = max(
        np.max(np.abs(pair.theta(X[j]) - sum(T[j, k] * X[k] for k in range(len(X)))))
        for j in range(len(X))
    )
    if rel > tol * max(1.0, max(np.abs(x).max() for x in X)):
        raise ValueError(f"scores do not transform with the given T (residual {rel:.3e})")
    O = onsager_tensor(pair.L, pair.E, fam).O
    Ot = onsager_tensor(pair.K, pair.E_rev, fam).O
    # O_jk = T_kl Ot_lm T_jm
    res = float(np.max(np.abs(O - (T @ Ot @ T.T).T)))
    db = detailed_balance_check(pair.L, pair.E, pair.theta)
    out = {"O": O, "O_rev": Ot, "residual": res, "tolerance": tol, "pass": res < tol}
    if db["pass"]:
        corr = float(np.max(np.abs(O - T @ O.T @ T.T)))
        out["detailed_balance_residual"] = corr
        out["pass"] = out["pass"] and corr < tol
    return out


# --- Crooks duality ---------------------------------------------------------

def crooks_dual(A, E, theta):
    """``A# = Theta E A^* E^{-1} Theta^{-1}``."""
    A = np.asarray(A)
    return theta.conjugate_superop(E.superop() @ dag(A) @ E.inverse_superop())


def crooks_dual_check(A, B, sigma, phi, theta):
    E = PetzDensityMap(sigma, phi)
    if not E.phi.symmetric:
        raise ValueError("the dual criterion needs a symmetric density map")
    lhs = np.trace(apply_superop(np.asarray(B) @ np.asarray(A), E.sigma))
    Ad, Bd = crooks_dual(A, E, theta), crooks_dual(B, E, theta)
    rhs = np.trace(apply_superop(Ad @ Bd, theta(E.sigma)))
    return {"lhs": complex(lhs), "rhs": complex(rhs), "residual": float(abs(lhs - rhs))}


def kraus_superop(kraus):
    return sum(np.kron(np.conj(a), a) for a in kraus)


def connes_kraus_dual(kraus, sigma, theta):
    """Tilde Kraus operators ``theta sigma^{1/2} a^dag sigma^{-1/2} theta^{-1}``."""
    s = sqrtm_psd(sigma)
    si = np.linalg.inv(s)
    return [theta(s @ dag(a) @ si) for a in kraus]


# --- dilation ------------------------------------------------------------------

def partial_trace_env(X, d_sys, d_env):
    return np.trace(X.reshape(d_sys, d_env, d_sys, d_env), axis1=1, axis2=3)


def dilated_channel(U, chi, d_sys):
    """Superoperator of ``rho -> tr_env U (rho (x) chi) U^dag``."""
    U = as_matrix(U)
    d_env = chi.shape[0]
    F = np.zeros((d_sys * d_sys, d_sys * d_sys), dtype=complex)
    for j in range(d_sys):
        for i in range(d_sys):
            Eij = np.zeros((d_sys, d_sys), dtype=complex)
            Eij[i, j] = 1.0
            out = partial_trace_env(U @ np.kron(Eij, chi) @ dag(U), d_sys, d_env)
            F[:, i + j * d_sys] = vec(out)
    return F


def dilation_reverse_check(U, chi, sigma, phi, theta_sys, theta_env, tol=TOL_REVERSAL):
    """Reverse a dilated channel through ``V = Theta U^dag`` and test the reversal relation."""
    U = as_matrix(U)
    sigma = check_density(sigma, "sigma", tol=1e-8)
    chi = check_density(chi, "chi", tol=1e-8)
    d = sigma.shape[0]
    total = np.kron(sigma, chi)
    micro = float(np.linalg.norm(U @ total @ dag(U) - total))
    if micro > 1e-9:
        raise ValueError(f"sigma (x) chi is not stationary under U (residual {micro:.3e})")
    theta_tot = theta_sys.tensor(theta_env)
    V = theta_tot(dag(U))
    F = dilated_channel(U, chi, d)
    G = dilated_channel(V, theta_env(chi), d)
    E = PetzDensityMap(sigma, phi)
    res = map_reversal_residual(F, G, E, theta_sys)
    return {
        "F": F,
        "G": G,
        "microstationarity": micro,
        "residual": res,
        "tolerance": tol,
        "pass": res < tol,
    }
