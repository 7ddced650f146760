"""Phase-space (mean, covariance) calculus for Gaussian states and channels.

Quadratures are ordered ``Q = (q_1..q_s, p_1..p_s)`` with
``[Q_j, Q_k] = i Omega_jk``. Nothing here builds Fock-space operators except
:func:`fock_compare`, which exists to check this module against the
truncated numerics.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import geometry_profile, kick_family, onsager_tensor
from .lindblad import BosonicCoupling, bosonic_model, generator, quadratures, thermal_state
from .operators import OperatorError, check_hermitian
from .petz import HELSTROM, PetzDensityMap


def symplectic_form(s):
    I = np.eye(s)
    Z = np.zeros((s, s))
    return np.block([[Z, I], [-I, Z]])


def kick_transform(s):
    """``T = diag(I, -I)``: how motion reversal acts on the quadratures."""
    return np.diag(np.r_[np.ones(s), -np.ones(s)])


@dataclass(frozen=True)
class GaussianState:
    m: np.ndarray
    Sigma: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=float)
        S = np.asarray(self.Sigma, dtype=float)
        if S.shape != (m.size, m.size) or m.size % 2:
            raise ValueError("mean must have length 2s and covariance shape (2s, 2s)")
        if np.max(np.abs(S - S.T)) > 1e-12:
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "Sigma", S)

    @property
    def modes(self):
        return self.m.size // 2

    def uncertainty_min_eig(self):
        """Smallest eigenvalue of ``Sigma + i Omega / 2``; non-negative for a physical state."""
        return float(np.linalg.eigvalsh(self.Sigma + 0.5j * symplectic_form(self.modes)).min())

    @classmethod
    def thermal(cls, s, nbar):
        return cls(np.zeros(2 * s), (nbar + 0.5) * np.eye(2 * s))


@dataclass(frozen=True)
class GaussianChannel:
    """``F^* W(zeta) = exp(i zeta.l - zeta S zeta / 2) W(zeta F)``."""

    l: np.ndarray
    F: np.ndarray
    S: np.ndarray

    def __post_init__(self):
        F = np.atleast_2d(np.asarray(self.F, dtype=float))
        l = np.asarray(self.l, dtype=float)
        S = np.atleast_2d(np.asarray(self.S, dtype=float))
        if l.shape != (F.shape[0],) or S.shape != (F.shape[0], F.shape[0]):
            raise ValueError("inconsistent channel dimensions")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "S", S)

    def cp_min_eig(self):
        """Smallest eigenvalue of ``S + i(Omega' - F Omega F^T)/2`` (CP iff >= 0)."""
        so, si = self.F.shape[0] // 2, self.F.shape[1] // 2
        M = symplectic_form(so) - self.F @ symplectic_form(si) @ self.F.T
        return float(np.linalg.eigvalsh(self.S + 0.5j * M).min())

    def apply(self, state):
        if state.m.size != self.F.shape[1]:
            raise ValueError("channel input dimension does not match the state")
        return GaussianState(self.F @ state.m + self.l, self.F @ state.Sigma @ self.F.T + self.S)


def rate_matrix(omega, gamma):
    """Real ``2s x 2s`` drift of the mean quadratures, ``d<Q>/dt = L <Q>``."""
    om = check_hermitian(np.atleast_2d(omega), "omega")
    ga = check_hermitian(np.atleast_2d(gamma), "gamma")
    A = om.imag - ga.real / 2
    B = om.real + ga.imag / 2
    return np.block([[A, B], [-B, A]])


def rate_matrix_from_lambda(omega, gamma):
    """Same matrix built from the mode-amplitude drift ``Lambda = -i omega - gamma/2``."""
    Lam = -1j * np.atleast_2d(omega) - 0.5 * np.atleast_2d(gamma)
    return np.block([[Lam.real, -Lam.imag], [Lam.imag, Lam.real]])


def sld_score_gaussian(state, j):
    """Helstrom score of the tangent ``i[Q_j, rho]``.

    Returns ``(offset, coeff)`` such that the score is ``offset + coeff . Q``,
    i.e. ``coeff = (Omega Sigma^{-1})[j]`` and ``offset = -coeff . m``.
    """
    try:
        Sinv = np.linalg.inv(state.Sigma)
    except np.linalg.LinAlgError as exc:
        raise OperatorError("covariance matrix is singular") from exc
    if np.linalg.cond(state.Sigma) > 1e12:
        raise OperatorError("covariance matrix is singular")
    coeff = (symplectic_form(state.modes) @ Sinv)[j]
    return float(-coeff @ state.m), coeff


def kick_scores_gaussian(state):
    """Helstrom scores for the kicks ``G_j = Omega_jk Q_k``: coefficient matrix ``Sigma^{-1}``."""
    Om = symplectic_form(state.modes)
    rows = [sld_score_gaussian(state, k)[1] for k in range(2 * state.modes)]
    C = -Om @ np.array(rows)
    return -C @ state.m, C


def channel_push_pull(ch, state):
    """Pulled and pushed quadratures for a Gaussian channel and input state.

    ``pull``: ``F^* Q = F Q + l`` as ``(l, F)``.
    ``push``: ``F_* Q = m + Ft (Q - m_out)`` as ``(m - Ft m_out, Ft)`` with
    ``Ft = Sigma F^T Sigma_out^{-1}`` (Helstrom map).
    """
    out = ch.apply(state)
    if np.linalg.cond(out.Sigma) > 1e12:
        raise OperatorError("output covariance is singular")
    Ft = state.Sigma @ ch.F.T @ np.linalg.inv(out.Sigma)
    return {
        "pull": (ch.l.copy(), ch.F.copy()),
        "push": (state.m - Ft @ out.m, Ft),
        "output": out,
    }


def thermal_channel(omega, gamma, nbar, t):
    """Gaussian channel of the damped oscillators at time ``t`` with a thermal fixed point."""
    L = rate_matrix(omega, gamma)
    F = scipy.linalg.expm(L * t)
    Sth = (nbar + 0.5) * np.eye(L.shape[0])
    return GaussianChannel(np.zeros(L.shape[0]), F, Sth - F @ Sth @ F.T)


@dataclass(frozen=True)
class ClosedFormOnsager:
    """Exact kicked-oscillator tensors: ``J = r F^T F``, ``K = -r F^T (L^T + L) F``, ``O = -r L``."""

    L: np.ndarray
    r: float

    def F(self, t):
        return scipy.linalg.expm(self.L * t)

    def J(self, t):
        F = self.F(t)
        return self.r * F.T @ F

    def K(self, t):
        F = self.F(t)
        return -self.r * F.T @ (self.L.T + self.L) @ F

    @property
    def O(self):
        return -self.r * self.L


def closed_form_onsager(omega, gamma, nbar):
    ga = check_hermitian(np.atleast_2d(gamma), "gamma")
    if np.linalg.eigvalsh(ga).min() < -1e-10:
        raise OperatorError("gamma is not positive-semidefinite")
    return ClosedFormOnsager(rate_matrix(omega, ga), 1.0 / (nbar + 0.5))


def gamma_block(gamma, r):
    """``r [[Re g, -Im g], [Im g, Re g]]``, the closed-form ``K(0)``."""
    g = np.atleast_2d(gamma)
    return r * np.block([[g.real, -g.imag], [g.imag, g.real]])


def _fock_profile(coupling, grid, cond_tol=1e-300):
    s, N = coupling.modes, coupling.truncation
    L = generator(bosonic_model(coupling))
    sigma = thermal_state(s, coupling.nbar, N)
    Q = quadratures(s, N)
    Om = symplectic_form(s)
    G = [sum(Om[j, k] * Q[k] for k in range(2 * s)) for j in range(2 * s)]
    fam = kick_family(G, sigma)
    # the thermal spectrum is analytic, so tiny populations are exact rather than noise
    E = PetzDensityMap(sigma, HELSTROM, cond_tol=cond_tol)
    return geometry_profile(L, E, fam, grid, fd_step=None), onsager_tensor(L, E, fam)


def fock_compare(coupling, grid, check_convergence=True, floor=1e-10):
    """Max-abs residuals of the truncated model against the closed form.

    With ``check_convergence`` the run is repeated at ``N + 10`` quanta and a
    residual that fails to decrease (while above ``floor``) raises.
    """
    cf = closed_form_onsager(coupling.omega, coupling.gamma, coupling.nbar)

    def residuals(c):
        prof, rep = _fock_profile(c, grid)
        return {
            "N": c.truncation,
            "J": float(max(np.max(np.abs(prof.J[i] - cf.J(t))) for i, t in enumerate(prof.times))),
            "K": float(max(np.max(np.abs(prof.K[i] - cf.K(t))) for i, t in enumerate(prof.times))),
            "O": float(np.max(np.abs(rep.O - cf.O))),
        }

    table = [residuals(coupling)]
    if check_convergence:
        bigger = BosonicCoupling(coupling.omega, coupling.gamma, coupling.nbar, coupling.truncation + 10)
        table.append(residuals(bigger))
        for key in ("J", "K", "O"):
            a, b = table[0][key], table[1][key]
            if a > floor and not b < a:
                raise OperatorError(
                    f"truncation inadequate: {key} residual {a:.3e} -> {b:.3e} when N grows"
                )
    return table
