"""GKSL generators and the coupled damped oscillator model."""

from dataclasses import dataclass, field
from functools import reduce

import numpy as np

from .operators import (
    OperatorError,
    apply_superop,
    as_matrix,
    check_density,
    check_hermitian,
    dag,
    left_mult,
    right_mult,
    sandwich,
    superop_exp,
    superop_hs_adjoint,
)


@dataclass(frozen=True)
class GkslModel:
    """Hamiltonian plus jump operators with non-negative rates."""

    hamiltonian: np.ndarray
    jumps: tuple = field(default_factory=tuple)

    def __post_init__(self):
        H = check_hermitian(self.hamiltonian, "hamiltonian")
        jumps = []
        for A, rate in self.jumps:
            A = as_matrix(A)
            if A.shape != H.shape:
                raise OperatorError(f"jump operator shape {A.shape} does not match {H.shape}")
            if rate < 0:
                raise OperatorError(f"negative jump rate {rate}")
            jumps.append((A, float(rate)))
        object.__setattr__(self, "hamiltonian", H)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def dim(self):
        return self.hamiltonian.shape[0]


@dataclass(frozen=True)
class BosonicCoupling:
    """Passively coupled, damped modes in a thermal bath.

    ``omega`` and ``gamma`` are Hermitian ``s x s``; ``gamma`` must be PSD.
    ``truncation`` is the maximum number of quanta kept per mode.
    """

    omega: np.ndarray
    gamma: np.ndarray
    nbar: float
    truncation: int

    def __post_init__(self):
        om = check_hermitian(np.atleast_2d(self.omega), "omega")
        ga = check_hermitian(np.atleast_2d(self.gamma), "gamma")
        if om.shape != ga.shape:
            raise OperatorError("omega and gamma must have the same shape")
        gmin = np.linalg.eigvalsh(ga).min()
        if gmin < -1e-10:
            raise OperatorError(f"gamma is not positive-semidefinite (min eigenvalue {gmin:.3e})")
        if self.nbar < 0:
            raise OperatorError("nbar must be non-negative")
        if self.truncation < 2:
            raise OperatorError("truncation must be at least 2")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "gamma", ga)

    @property
    def modes(self):
        return self.omega.shape[0]

    @property
    def dim(self):
        return (self.truncation + 1) ** self.modes

    def conjugate(self):
        """The same model with entrywise-conjugated ``omega`` and ``gamma``."""
        return BosonicCoupling(self.omega.conj(), self.gamma.conj(), self.nbar, self.truncation)


def generator(model):
    """Superoperator of ``-i[H, .] + sum_k rate_k D[A_k]``."""
    H = model.hamiltonian
    L = -1j * (left_mult(H) - right_mult(H))
    for A, rate in model.jumps:
        AdA = dag(A) @ A
        L = L + rate * (sandwich(A) - 0.5 * left_mult(AdA) - 0.5 * right_mult(AdA))
    return L


def adjoint_generator(L):
    """Heisenberg-picture generator, the Hilbert-Schmidt adjoint of ``L``."""
    return superop_hs_adjoint(L)


def propagate(L, rho0, t, tol=1e-9):
    if t < 0:
        raise ValueError("propagation time must be non-negative")
    rho0 = np.asarray(rho0, dtype=complex)
    if t == 0:
        return rho0.copy()
    rho = apply_superop(superop_exp(L, t), rho0)
    tr = np.trace(rho).real
    herm = np.max(np.abs(rho - dag(rho)))
    pmin = np.linalg.eigvalsh(0.5 * (rho + dag(rho))).min()
    if abs(tr - np.trace(rho0).real) > tol or herm > tol or pmin < -tol:
        raise OperatorError(
            f"propagated state left the state space (trace drift {tr - 1:.2e}, "
            f"hermiticity {herm:.2e}, min eigenvalue {pmin:.2e}); "
            "the model or truncation may be inadequate"
        )
    return rho


def annihilation(N):
    return np.diag(np.sqrt(np.arange(1, N + 1, dtype=float)), 1).astype(complex)


def mode_operators(s, N):
    """Annihilation operators ``a_1..a_s`` on ``(N+1)^s`` dimensions."""
    a = annihilation(N)
    eye = np.eye(N + 1)
    ops = []
    for j in range(s):
        factors = [a if k == j else eye for k in range(s)]
        ops.append(reduce(np.kron, factors).astype(complex))
    return ops


def quadratures(s, N):
    """Quadrature vector ``(q_1..q_s, p_1..p_s)`` with ``a = (q + ip)/sqrt(2)``."""
    a = mode_operators(s, N)
    qs = [(aj + dag(aj)) / np.sqrt(2) for aj in a]
    ps = [(aj - dag(aj)) / (1j * np.sqrt(2)) for aj in a]
    return qs + ps


def thermal_state(s, nbar, N):
    """Product thermal state with occupation ``nbar``, truncated at ``N`` quanta."""
    n = np.arange(N + 1, dtype=float)
    if nbar == 0:
        p1 = (n == 0).astype(float)
    else:
        p1 = (nbar / (nbar + 1)) ** n
    p1 = p1 / p1.sum()
    p = reduce(np.kron, [p1] * s)
    return np.diag(p).astype(complex)


def bosonic_model(c):
    """GKSL model of the coupled oscillators.

    ``gamma = sum_m g_m u_m u_m^dag``; collective modes
    ``b_m = sum_j conj(u_m[j]) a_j`` get jumps ``b_m`` at rate ``(nbar+1) g_m``
    and ``b_m^dag`` at rate ``nbar g_m``.
    """
    s, N = c.modes, c.truncation
    a = mode_operators(s, N)
    H = sum(c.omega[j, k] * dag(a[j]) @ a[k] for j in range(s) for k in range(s))
    H = 0.5 * (H + dag(H))
    g, U = np.linalg.eigh(c.gamma)
    jumps = []
    for m in range(s):
        if g[m] <= 1e-14:
            continue
        b = sum(np.conj(U[j, m]) * a[j] for j in range(s))
        jumps.append((b, (c.nbar + 1) * g[m]))
        if c.nbar > 0:
            jumps.append((dag(b), c.nbar * g[m]))
    return GkslModel(H, tuple(jumps))


def bosonic_generator_direct(c):
    """Term-by-term construction of the oscillator generator in ``a_j`` form."""
    s, N = c.modes, c.truncation
    a = mode_operators(s, N)
    d = c.dim
    L = np.zeros((d * d, d * d), dtype=complex)
    for j in range(s):
        for k in range(s):
            ajd_ak = dag(a[j]) @ a[k]
            ak_ajd = a[k] @ dag(a[j])
            L += -1j * c.omega[j, k] * (left_mult(ajd_ak) - right_mult(ajd_ak))
            L += 0.5 * (c.nbar + 1) * c.gamma[j, k] * (
                2 * np.kron(dag(a[j]).T, a[k]) - left_mult(ajd_ak) - right_mult(ajd_ak)
            )
            L += 0.5 * c.nbar * c.gamma[j, k] * (
                2 * np.kron(a[k].T, dag(a[j])) - left_mult(ak_ajd) - right_mult(ak_ajd)
            )
    return L


def random_gksl_model(d, rng, n_jumps=2, scale=1.0):
    """Random Hamiltonian and jump operators; generically has a unique full-rank steady state."""
    H = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    H = scale * 0.5 * (H + dag(H)) / np.sqrt(d)
    jumps = []
    for _ in range(n_jumps):
        A = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2 * d)
        jumps.append((A, scale * float(rng.uniform(0.5, 1.5))))
    return GkslModel(H, tuple(jumps))


def steady_state_residual(L, sigma):
    sigma = check_density(sigma, "sigma", tol=1e-8)
    return float(np.linalg.norm(apply_superop(L, sigma)))
