"""Petz-class density maps ``E_sigma = R_sigma phi(Delta_sigma)``.

In the eigenbasis of ``sigma`` (eigenvalues ``p``) the density map is the
entrywise multiplier ``(E A)_ij = phi(p_i / p_j) p_j A_ij``.
"""

from dataclasses import dataclass, field

import numpy as np

from .operators import OperatorError, as_matrix, check_density, dag, hs_inner


def _kmb(u):
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    x = u - 1.0
    near = np.abs(x) < 1e-6
    # (u-1)/ln u = 1 + x/2 - x^2/12 + x^3/24 - ...
    xn = x[near]
    out[near] = 1.0 + xn / 2 - xn**2 / 12 + xn**3 / 24
    far = ~near
    out[far] = x[far] / np.log(u[far])
    return out


@dataclass(frozen=True)
class PetzFunction:
    """Scalar function ``phi`` on ``(0, inf)`` labelling a Petz density map."""

    name: str
    fn: object = field(compare=False)
    symmetric: bool = True

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if np.any(u <= 0):
            raise ValueError("phi is defined only for positive arguments")
        return self.fn(u)

    def check(self, tol=1e-10):
        """Normalization and symmetry residuals on a log grid in ``[1e-3, 1e3]``."""
        u = np.logspace(-3, 3, 601)
        norm = abs(float(self(np.array([1.0]))[0]) - 1.0)
        sym = float(np.max(np.abs(self(u) - u * self(1.0 / u)) / np.maximum(1.0, self(u))))
        return {"normalization": norm, "symmetry": sym, "ok": norm <= tol and sym <= tol}


HELSTROM = PetzFunction("Helstrom", lambda u: (1.0 + u) / 2.0)
KMB = PetzFunction("KMB", _kmb)
CONNES = PetzFunction("Connes", np.sqrt)
RIGHT_PRODUCT = PetzFunction("RightProduct", lambda u: np.ones_like(u), symmetric=False)

BUILTIN = {f.name: f for f in (HELSTROM, KMB, CONNES, RIGHT_PRODUCT)}


def get_phi(phi):
    if isinstance(phi, PetzFunction):
        return phi
    key = {k.lower(): k for k in BUILTIN}.get(str(phi).lower())
    if key is None:
        raise ValueError(f"unknown density map {phi!r}; choose from {sorted(BUILTIN)}")
    return BUILTIN[key]


def custom_phi(name, fn, tol=1e-10):
    """Wrap a user function, rejecting it unless normalized and symmetric."""
    phi = PetzFunction(name, fn)
    chk = phi.check(tol)
    if not chk["ok"]:
        raise ValueError(
            f"custom phi {name!r} fails normalization/symmetry "
            f"({chk['normalization']:.2e}, {chk['symmetry']:.2e})"
        )
    return phi


def phi_eval(phi, u):
    if u <= 0:
        raise ValueError("u must be positive")
    return float(get_phi(phi)(np.array([u], dtype=float))[0])


class PetzDensityMap:
    """``E_sigma`` for a full-rank ``sigma``; the spectral data is cached."""

    def __init__(self, sigma, phi=HELSTROM, cond_tol=1e-14):
        self.sigma = check_density(sigma, "sigma", tol=1e-8)
        self.phi = get_phi(phi)
        p, U = np.linalg.eigh(self.sigma)
        if p.min() <= 0:
            raise OperatorError(f"sigma eigenvalue {p.min():.3e} is not positive")
        self.p = p
        self.U = U
        ratio = p[:, None] / p[None, :]
        self.kernel = self.phi(ratio) * p[None, :]
        if self.kernel.min() < cond_tol:
            raise OperatorError(
                f"density map factor {self.kernel.min():.3e} below {cond_tol}; sigma is near-singular"
            )

    @property
    def dim(self):
        return self.sigma.shape[0]

    def to_eigenbasis(self, A):
        return dag(self.U) @ A @ self.U

    def from_eigenbasis(self, A):
        return self.U @ A @ dag(self.U)

    def apply(self, A):
        A = as_matrix(A)
        return self.from_eigenbasis(self.kernel * self.to_eigenbasis(A))

    def apply_inverse(self, A):
        A = as_matrix(A)
        return self.from_eigenbasis(self.to_eigenbasis(A) / self.kernel)

    def basis_change(self):
        """Superoperator of ``X -> U^dag X U`` (to the eigenbasis)."""
        return np.kron(self.U.T, dag(self.U))

    def superop(self):
        W = self.basis_change()
        return dag(W) @ (self.kernel.reshape(-1, order="F")[:, None] * W)

    def inverse_superop(self):
        W = self.basis_change()
        return dag(W) @ ((1.0 / self.kernel).reshape(-1, order="F")[:, None] * W)

    def conjugate_superop(self, S):
        """``E^{-1} S E`` for a superoperator ``S``."""
        W = self.basis_change()
        k = self.kernel.reshape(-1, order="F")
        Se = W @ np.asarray(S) @ dag(W)
        return dag(W) @ ((Se * k[None, :]) / k[:, None]) @ W

    def inner(self, A, B):
        """Weighted inner product ``tr(A^dag E B)``."""
        return hs_inner(A, self.apply(B))


def apply_density_map(E, A):
    return E.apply(A)


def apply_inverse_density_map(E, A):
    return E.apply_inverse(A)


def weighted_inner(E, A, B):
    return E.inner(A, B)


def petz_bounds_check(sigma, phi, A, slack=1e-10):
    """Helstrom, ``phi`` and ``sigma^{-1}`` quadratic forms of Hermitian ``A``.

    Returns ``(hel, mid, upper, ordered)`` where ``ordered`` means
    ``hel <= mid <= upper`` up to ``slack`` (relative to ``upper``).
    """
    phi = get_phi(phi)
    if not phi.symmetric:
        raise ValueError("the bounds hold only for symmetric phi")
    hel = hs_inner(A, PetzDensityMap(sigma, HELSTROM).apply_inverse(A)).real
    mid = hs_inner(A, PetzDensityMap(sigma, phi).apply_inverse(A)).real
    upper = np.trace(A @ np.linalg.solve(sigma, A)).real
    tol = slack * max(1.0, abs(upper))
    return hel, mid, float(upper), bool(hel <= mid + tol and mid <= upper + tol)
