"""Dense operator algebra on a finite-dimensional Hilbert space.

Operators are plain complex ``numpy`` arrays of shape ``(d, d)``.
Superoperators are ``(d*d, d*d)`` arrays acting on column-stacked
(Fortran-order) vectorizations, so that ``vec(B X C) = (C^T kron B) vec(X)``.
"""

import numpy as np
import scipy.linalg

TOL_HERM = 1e-10
TOL_TRACE = 1e-10


class OperatorError(ValueError):
    """Raised when an operator violates a structural requirement."""


def as_matrix(A):
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise OperatorError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise OperatorError("matrix has non-finite entries")
    return A


def dag(A):
    return np.conj(np.swapaxes(A, -1, -2))


def hermiticity_residual(A):
    A = np.asarray(A)
    return float(np.max(np.abs(A - dag(A)))) if A.size else 0.0


def check_hermitian(A, name="operator", tol=TOL_HERM):
    """Return ``A`` as a complex matrix, rejecting non-Hermitian input.

    Inputs are never symmetrized: a residual above ``tol`` raises.
    """
    A = as_matrix(A)
    res = hermiticity_residual(A)
    if res > tol:
        raise OperatorError(f"{name} is not Hermitian (max |A - A^dag| = {res:.3e})")
    return A


def check_density(rho, name="density operator", tol=TOL_TRACE):
    rho = check_hermitian(rho, name)
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol:
        raise OperatorError(f"{name} has trace {tr!r}, expected 1")
    pmin = np.linalg.eigvalsh(rho).min()
    if pmin <= 0:
        raise OperatorError(f"{name} is not positive-definite (min eigenvalue {pmin:.3e})")
    return rho


def hs_inner(A, B):
    """Hilbert-Schmidt inner product ``tr(A^dag B)``."""
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise OperatorError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B))


def commutator(A, B):
    return A @ B - B @ A


def anticommutator(A, B):
    return A @ B + B @ A


def apply_hermitian_fn(A, f):
    """Spectral calculus ``U f(D) U^dag`` for Hermitian ``A``.

    ``f`` is applied to the real eigenvalue array and must return finite
    values there.
    """
    A = check_hermitian(A)
    evals, U = np.linalg.eigh(A)
    with np.errstate(all="ignore"):
        fv = np.asarray(f(evals))
    if fv.shape != evals.shape or not np.all(np.isfinite(fv)):
        raise OperatorError("function is undefined on the spectrum of the operator")
    return (U * fv) @ dag(U)


def sqrtm_psd(A):
    return apply_hermitian_fn(A, lambda x: np.sqrt(np.clip(x, 0.0, None)))


def logm_pd(A):
    return apply_hermitian_fn(A, np.log)


# --- vectorization ---------------------------------------------------------

def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, d=None):
    v = np.asarray(v)
    if d is None:
        d = int(round(np.sqrt(v.shape[0])))
    if d * d != v.shape[0]:
        raise OperatorError(f"vector of length {v.shape[0]} is not a square operator")
    return v.reshape((d, d), order="F")


def superop_dim(S):
    S = np.asarray(S)
    d = int(round(np.sqrt(S.shape[0])))
    if S.shape != (d * d, d * d):
        raise OperatorError(f"superoperator shape {S.shape} is not (d^2, d^2)")
    return d


def apply_superop(S, X):
    X = np.asarray(X)
    d = superop_dim(S)
    if X.shape != (d, d):
        raise OperatorError(f"operator shape {X.shape} does not match superoperator on d={d}")
    return unvec(np.asarray(S) @ vec(X), d)


def left_mult(B):
    B = as_matrix(B)
    return np.kron(np.eye(B.shape[0]), B)


def right_mult(B):
    B = as_matrix(B)
    return np.kron(B.T, np.eye(B.shape[0]))


def sandwich(B, C=None):
    """Superoperator ``X -> B X C^dag`` (``C`` defaults to ``B``)."""
    B = as_matrix(B)
    C = B if C is None else as_matrix(C)
    if B.shape != C.shape:
        raise OperatorError(f"dimension mismatch: {B.shape} vs {C.shape}")
    return np.kron(C.conj(), B)


def transpose_superop(d):
    """Superoperator ``X -> X^T``."""
    P = np.zeros((d * d, d * d))
    for i in range(d):
        for j in range(d):
            P[j + i * d, i + j * d] = 1.0
    return P


def build_superop(kind, B, C=None):
    if kind == "left_mult":
        return left_mult(B)
    if kind == "right_mult":
        return right_mult(B)
    if kind == "sandwich":
        return sandwich(B, C)
    if kind == "transpose":
        return transpose_superop(as_matrix(B).shape[0])
    raise ValueError(f"unknown superoperator kind {kind!r}")


def identity_superop(d):
    return np.eye(d * d, dtype=complex)


def superop_hs_adjoint(S):
    """Hilbert-Schmidt adjoint; with column stacking it is the conjugate transpose."""
    return dag(np.asarray(S))


def choi_matrix(S):
    """Choi matrix ``sum_ij |i><j| (x) S(|i><j|)``."""
    d = superop_dim(S)
    C = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            Eij = np.zeros((d, d), dtype=complex)
            Eij[i, j] = 1.0
            C += np.kron(Eij, apply_superop(S, Eij))
    return C


def superop_exp(S, t=1.0):
    """``exp(t S)`` by scaling and squaring with a Pade approximant."""
    E = scipy.linalg.expm(t * np.asarray(S, dtype=complex))
    if not np.all(np.isfinite(E)):
        raise OperatorError("non-finite entries in superoperator exponential")
    return E


def nullspace_state(S, gap_tol=1e-6, tol=1e-9):
    """Unique positive-definite trace-one element of ker(S).

    The kernel vector is the right singular vector of the smallest singular
    value. A second singular value below ``gap_tol`` means the steady state is
    not unique and is rejected.
    """
    S = np.asarray(S, dtype=complex)
    d = superop_dim(S)
    _, s, Vh = np.linalg.svd(S)
    if d > 1 and s[-2] < gap_tol:
        raise OperatorError(
            f"degenerate kernel: second-smallest singular value {s[-2]:.3e} < {gap_tol}"
        )
    X = unvec(Vh[-1].conj(), d)
    tr = np.trace(X)
    if abs(tr) < 1e-14:
        raise OperatorError("kernel element is traceless; no steady state")
    X = X / tr
    X = 0.5 * (X + dag(X))
    pmin = np.linalg.eigvalsh(X).min()
    if pmin <= 0:
        raise OperatorError(f"kernel element is not positive-definite (min eigenvalue {pmin:.3e})")
    res = np.linalg.norm(S @ vec(X))
    if res > tol * max(1.0, np.linalg.norm(S)):
        raise OperatorError(f"steady-state residual {res:.3e} exceeds tolerance")
    return X
