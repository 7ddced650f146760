import numpy as np
import pytest
import scipy.linalg

from qonsager.gaussian import (
    GaussianChannel,
    GaussianState,
    channel_push_pull,
    closed_form_onsager,
    fock_compare,
    gamma_block,
    kick_scores_gaussian,
    kick_transform,
    rate_matrix,
    rate_matrix_from_lambda,
    sld_score_gaussian,
    symplectic_form,
    thermal_channel,
)
from qonsager.lindblad import BosonicCoupling, bosonic_model, generator, mode_operators, quadratures, thermal_state
from qonsager.operators import OperatorError, commutator, dag, superop_exp, unvec, vec
from qonsager.petz import HELSTROM, PetzDensityMap

from conftest import random_hermitian, random_operator


def fock_gaussian_state(N, nbar=1.0, xi=0.2, alpha=0.4 - 0.2j, big=110):
    """Displaced squeezed thermal state built in ``big`` levels and cut to ``N``."""
    a = mode_operators(1, big)[0]
    Sq = scipy.linalg.expm(0.5 * (np.conj(xi) * a @ a - xi * dag(a) @ dag(a)))
    D = scipy.linalg.expm(alpha * dag(a) - np.conj(alpha) * a)
    U = D @ Sq
    rho = U @ thermal_state(1, nbar, big) @ dag(U)
    rho = rho[: N + 1, : N + 1]
    rho = 0.5 * (rho + dag(rho))
    return rho / np.trace(rho).real


def fock_moments(rho, N):
    Q = quadratures(1, N)
    m = np.array([np.trace(q @ rho).real for q in Q])
    Sig = np.array([[0.5 * np.trace((Q[j] @ Q[k] + Q[k] @ Q[j]) @ rho).real - m[j] * m[k]
                     for k in range(2)] for j in range(2)])
    return GaussianState(m, Sig), Q


def test_symplectic_form():
    for s in (1, 3):
        Om = symplectic_form(s)
        assert np.allclose(Om @ Om, -np.eye(2 * s))
        assert np.allclose(Om.T, -Om)


def test_quadrature_commutators_match_omega():
    N = 12
    Q = quadratures(2, N)
    Om = symplectic_form(2)
    block = slice(0, (N + 1) * N)  # away from the truncation edge of the second mode
    for j in range(4):
        for k in range(4):
            c = commutator(Q[j], Q[k])
            # exact except where a truncated mode sits at its top level
            n1 = np.repeat(np.arange(N + 1), N + 1)
            n2 = np.tile(np.arange(N + 1), N + 1)
            keep = (n1 < N) & (n2 < N)
            assert np.allclose(np.diag(c)[keep], 1j * Om[j, k])
    assert block.stop > 0


def test_rate_matrix_examples(rng):
    w, g = 1.3, 0.4
    assert np.allclose(rate_matrix([[w]], [[g]]), [[-g / 2, w], [-w, -g / 2]])
    assert np.allclose(rate_matrix(np.zeros((2, 2)), np.zeros((2, 2))), 0)
    om = random_hermitian(3, rng)
    G = random_operator(3, rng)
    ga = G @ dag(G)
    L = rate_matrix(om, ga)
    assert np.allclose(L, rate_matrix_from_lambda(om, ga))
    T = kick_transform(3)
    assert not np.allclose(L, T @ L.T @ T)
    Lr = rate_matrix(om.real, ga.real)
    assert np.allclose(Lr, T @ Lr.T @ T)
    assert np.linalg.eigvals(L).real.max() < 0


def test_mean_drift_matches_fock_dynamics():
    """``d<Q>/dt = L <Q>`` checked against the truncated master equation."""
    N = 30
    c = BosonicCoupling([[0.8]], [[0.3]], 0.3, N)
    Lsup = generator(bosonic_model(c))
    rho = fock_gaussian_state(N)
    st, Q = fock_moments(rho, N)
    t = 0.6
    rho_t = unvec(superop_exp(Lsup, t) @ vec(rho))
    st_t, _ = fock_moments(rho_t, N)
    ch = thermal_channel([[0.8]], [[0.3]], 0.3, t)
    out = ch.apply(st)
    assert np.allclose(st_t.m, out.m, atol=1e-9)
    assert np.allclose(st_t.Sigma, out.Sigma, atol=1e-9)


def test_gaussian_state_validation():
    th = GaussianState.thermal(2, 0.5)
    assert th.uncertainty_min_eig() >= -1e-12
    assert GaussianState([0, 0], 0.1 * np.eye(2)).uncertainty_min_eig() < 0
    with pytest.raises(ValueError):
        GaussianState([0, 0, 0], np.eye(3))


def test_sld_score_thermal():
    nbar = 0.7
    r = 1 / (nbar + 0.5)
    st = GaussianState.thermal(1, nbar)
    Om = symplectic_form(1)
    for j in range(2):
        off, coeff = sld_score_gaussian(st, j)
        assert off == 0 and np.allclose(coeff, r * Om[j])
    _, C = kick_scores_gaussian(st)
    assert np.allclose(C, r * np.eye(2))
    _, C_hot = kick_scores_gaussian(GaussianState.thermal(1, 1e8))
    assert np.abs(C_hot).max() < 1e-7
    with pytest.raises(OperatorError):
        sld_score_gaussian(GaussianState([0, 0], np.diag([1.0, 0.0])), 0)


def test_sld_score_matches_fock_oracle():
    N = 40
    rho = fock_gaussian_state(N)
    st, Q = fock_moments(rho, N)
    assert st.uncertainty_min_eig() > -1e-10
    E = PetzDensityMap(rho, HELSTROM, cond_tol=1e-300)
    keep = slice(0, 10)
    for j in range(2):
        tangent = 1j * commutator(Q[j], rho)
        X = E.apply_inverse(tangent)
        off, coeff = sld_score_gaussian(st, j)
        pred = off * np.eye(N + 1) + sum(c * q for c, q in zip(coeff, Q))
        assert np.allclose(X[keep, keep], pred[keep, keep], atol=1e-6)


def test_push_pull_identity_channel():
    st = GaussianState([0.3, -0.1], np.array([[1.0, 0.2], [0.2, 0.8]]))
    res = channel_push_pull(GaussianChannel(np.zeros(2), np.eye(2), np.zeros((2, 2))), st)
    assert np.allclose(res["pull"][1], np.eye(2)) and np.allclose(res["pull"][0], 0)
    assert np.allclose(res["push"][1], np.eye(2)) and np.allclose(res["push"][0], 0)
    assert np.allclose(res["output"].Sigma, st.Sigma)


def test_push_for_thermal_channel_is_transpose():
    om, ga, nbar, t = [[1.0]], [[0.5]], 1.0, 0.8
    ch = thermal_channel(om, ga, nbar, t)
    assert ch.cp_min_eig() >= -1e-10
    res = channel_push_pull(ch, GaussianState.thermal(1, nbar))
    assert np.allclose(res["push"][1], ch.F.T, atol=1e-12)
    assert np.allclose(res["output"].Sigma, (nbar + 0.5) * np.eye(2))


def test_push_is_helstrom_weighted_adjoint_of_pull(rng):
    """Moment-matching oracle: <B, F_* A>_out = <F^* B, A>_in for linear observables."""
    for _ in range(5):
        F = rng.normal(size=(2, 2))
        X = rng.normal(size=(2, 2))
        S = X @ X.T + 2 * np.eye(2)
        ch = GaussianChannel(rng.normal(size=2), F, S)
        Y = rng.normal(size=(2, 2))
        st = GaussianState(rng.normal(size=2), Y @ Y.T + np.eye(2))
        res = channel_push_pull(ch, st)
        out = res["output"]
        assert np.allclose(out.m, F @ st.m + ch.l, atol=1e-12)
        assert np.allclose(out.Sigma, F @ st.Sigma @ F.T + S, atol=1e-12)
        off, Ft = res["push"]
        # F_* Q evaluated on the output mean returns the input mean
        assert np.allclose(off + Ft @ out.m, st.m, atol=1e-10)
        a, b = rng.normal(size=2), rng.normal(size=2)
        assert b @ out.Sigma @ (Ft.T @ a) == pytest.approx(b @ F @ st.Sigma @ a, abs=1e-10)


def test_push_matches_fock_retrodiction():
    """``F_* Q`` from the Gaussian formula against ``E_out^{-1} F E_in Q`` in Fock space."""
    N = 40
    om, ga, nbar, t = [[0.8]], [[0.3]], 0.3, 0.6
    c = BosonicCoupling(om, ga, nbar, N)
    Fsup = superop_exp(generator(bosonic_model(c)), t)
    rho = fock_gaussian_state(N)
    rho_t = unvec(Fsup @ vec(rho))
    rho_t = 0.5 * (rho_t + dag(rho_t))
    st, Q = fock_moments(rho, N)
    res = channel_push_pull(thermal_channel(om, ga, nbar, t), st)
    off, Ft = res["push"]
    Ein = PetzDensityMap(rho, HELSTROM, cond_tol=1e-300)
    Eout = PetzDensityMap(rho_t, HELSTROM, cond_tol=1e-300)
    keep = slice(0, 10)
    for j in range(2):
        num = Eout.apply_inverse(unvec(Fsup @ vec(Ein.apply(Q[j]))))
        pred = off[j] * np.eye(N + 1) + sum(Ft[j, k] * Q[k] for k in range(2))
        assert np.allclose(num[keep, keep], pred[keep, keep], atol=1e-6)


def test_closed_form_example():
    cf = closed_form_onsager([[1.0]], [[0.5]], 1.0)
    assert cf.r == pytest.approx(2 / 3)
    assert np.allclose(cf.O, (2 / 3) * np.array([[0.25, -1], [1, 0.25]]))
    assert np.allclose(cf.J(0.0), cf.r * np.eye(2))
    assert np.abs(cf.J(200.0)).max() < 1e-20
    with pytest.raises(OperatorError):
        closed_form_onsager([[1.0]], [[-0.5]], 1.0)


def test_closed_form_k0_identities(rng):
    om = random_hermitian(2, rng)
    G = random_operator(2, rng)
    ga = G @ dag(G)
    cf = closed_form_onsager(om, ga, 0.4)
    assert np.allclose(cf.K(0.0), cf.O + cf.O.T, atol=1e-14)
    assert np.allclose(cf.K(0.0), gamma_block(ga, cf.r), atol=1e-14)
    h = 1e-4
    dJ = (cf.J(0.5 + h) - cf.J(0.5 - h)) / (2 * h)
    assert np.allclose(cf.K(0.5), -dJ, atol=1e-7)


def test_closed_form_reverse_model(rng):
    om = random_hermitian(2, rng)
    G = random_operator(2, rng)
    ga = G @ dag(G)
    O = closed_form_onsager(om, ga, 0.4).O
    Orev = closed_form_onsager(om.conj(), ga.conj(), 0.4).O
    T = kick_transform(2)
    assert np.allclose(Orev, T @ O.T @ T, atol=1e-14)


def test_fock_compare_small_nbar():
    c = BosonicCoupling([[1.0]], [[0.5]], 0.2, 20)
    table = fock_compare(c, np.linspace(0, 2, 6))
    assert all(table[0][k] < 1e-4 for k in ("J", "K", "O"))


def test_fock_compare_unitary_dynamics():
    c = BosonicCoupling([[1.0]], [[0.0]], 0.2, 15)
    from qonsager.gaussian import _fock_profile
    prof, _ = _fock_profile(c, np.linspace(0, 1, 3))
    assert np.abs(prof.K).max() < 1e-12
    cf = closed_form_onsager([[1.0]], [[0.0]], 0.2)
    assert np.abs(cf.K(0.7)).max() < 1e-14


def test_fock_compare_exposes_inadequate_truncation():
    c = BosonicCoupling([[1.0]], [[0.5]], 3.0, 4)
    table = fock_compare(c, [0.0, 0.5])
    assert table[0]["J"] > 1e-2
    assert table[1]["J"] < table[0]["J"]
