import math

import numpy as np
import pytest

from artifact.equilibrium import compute_beta
from artifact.lmi import (LmiError, LmiSolveConfig, assemble_bounding_lmi,
                          assemble_schur_lmi, assemble_stability_lmi,
                          certificate_from_text, certificate_to_text,
                          load_incident_edges, max_gamma, normalized_slack,
                          psd_slack, solve_certificate)
from artifact.netmodel import build_system_matrices, line_selector


@pytest.fixture(scope="module")
def two_bus(model2):
    mats = build_system_matrices(model2)
    sel = line_selector(model2, (1, 2))
    beta = compute_beta(model2, np.pi / 10).beta
    return mats, sel, beta


# redeclare session fixtures at module scope for the helper above
@pytest.fixture(scope="module")
def model2():
    from conftest import load_model
    return load_model("case2.json")


def test_psd_slack_known_values():
    assert psd_slack(np.eye(3)) == pytest.approx(1.0)
    assert psd_slack(-np.eye(3)) == pytest.approx(-1.0)
    assert psd_slack(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(1.0)
    with pytest.raises(LmiError, match="symmetric"):
        psd_slack(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_zero_certificate_assembles_to_zero(two_bus):
    mats, sel, beta = two_bus
    ne = mats.n_edges
    Z = np.zeros((mats.n + mats.m, mats.n + mats.m))
    M = assemble_stability_lmi(mats, beta, Z, np.zeros(ne), np.zeros(ne))
    assert np.allclose(M, 0.0)


def test_beta_changes_only_top_left(two_bus, witness2):
    mats, sel, beta = two_bus
    Q, K, H = witness2.Q, witness2.K, witness2.H
    M0 = assemble_stability_lmi(mats, 0.0, Q, K, H)
    M1 = assemble_stability_lmi(mats, beta, Q, K, H)
    nx = mats.n + mats.m
    C, Hd = mats.C, np.diag(H)
    diff = M1[:nx, :nx] - M0[:nx, :nx]
    assert np.allclose(diff, -2 * beta * C.T @ Hd @ C)
    # the off-diagonal block shifts by exactly -beta C'H
    assert np.allclose(M1[:nx, nx:] - M0[:nx, nx:], -beta * C.T @ Hd)


def test_bounding_reduces_to_stability_at_gamma_zero(two_bus, witness2):
    mats, sel, beta = two_bus
    Q, K, H = witness2.Q, witness2.K, witness2.H
    M0 = assemble_stability_lmi(mats, beta, Q, K, H)
    Mg = assemble_bounding_lmi(mats, beta, 0.0, sel, Q, K, H)
    assert np.allclose(M0, Mg)


def test_schur_bounding_sign_agreement(two_bus):
    # Eq. 19 is NSD iff Eq. 17 is NSD whenever H > 0
    mats, sel, beta = two_bus
    rng = np.random.default_rng(7)
    ne = mats.n_edges
    nx = mats.n + mats.m
    agree = 0
    for _ in range(100):
        A = rng.normal(size=(nx, nx))
        Q = A @ A.T * 0.05 + 1e-4 * np.eye(nx)
        K = rng.uniform(0, 0.3, ne)
        H = rng.uniform(1e-3, 0.5, ne)
        g = rng.uniform(0.1, 10.0)
        s17 = psd_slack(assemble_bounding_lmi(mats, beta, g, sel, Q, K, H))
        s19 = psd_slack(assemble_schur_lmi(mats, beta, g, sel, Q, K, H))
        if (s17 <= 1e-10) == (s19 <= 1e-10):
            agree += 1
    assert agree == 100


def test_scaling_identity(two_bus, witness2):
    # M(cQ, cK, cH; gamma) == c * M(Q, K, H; c*gamma)
    mats, sel, beta = two_bus
    Q, K, H = witness2.Q, witness2.K, witness2.H
    for c in (0.3, 2.0, 17.0):
        left = assemble_bounding_lmi(mats, beta, 1.5, sel, c * Q, c * K,
                                     c * H)
        right = c * assemble_bounding_lmi(mats, beta, c * 1.5, sel, Q, K, H)
        assert np.allclose(left, right, atol=1e-12)


def test_witness_feasible_at_gamma7(two_bus, witness2):
    mats, sel, beta = two_bus
    M = assemble_bounding_lmi(mats, witness2.beta, 7.0, sel, witness2.Q,
                              witness2.K, witness2.H)
    assert psd_slack(M) <= 1e-4


def test_max_gamma_on_witness(two_bus, witness2):
    mats, sel, _ = two_bus
    gstar = max_gamma(mats, witness2.beta, sel, witness2.Q,
                      np.diag(witness2.K), np.diag(witness2.H))
    assert gstar >= 7.0
    half = max_gamma(mats, witness2.beta, sel, 2 * witness2.Q,
                     2 * np.diag(witness2.K), 2 * np.diag(witness2.H))
    assert half == pytest.approx(gstar / 2, rel=1e-4)


def test_max_gamma_unbounded_when_decoupled(two_bus, witness2):
    mats, sel, _ = two_bus
    # a Q whose range is orthogonal to B d: QBd = 0 kills the gamma term
    Bd = (mats.B @ sel.vector).reshape(-1, 1)
    P = np.eye(2) - Bd @ Bd.T / float(Bd.T @ Bd)
    Q = P @ P.T + 1e-9 * np.eye(2)
    assert np.linalg.norm(Q @ mats.B @ sel.vector) < 1e-8
    # use a certificate trivially feasible at gamma=0: K=H=0 won't be
    # stable, so just verify the doubling cap behavior via the gamma term
    K = np.zeros(1)
    H = np.zeros(1)
    M0 = assemble_stability_lmi(mats, 0.0, Q, K, H)
    if psd_slack(M0) <= 1e-8:
        assert max_gamma(mats, 0.0, sel, Q, K, H) == math.inf


def test_solve_certificate_two_bus(two_bus, model2):
    mats, sel, beta = two_bus
    res = solve_certificate(mats, beta, 7.0, sel, model=model2)
    assert res.status == "ok"
    cert = res.certificate
    # re-verification: independently assembled Eq. 17 is NSD
    slack = normalized_slack(assemble_bounding_lmi(
        mats, beta, 7.0, sel, cert.Q, cert.K, cert.H))
    assert slack <= 1e-8
    assert np.min(np.linalg.eigvalsh(cert.Q)) >= 0.9e-6
    assert np.all(cert.H >= 1e-8) and np.all(cert.K >= 0)


def test_solve_certificate_rejects_huge_gamma(two_bus, model2):
    mats, sel, beta = two_bus
    res = solve_certificate(mats, beta, 1e9, sel, model=model2)
    assert res.status in ("infeasible", "nonconverged")


def test_load_incident_edges():
    from conftest import load_model
    m9 = load_model("case9.json")
    # every nine-bus edge touches a load bus
    assert load_incident_edges(m9) == list(range(9))
    m3 = load_model("case3.json")
    assert load_incident_edges(m3) == []


def test_certificate_text_roundtrip(witness2):
    text = certificate_to_text(witness2)
    back = certificate_from_text(text)
    assert np.array_equal(back.Q, witness2.Q)
    assert np.array_equal(back.K, witness2.K)
    assert np.array_equal(back.H, witness2.H)
    assert back.gamma == witness2.gamma and back.beta == witness2.beta
