import math

import numpy as np
import pytest

from midpredict.gainmargin import (
    ChainDesign,
    LmiVariables,
    assemble_W,
    design_chain,
    lmi_feasible,
    max_gain_margin,
    upper_bound_gamma,
    verify_certificate,
)
from midpredict.synthesis import gain_star

G1 = gain_star(1)
G2 = gain_star(2)


def _zeros(n):
    return LmiVariables(*[np.zeros((n, n)) for _ in range(6)])


def test_assemble_w_zero_variables():
    w = assemble_W(2, G2, 1.0, 0.0, _zeros(2))
    assert np.allclose(w[:6, :6], 0.0)
    assert np.allclose(w[6:, 6:], -np.eye(2))


def test_assemble_w_scalar_hand_values():
    ones = LmiVariables(*[np.ones((1, 1)) for _ in range(6)])
    w = assemble_W(1, G1, 1.0, 0.0, ones)
    assert w[0, 0] == pytest.approx(0.0, abs=1e-15)
    assert w[0, 2] == pytest.approx(1.0 - math.exp(-1.0), abs=1e-15)
    assert w[3, 3] == pytest.approx(1.0, abs=1e-15)  # P4' + P4 - I with ones


def test_assemble_w_symmetric_random():
    rng = np.random.default_rng(0)
    for n in (1, 2, 3):
        gain = gain_star(n)
        variables = LmiVariables(
            *[rng.standard_normal((n, n)) for _ in range(6)]
        )
        sym = LmiVariables(
            P=(variables.P + variables.P.T) / 2,
            R=(variables.R + variables.R.T) / 2,
            S=(variables.S + variables.S.T) / 2,
            P2=variables.P2,
            P3=variables.P3,
            P4=variables.P4,
        )
        w = assemble_W(n, gain, 1.3, 0.2, sym)
        assert np.linalg.norm(w - w.T) == 0.0


def test_assemble_w_rejects_bad_shapes():
    with pytest.raises(ValueError):
        assemble_W(2, G2, 1.0, 0.0, _zeros(3))
    with pytest.raises(ValueError):
        assemble_W(2, G2, 0.0, 0.0, _zeros(2))


def test_feasible_at_zero_slope():
    ok, cert = lmi_feasible(1, G1, 1.0, 0.0)
    assert ok
    assert verify_certificate(1, G1, 1.0, 0.0, cert, 1e-6)


def test_feasible_below_reported_margin():
    ok, cert = lmi_feasible(2, G2, 1.0, 0.06)
    assert ok
    assert verify_certificate(2, G2, 1.0, 0.06, cert, 1e-6 * (1 + 0.06 ** 2))


def test_infeasible_above_analytic_ceiling():
    ok, info = lmi_feasible(2, G2, 1.0, 0.10, budget_iters=300)
    assert not ok
    assert info == "unknown"


def test_rejects_negative_slope():
    with pytest.raises(ValueError):
        lmi_feasible(2, G2, 1.0, -0.1)


def test_certificate_survives_smaller_slopes():
    # shrinking the slope only shrinks the first diagonal block, so one
    # certificate re-verifies at every smaller slope
    for n, gamma_hi in ((1, 0.3), (2, 0.05)):
        gain = gain_star(n)
        eps = 1e-6 * (1 + gamma_hi ** 2)
        ok, cert = lmi_feasible(n, gain, 1.0, gamma_hi)
        assert ok
        rng = np.random.default_rng(n)
        for gamma in rng.uniform(0.0, gamma_hi, 5):
            assert verify_certificate(n, gain, 1.0, float(gamma), cert, 1e-6)


def test_upper_bound_is_trailing_gain():
    assert upper_bound_gamma(2) == pytest.approx(0.0791, abs=5e-5)
    assert upper_bound_gamma(1) == pytest.approx(math.exp(-1.0), abs=1e-15)
    # consistency: the value of the loop at s = 0 equals the trailing gain
    from midpredict.spectrum import Quasipolynomial, qp_eval

    qp = Quasipolynomial(2, G2.l, 1.0)
    assert qp_eval(qp, 0.0).real - upper_bound_gamma(2) == pytest.approx(0.0, abs=1e-18)


def test_max_gain_margin_n1_bracket():
    bracket = max_gain_margin(1, tol=0.02 * math.exp(-1.0))
    assert 0.0 < bracket.lower <= bracket.upper
    assert bracket.upper == pytest.approx(math.exp(-1.0), abs=1e-15)
    assert bracket.certificate is not None
    assert verify_certificate(
        1, G1, 1.0, bracket.lower, bracket.certificate, 1e-8
    )


def test_design_chain_benchmark_numbers():
    chain = design_chain(2, 1.1, 0.25, 0.0673)
    assert chain.lambda_star == pytest.approx(1.1 / 0.0673, rel=1e-12)
    assert chain.N == 5
    assert chain.lam == pytest.approx(20.0, abs=1e-12)
    assert chain.sigma_star_per_t == pytest.approx(20.0 * G2.sigma_star, rel=1e-12)


def test_design_chain_no_nonlinearity():
    chain = design_chain(2, 0.0, 2.0, 0.05)
    assert chain.lambda_star == 1.0
    assert chain.N == 2
    assert chain.lam == 1.0
    chain = design_chain(2, 1.1, 0.01, 0.0673)
    assert chain.N == 1
    assert chain.lam == 100.0


def test_design_chain_unit_normalized_delay():
    rng = np.random.default_rng(1)
    for _ in range(50):
        gamma_phi = float(rng.uniform(0.0, 3.0))
        gamma_m = float(rng.uniform(0.01, 0.5))
        h = float(rng.uniform(0.05, 3.0))
        chain = design_chain(2, gamma_phi, h, gamma_m)
        assert chain.lam * h / chain.N == pytest.approx(1.0, rel=1e-12)
        assert chain.N >= chain.lambda_star * h - 1e-9
        assert chain.lambda_star >= 1.0


def test_design_chain_rejects_bad_inputs():
    with pytest.raises(ValueError):
        design_chain(2, 1.0, 0.25, 0.0)
    with pytest.raises(ValueError):
        design_chain(2, -1.0, 0.25, 0.1)
    with pytest.raises(ValueError):
        design_chain(2, 1.0, 0.0, 0.1)
