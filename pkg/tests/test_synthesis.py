import math
from fractions import Fraction

import numpy as np
import pytest

from midpredict.polynomials import sturm_root_certificate
from midpredict.synthesis import (
    GainVector,
    delay_free_poly,
    gain_from_derivative_system,
    gain_star,
    multiplicity_at,
    q_coefficients,
    q_poly,
    rk_poly,
    rk_terms,
    scale_gain,
    sigma_star,
)


def test_q_coefficients_small():
    assert q_coefficients(1) == [1, 1]
    assert q_coefficients(2) == [2, 4, 1]
    assert q_coefficients(3) == [6, 18, 9, 1]


def test_q_dimension_bounds():
    with pytest.raises(ValueError):
        q_coefficients(0)
    with pytest.raises(ValueError):
        q_coefficients(61)
    q_coefficients(60)  # boundary accepted


def test_q_root_certificates():
    for n in range(1, 21):
        count, distinct = sturm_root_certificate(q_poly(n))
        assert count == n
        assert distinct is True


def test_sigma_star_values():
    assert sigma_star(1) == pytest.approx(-1.0, abs=1e-14)
    assert sigma_star(2) == pytest.approx(-2.0 + math.sqrt(2.0), abs=1e-12)
    # independent check for n=3: exact Sturm bisection on q_3
    from midpredict.polynomials import count_real_roots_between

    p3 = q_poly(3)
    lo, hi = Fraction(-1), Fraction(0)
    for _ in range(60):
        mid = (lo + hi) / 2
        if count_real_roots_between(p3, mid, hi) >= 1:
            lo = mid
        else:
            hi = mid
    assert sigma_star(3) == pytest.approx(float((lo + hi) / 2), abs=1e-12)


def test_rk_poly_base_case():
    for n in (1, 3, 5):
        p = rk_poly(n, 0, 0.7)
        expect = [0.0] * n + [1.0]
        assert list(p.coeffs) == expect


def test_rk_poly_examples():
    p = rk_poly(2, 2, 1.0)
    assert list(p.coeffs) == [2.0, 4.0, 1.0]
    p = rk_poly(2, 1, 0.0)
    assert list(p.coeffs) == [0.0, 2.0]


def test_rk_matches_q_exactly():
    # collapsing the delay power onto the variable turns the n-th
    # derivative polynomial into q, as exact integers
    for n in range(1, 21):
        terms = rk_terms(n, n)
        coeffs = [0] * (n + 1)
        for s_pow, d_pow, coef in terms:
            assert s_pow == d_pow
            coeffs[s_pow] += coef
        assert coeffs == q_coefficients(n)


def test_gain_star_reference_values():
    g = gain_star(2)
    assert g.l[0] == pytest.approx(0.4612, abs=5e-5)
    assert g.l[1] == pytest.approx(0.0791, abs=5e-5)
    assert g.sigma_star == pytest.approx(-2.0 + math.sqrt(2.0), abs=1e-12)
    g1 = gain_star(1)
    assert g1.l[0] == pytest.approx(math.exp(-1.0), abs=1e-15)


def test_gain_star_closed_forms_n2():
    sig = -2.0 + math.sqrt(2.0)
    g = gain_star(2)
    assert g.l[0] == pytest.approx((-2.0 - sig) * sig * math.exp(sig), rel=1e-13)
    assert g.l[1] == pytest.approx((1.0 + sig) * sig ** 2 * math.exp(sig), rel=1e-13)


def test_gain_star_matches_linear_system():
    for n in range(1, 13):
        a = gain_star(n)
        b = gain_from_derivative_system(n)
        for x, y in zip(a.l, b.l):
            assert abs(x - y) <= 1e-9 * max(abs(y), 1e-300)


def test_gain_vector_invariants():
    with pytest.raises(ValueError):
        GainVector((1.0, 0.0), 2)
    with pytest.raises(ValueError):
        GainVector((1.0,), 2)
    with pytest.raises(ValueError):
        GainVector((math.inf, 1.0), 2)


def test_scale_gain():
    g = gain_star(2)
    same = scale_gain(g, 1.0)
    assert same.l == g.l
    quarter = scale_gain(g, 0.25)
    assert quarter.l[0] == pytest.approx(g.l[0] / 0.25, rel=1e-15)
    assert quarter.l[1] == pytest.approx(g.l[1] / 0.25 ** 2, rel=1e-15)
    g1 = scale_gain(gain_star(1), 2.0)
    assert g1.l[0] == pytest.approx(math.exp(-1.0) / 2.0, rel=1e-15)
    with pytest.raises(ValueError):
        scale_gain(g, 0.0)


def test_multiplicity_at_designed_root():
    g = gain_star(2)
    assert multiplicity_at(g, 1.0, g.sigma_star) == 3


def test_multiplicity_at_classic_double_root():
    g = gain_star(1)
    assert multiplicity_at(g, 1.0, -1.0) == 2


def test_multiplicity_at_nonroot():
    g = GainVector((1.0, 1.0), 2)
    assert multiplicity_at(g, 1.0, 0.0) == 0


def test_multiplicity_scaling_consistency():
    for n in (1, 2, 3):
        g = gain_star(n)
        for delta in (0.25, 1.0, 2.0):
            scaled = scale_gain(g, delta)
            assert multiplicity_at(scaled, delta, g.sigma_star / delta) == n + 1


def test_factorization_of_designed_loop():
    # with an (n+1)-fold root the characteristic function factors through
    # an integral remainder; quadrature on the remainder must reproduce it
    import cmath

    n = 2
    g = gain_star(n)
    sig = g.sigma_star
    qc = q_coefficients(n)

    def q_at(x):
        acc = 0.0
        for c in reversed(qc):
            acc = acc * x + c
        return acc

    def integrand(theta, s):
        return q_at(theta * sig) * cmath.exp(-(s - sig) * theta)

    def simpson(f, a, b, m=1):
        mid = (a + b) / 2
        return (b - a) / 6.0 * (f(a) + 4.0 * f(mid) + f(b))

    def adaptive(f, a, b, tol, whole=None, depth=0):
        if whole is None:
            whole = simpson(f, a, b)
        mid = (a + b) / 2
        left = simpson(f, a, mid)
        right = simpson(f, mid, b)
        if abs(left + right - whole) <= 15 * tol or depth > 30:
            return left + right + (left + right - whole) / 15.0
        return adaptive(f, a, mid, tol / 2, left, depth + 1) + adaptive(
            f, mid, b, tol / 2, right, depth + 1
        )

    rng = np.random.default_rng(3)
    for _ in range(20):
        s = complex(rng.uniform(-5, 5), rng.uniform(-5, 5))
        if abs(s - sig) < 0.3:
            continue
        integral = adaptive(lambda th: integrand(th, s), 0.0, 1.0, 1e-12)
        rhs = (s - sig) ** (n + 1) * integral / math.factorial(n)
        lhs = s ** n + (g.l[0] * s + g.l[1]) * cmath.exp(-s)
        assert abs(lhs - rhs) <= 1e-7 * max(abs(lhs), 1.0)


def test_delay_free_poly():
    g = GainVector((2.0, 1.0), 2)
    assert delay_free_poly(g).coeffs == (1.0, 2.0, 1.0)
