import cmath
import math

import numpy as np
import pytest

from midpredict.spectrum import (
    Quasipolynomial,
    RootOnContourError,
    count_roots_region,
    default_certification_rect,
    qp_deriv,
    qp_eval,
    qp_kth_deriv,
    rightmost_in_region,
    roots_in_region,
)
from midpredict.synthesis import gain_star, scale_gain

G2 = gain_star(2)
QP2 = Quasipolynomial(2, G2.l, 1.0)
QP1 = Quasipolynomial(1, (math.exp(-1.0),), 1.0)


def test_invariants_of_quasipolynomial():
    with pytest.raises(ValueError):
        Quasipolynomial(2, (1.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        Quasipolynomial(2, (1.0, 1.0), -0.5)


def test_qp_eval_at_zero_is_trailing_gain():
    assert qp_eval(QP2, 0.0) == pytest.approx(G2.l[1], abs=1e-15)


def test_qp_eval_designed_root():
    assert abs(qp_eval(QP2, G2.sigma_star)) < 1e-10


def test_qp_eval_classic_double_root():
    assert abs(qp_eval(QP1, -1.0)) < 1e-15


def test_qp_eval_array_matches_scalar():
    z = np.array([0.3 + 0.2j, -1.0 + 0.0j, -0.5 + 2.0j])
    vec = qp_eval(QP2, z)
    for zi, vi in zip(z, vec):
        assert vi == pytest.approx(qp_eval(QP2, complex(zi)), rel=1e-14)


def test_qp_derivatives_finite_difference():
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = complex(rng.uniform(-2, 1), rng.uniform(-3, 3))
        step = 1e-6
        fd = (qp_eval(QP2, s + step) - qp_eval(QP2, s - step)) / (2 * step)
        assert qp_deriv(QP2, s) == pytest.approx(fd, rel=1e-7, abs=1e-9)
        fd2 = (qp_deriv(QP2, s + step) - qp_deriv(QP2, s - step)) / (2 * step)
        assert qp_kth_deriv(QP2, s, 2) == pytest.approx(fd2, rel=1e-6, abs=1e-8)


def test_count_double_root_region():
    assert count_roots_region(QP1, (-2.0, 0.0, -1.0, 1.0)) == 2


def test_count_triple_root_region():
    assert count_roots_region(QP2, (-3.0, 0.5, -5.0, 5.0)) == 3


def test_count_right_half_plane_stable():
    assert count_roots_region(QP2, (0.1, 2.0, -3.0, 3.0)) == 0


def test_count_root_on_contour_raises():
    with pytest.raises(RootOnContourError):
        count_roots_region(QP1, (-1.0, 0.0, -1.0, 1.0))


def test_roots_in_region_designed_loop():
    res = roots_in_region(QP2, (-6.0, 1.0, 0.0, 30.0), 32)
    dominant = res.dominant
    assert dominant == pytest.approx(G2.sigma_star, abs=1e-9)
    mults = {m for s, m in res.roots if abs(s - G2.sigma_star) < 1e-6}
    assert mults == {3}
    for s, m in res.roots:
        if abs(s - G2.sigma_star) > 1e-6:
            assert s.real < G2.sigma_star
            assert m == 1
    assert sum(m for _, m in res.roots) == res.count_by_argument_principle


def test_roots_in_region_classic_double():
    res = roots_in_region(QP1, (-2.0, 0.0, -1.0, 1.0), 32)
    assert len(res.roots) == 1
    s, m = res.roots[0]
    assert s == pytest.approx(-1.0, abs=1e-9)
    assert m == 2


def test_roots_in_region_beyond_delay_margin():
    qp = Quasipolynomial(2, G2.l, 3.0)
    res = roots_in_region(qp, (-0.5, 1.0, 0.0, 2.0), 48)
    assert any(s.real > 0 for s, _ in res.roots)


def test_roots_delay_free_quadratic():
    qp0 = Quasipolynomial(2, G2.l, 0.0)
    res = roots_in_region(qp0, (-1.0, 0.5, -1.0, 1.0), 64)
    expected = np.roots([1.0, G2.l[0], G2.l[1]])
    found = sorted((s for s, _ in res.roots), key=lambda z: z.imag)
    for f, e in zip(found, sorted(expected, key=lambda z: z.imag)):
        assert f == pytest.approx(e, abs=1e-9)


def test_rightmost_in_region():
    assert rightmost_in_region(QP2, (-6.0, 1.0, 0.0, 30.0), 32) == pytest.approx(
        G2.sigma_star, abs=1e-9
    )
    scaled = scale_gain(G2, 0.25)
    qph = Quasipolynomial(2, scaled.l, 0.25)
    assert rightmost_in_region(qph, (-12.0, 1.0, 0.0, 40.0), 32) == pytest.approx(
        G2.sigma_star / 0.25, abs=1e-8
    )


def test_conjugate_symmetry():
    qp = Quasipolynomial(2, G2.l, 2.0)
    res = roots_in_region(qp, (-3.0, 0.5, -8.0, 8.0), 32)
    complex_roots = [s for s, _ in res.roots if abs(s.imag) > 1e-9]
    for s in complex_roots:
        partner = min(complex_roots, key=lambda z: abs(z - s.conjugate()))
        assert partner == pytest.approx(s.conjugate(), abs=1e-9)


def test_argument_principle_consistency_randomized():
    rng = np.random.default_rng(11)
    done = 0
    attempts = 0
    while done < 30 and attempts < 200:
        attempts += 1
        n = int(rng.integers(1, 5))
        gains = rng.standard_normal(n)
        gains[-1] = math.copysign(max(abs(gains[-1]), 0.1), gains[-1])
        delta = float(rng.uniform(0.0, 3.0))
        qp = Quasipolynomial(n, tuple(gains), delta)
        re0 = float(rng.uniform(-3.0, -0.5))
        re1 = re0 + float(rng.uniform(1.0, 3.0))
        im0 = float(rng.uniform(-3.0, 0.0))
        im1 = im0 + float(rng.uniform(1.0, 3.0))
        try:
            res = roots_in_region(qp, (re0, re1, im0, im1), 32)
            inner = count_roots_region(qp, (re0, re1, im0, im1))
        except RootOnContourError:
            continue
        # the region count uses the closed-rectangle convention, so only
        # compare when no root hugs the boundary
        if any(
            min(abs(s.real - re0), abs(s.real - re1), abs(s.imag - im0), abs(s.imag - im1))
            < 1e-6
            for s, _ in res.roots
        ):
            continue
        assert sum(m for _, m in res.roots) == inner
        done += 1
    assert done == 30


def test_scaling_law_of_roots():
    # rescaled gains at the matching delay reproduce the unit-delay
    # spectrum divided by the delay
    base = roots_in_region(QP2, (-4.0, 1.0, 0.0, 10.0), 32)
    for delta in (0.5, 2.0):
        scaled = scale_gain(G2, delta)
        qp = Quasipolynomial(2, scaled.l, delta)
        rect = (-4.0 / delta, 1.0 / delta, 0.0, 10.0 / delta)
        res = roots_in_region(qp, rect, max(32, int(32 * delta)))
        assert len(res.roots) == len(base.roots)
        for (s, m), (bs, bm) in zip(res.roots, base.roots):
            assert m == bm
            assert s == pytest.approx(bs / delta, abs=1e-7)


def test_high_frequency_dominance_bound():
    # on the certification boundary the delayed part stays strictly below
    # the polynomial part, so no roots hide beyond the searched strip
    delta = 1.0
    sig = G2.sigma_star
    for im in (200.0, 250.0, 400.0):
        for re in np.linspace(sig, 2.0, 20):
            s = complex(re, im)
            delayed = abs((G2.l[0] * s + G2.l[1]) * cmath.exp(-delta * s))
            assert delayed < abs(s ** 2)


def test_default_certification_rect():
    rect = default_certification_rect(-0.5857, 1.0)
    assert rect[0] == pytest.approx(-8.5857)
    assert rect[1] == 1.0
    assert rect[2] == 0.0
    assert rect[3] == 50.0
    rect_small = default_certification_rect(-0.5, 0.05)
    assert rect_small[3] == pytest.approx(6 * math.pi / 0.1)
