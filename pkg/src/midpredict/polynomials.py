"""Dense real polynomials plus exact Sturm-sequence root counting.

Coefficients are stored ascending by degree. Root counting runs in exact
rational arithmetic (the float coefficients convert to binary rationals
without error), so certificates like "this polynomial has exactly k distinct
negative real roots" are decisions, not estimates.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np

__all__ = [
    "RealPolynomial",
    "sturm_root_certificate",
    "count_real_roots_below",
    "count_real_roots_above",
    "count_real_roots_between",
    "rightmost_root",
    "unstable_root_count",
]


@dataclass(frozen=True)
class RealPolynomial:
    """Polynomial with real coefficients, ascending degree order."""

    coeffs: tuple

    def __post_init__(self):
        trimmed = list(self.coeffs)
        while len(trimmed) > 1 and trimmed[-1] == 0:
            trimmed.pop()
        object.__setattr__(self, "coeffs", tuple(float(c) for c in trimmed))

    @property
    def degree(self):
        return len(self.coeffs) - 1

    def __call__(self, s):
        acc = 0.0 * s + self.coeffs[-1]
        for c in reversed(self.coeffs[:-1]):
            acc = acc * s + c
        return acc

    def derivative(self):
        if self.degree == 0:
            return RealPolynomial((0.0,))
        return RealPolynomial(tuple(k * c for k, c in enumerate(self.coeffs) if k > 0))

    def coeff_norm(self):
        return float(np.linalg.norm(self.coeffs))


def _to_int_poly(coeffs):
    """Exact conversion of float/Fraction coefficients to an integer list."""
    fracs = [Fraction(c) for c in coeffs]
    denom = 1
    for f in fracs:
        denom = denom * f.denominator // gcd(denom, f.denominator)
    ints = [int(f * denom) for f in fracs]
    while len(ints) > 1 and ints[-1] == 0:
        ints.pop()
    return ints


def _primitive(p):
    content = 0
    for c in p:
        content = gcd(content, abs(c))
    if content > 1:
        p = [c // content for c in p]
    return p


def _pseudo_rem(a, b):
    """Integer pseudo-remainder of a by b with the sign of the true remainder."""
    da, db = len(a) - 1, len(b) - 1
    lc = b[-1]
    r = list(a)
    steps = da - db + 1
    for _ in range(steps):
        dr = len(r) - 1
        if dr < db or all(c == 0 for c in r):
            r = [c * lc for c in r]
            continue
        factor = r[-1]
        r = [c * lc for c in r]
        shift = dr - db
        for i, c in enumerate(b):
            r[i + shift] -= factor * c
        while len(r) > 1 and r[-1] == 0:
            r.pop()
    if lc < 0 and steps % 2 == 1:
        r = [-c for c in r]
    return r


def _sturm_chain(coeffs):
    p = _primitive(_to_int_poly(coeffs))
    if len(p) == 1:
        return [p]
    dp = _primitive([k * c for k, c in enumerate(p) if k > 0])
    chain = [p, dp]
    while len(chain[-1]) > 1:
        rem = _pseudo_rem(chain[-2], chain[-1])
        rem = [-c for c in rem]
        if all(c == 0 for c in rem):
            break
        chain.append(_primitive(rem))
    return chain


def _eval_int_poly(p, x):
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def _sign_at(p, x):
    if x == "+inf":
        v = p[-1]
    elif x == "-inf":
        v = p[-1] * (-1) ** (len(p) - 1)
    else:
        v = _eval_int_poly(p, x)
    return (v > 0) - (v < 0)


def _variations(chain, x):
    signs = [s for s in (_sign_at(p, x) for p in chain) if s != 0]
    return sum(1 for a, b in zip(signs, signs[1:]) if a * b < 0)


def _chain_and_variations(coeffs, points):
    chain = _sturm_chain(coeffs)
    return chain, [_variations(chain, x) for x in points]


def count_real_roots_below(p, x):
    """Distinct real roots of p in (-inf, x], exact."""
    _, (va, vb) = _chain_and_variations(p.coeffs, ["-inf", Fraction(x)])
    return va - vb


def count_real_roots_above(p, x):
    """Distinct real roots of p in (x, +inf), exact."""
    _, (va, vb) = _chain_and_variations(p.coeffs, [Fraction(x), "+inf"])
    return va - vb


def count_real_roots_between(p, a, b):
    """Distinct real roots of p in (a, b], exact."""
    _, (va, vb) = _chain_and_variations(p.coeffs, [Fraction(a), Fraction(b)])
    return va - vb


def sturm_root_certificate(p):
    """Exact count of distinct negative real roots plus a squarefree flag.

    Returns (count_negative, all_distinct). The distinctness verdict checks
    that gcd(p, p') is constant, read off the end of the Sturm chain.
    """
    if p.degree < 1:
        raise ValueError("certificate requires a nonconstant polynomial")
    chain, (va, vb) = _chain_and_variations(p.coeffs, ["-inf", Fraction(0)])
    all_distinct = len(chain[-1]) == 1 and chain[-1][0] != 0
    return va - vb, all_distinct


def _newton_refine(p, x0, tol):
    dp = p.derivative()
    x = x0
    for _ in range(100):
        fx = p(x)
        if abs(fx) < tol:
            break
        dfx = dp(x)
        if dfx == 0:
            break
        step = fx / dfx
        x -= step
        if abs(step) < 1e-17 * max(1.0, abs(x)):
            break
    return x


def rightmost_root(p):
    """Largest real root, companion-seeded Newton with an exact Sturm check."""
    if p.degree < 1:
        raise ValueError("no real roots")
    roots = np.roots(list(reversed(p.coeffs)))
    tol_imag = 1e-8
    real_parts = [z.real for z in roots if abs(z.imag) <= tol_imag * (1.0 + abs(z))]
    tol = 1e-13 * p.coeff_norm()
    candidate = None
    if real_parts:
        candidate = _newton_refine(p, max(real_parts), tol)
        pad = max(1e-9, 1e-9 * abs(candidate))
        if (
            count_real_roots_above(p, candidate + pad) == 0
            and count_real_roots_above(p, candidate - pad) >= 1
        ):
            return float(candidate)
    # Sturm bisection fallback: bracket the largest real root exactly.
    total = count_real_roots_above(p, Fraction(0)) + count_real_roots_below(p, 0)
    if total == 0:
        raise ValueError("no real roots")
    hi = Fraction(max(2.0, 2.0 * max(abs(c) for c in p.coeffs) / abs(p.coeffs[-1])))
    lo = -hi
    if count_real_roots_above(p, hi) != 0:
        raise ValueError("root bound failed")
    while hi - lo > Fraction(1, 10 ** 15) * max(1, abs(hi), abs(lo)):
        mid = (lo + hi) / 2
        if count_real_roots_above(p, mid) >= 1:
            lo = mid
        else:
            hi = mid
    return float(_newton_refine(p, float((lo + hi) / 2), tol))


def unstable_root_count(p, margin=0.0):
    """Number of roots with real part > margin, counted with multiplicity."""
    roots = np.roots(list(reversed(p.coeffs)))
    return int(np.sum(roots.real > margin))
