"""Delay-axis stability decomposition for the delayed-injection loop.

Imaginary-axis roots of ``s**n + L(s)*exp(-delta*s)`` can only occur at
frequencies where ``|L(j*w)| = w**n``; squaring turns that into a degree-n
polynomial in w**2 whose positive roots are isolated exactly with Sturm
sequences. Each frequency generates an arithmetic progression of delays
where a conjugate root pair crosses the axis, and the crossing direction
(independent of which delay in the progression) tells whether the unstable
root count steps up or down by two. Walking the sorted crossing delays from
the delay-free count partitions the axis into intervals of constant
unstable-root count.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .polynomials import (
    RealPolynomial,
    count_real_roots_above,
    count_real_roots_between,
    unstable_root_count,
)
from .spectrum import Quasipolynomial, qp_deriv, qp_eval
from .synthesis import GainVector, delay_free_poly, gain_star

__all__ = [
    "Crossing",
    "CrossingSet",
    "StabilityPartition",
    "DegenerateCrossingError",
    "crossing_frequencies",
    "crossing_points",
    "crossing_direction",
    "stability_partition",
    "partition_for_gain",
    "hurwitz_check",
]


class DegenerateCrossingError(RuntimeError):
    pass


@dataclass(frozen=True)
class Crossing:
    frequency: float
    argument: float  # Arg G(j*w) in [0, 2*pi)
    direction: int  # +1 moves roots rightward as the delay grows


@dataclass(frozen=True)
class CrossingSet:
    """Crossing frequencies sorted descending, with arguments and directions."""

    crossings: tuple

    @property
    def frequencies(self):
        return tuple(c.frequency for c in self.crossings)

    def __len__(self):
        return len(self.crossings)


@dataclass(frozen=True)
class StabilityPartition:
    """Intervals of constant unstable-root count along the delay axis.

    crossing_points starts with 0; interval k spans
    (crossing_points[k], crossing_points[k+1]) and the final interval runs
    to delta_max. unstable_counts has one entry per interval.
    """

    n: int
    gain: GainVector
    crossing_points: tuple
    unstable_counts: tuple
    delta_max: float

    @property
    def intervals(self):
        uppers = self.crossing_points[1:] + (self.delta_max,)
        return tuple(zip(self.crossing_points, uppers))

    @property
    def stable_intervals(self):
        return tuple(
            iv for iv, c in zip(self.intervals, self.unstable_counts) if c == 0
        )

    def count_at(self, delta):
        for (lo, hi), c in zip(self.intervals, self.unstable_counts):
            if lo < delta < hi:
                return c
        raise ValueError("delta is a crossing point or outside the partition")


def _magnitude_squared_poly(gain):
    """|L(j*w)|**2 as an exact polynomial in x = w**2.

    Exactness matters: the crossing-frequency counts are certified with
    Sturm sequences over the rationals of these float products.
    """
    n = gain.n
    c = [Fraction(0)] * n
    for idx, value in enumerate(gain.l):
        c[n - 1 - idx] = Fraction(value)  # coefficient of s**(n-1-idx)
    a = [Fraction(0)] * n  # even part, coefficient of w**m
    b = [Fraction(0)] * n  # odd part
    for m in range(n):
        if m % 2 == 0:
            a[m] = c[m] * (-1) ** (m // 2)
        else:
            b[m] = c[m] * (-1) ** ((m - 1) // 2)

    def square(p):
        out = [Fraction(0)] * (2 * len(p) - 1)
        for i, pi in enumerate(p):
            if pi == 0:
                continue
            for j, pj in enumerate(p):
                if pj == 0:
                    continue
                out[i + j] += pi * pj
        return out

    total = [Fraction(0)] * (2 * n - 1)
    for i, v in enumerate(square(a)):
        total[i] += v
    for i, v in enumerate(square(b)):
        total[i] += v
    assert all(total[i] == 0 for i in range(1, len(total), 2))
    return [total[i] for i in range(0, len(total), 2)]


def crossing_polynomial(gain):
    """x**n - |L(j*sqrt(x))|**2 with exact rational coefficients."""
    n = gain.n
    coeffs = [-v for v in _magnitude_squared_poly(gain)]
    coeffs += [Fraction(0)] * (n + 1 - len(coeffs))
    coeffs[n] += 1
    return coeffs


def _isolate_positive_roots(coeffs):
    """Disjoint rational intervals, one distinct positive root each."""
    poly = RealPolynomial(tuple(float(c) for c in coeffs))
    total = count_real_roots_above(poly, 0)
    if total == 0:
        return []
    bound = Fraction(2) * max(abs(c) for c in coeffs) / abs(coeffs[-1])
    bound = max(bound, Fraction(1))
    if count_real_roots_between(poly, 0, bound) != total:
        bound *= 4
        if count_real_roots_between(poly, 0, bound) != total:
            raise RuntimeError("positive root bound failed")
    intervals = []
    stack = [(Fraction(0), bound, total)]
    while stack:
        lo, hi, k = stack.pop()
        if k == 0:
            continue
        if k == 1 and (hi - lo) < Fraction(1, 1000) * max(1, hi):
            intervals.append((lo, hi))
            continue
        mid = (lo + hi) / 2
        left = count_real_roots_between(poly, lo, mid)
        stack.append((lo, mid, left))
        stack.append((mid, hi, k - left))
    intervals.sort()
    return [(float(lo), float(hi), poly) for lo, hi in intervals]


def _polish_root(poly, lo, hi):
    x = 0.5 * (lo + hi)
    dp = poly.derivative()
    for _ in range(100):
        fx = poly(x)
        dfx = dp(x)
        if dfx == 0:
            break
        step = fx / dfx
        x_new = x - step
        if not lo - (hi - lo) <= x_new <= hi + (hi - lo):
            x_new = 0.5 * (lo + hi)
            lo_s, hi_s = lo, hi
            for _ in range(80):
                mid = 0.5 * (lo_s + hi_s)
                if poly(lo_s) * poly(mid) <= 0:
                    hi_s = mid
                else:
                    lo_s = mid
            return 0.5 * (lo_s + hi_s)
        x = x_new
        if abs(step) < 1e-16 * max(1.0, abs(x)):
            break
    return x


def _arg_g(gain, w):
    """Argument of G(j*w) = -L(j*w)/(j*w)**n in [0, 2*pi)."""
    s = 1j * w
    num = 0.0 + 0.0j
    for coef in gain.l:
        num = num * s + coef
    g = -num / s ** gain.n
    angle = math.atan2(g.imag, g.real)
    return angle % (2 * math.pi)


def crossing_direction(gain, w_c, delta_k):
    """Sign of the real-part velocity of the root at j*w_c as delay grows.

    Implicit differentiation of D(s, delta) = 0 gives
    ds/ddelta = -(dD/ddelta)/(dD/ds); +1 is destabilizing.
    """
    qp = Quasipolynomial(gain.n, gain.l, delta_k)
    s = 1j * w_c
    num = 0.0 + 0.0j
    mag = 0.0
    for coef in gain.l:
        num = num * s + coef
        mag = mag * abs(s) + abs(coef)
    d_delta = -s * num * cmath.exp(-delta_k * s)
    d_s = qp_deriv(qp, s)
    ds_scale = gain.n * abs(s) ** (gain.n - 1) + (1.0 + delta_k) * max(mag, 1e-300)
    if abs(d_s) < 1e-12 * ds_scale:
        raise DegenerateCrossingError(
            "dD/ds vanishes at the crossing; perturb the delay and retry"
        )
    velocity = -d_delta / d_s
    return 1 if velocity.real > 0 else -1


def crossing_frequencies(gain):
    """All positive frequencies where an axis crossing is possible.

    The count is exact (Sturm certificate on the squared-magnitude
    polynomial); locations are polished in floating point afterwards.
    """
    coeffs = crossing_polynomial(gain)
    freqs = []
    for lo, hi, poly in _isolate_positive_roots(coeffs):
        x = _polish_root(poly, lo, hi)
        freqs.append(math.sqrt(x))
    freqs.sort(reverse=True)
    crossings = []
    for w in freqs:
        arg = _arg_g(gain, w)
        delta_first = arg / w if arg > 0 else (2 * math.pi) / w
        direction = crossing_direction(gain, w, delta_first)
        crossings.append(Crossing(frequency=w, argument=arg, direction=direction))
    return CrossingSet(crossings=tuple(crossings))


def crossing_points(crossing_set, delta_max):
    """All delays up to delta_max where some root pair sits on the axis.

    Returns (delta, frequency) pairs merged across frequencies, ascending.
    """
    if delta_max <= 0:
        raise ValueError("delta_max must be positive")
    out = []
    for c in crossing_set.crossings:
        start = c.argument if c.argument > 0 else 2 * math.pi
        k = 0
        while True:
            delta = (start + 2 * math.pi * k) / c.frequency
            if delta > delta_max:
                break
            out.append((delta, c.frequency))
            k += 1
    out.sort()
    return out


def partition_for_gain(gain, delta_max=None):
    """Stability partition of the delay axis for an arbitrary gain vector."""
    cs = crossing_frequencies(gain)
    if delta_max is None:
        if len(cs) == 0:
            delta_max = 10.0
        else:
            delta_max = 3.0 * (2 * math.pi) / min(cs.frequencies)
    points = crossing_points(cs, delta_max)
    direction_of = {c.frequency: c.direction for c in cs.crossings}
    # merge numerically coincident crossing delays; their jumps add
    merged = []
    for delta, freq in points:
        if merged and abs(delta - merged[-1][0]) < 1e-9 * max(1.0, delta):
            merged[-1][1].append(freq)
        else:
            merged.append((delta, [freq]))
    count = unstable_root_count(delay_free_poly(gain))
    counts = [count]
    boundaries = [0.0]
    for delta, freqs in merged:
        jump = sum(2 * direction_of[f] for f in freqs)
        count += jump
        if count < 0:
            raise RuntimeError("negative unstable-root count; crossing bookkeeping broken")
        boundaries.append(delta)
        counts.append(count)
    return StabilityPartition(
        n=gain.n,
        gain=gain,
        crossing_points=tuple(boundaries),
        unstable_counts=tuple(counts),
        delta_max=float(delta_max),
    )


def stability_partition(n, delta_max=None):
    """Partition for the multiplicity-designed gain at dimension n."""
    if not 1 <= n <= 46:
        raise ValueError("dimension must be in 1..46")
    return partition_for_gain(gain_star(n), delta_max)


def _routh_verdict(coeffs_desc):
    eps_scale = max(abs(c) for c in coeffs_desc)
    n = len(coeffs_desc) - 1
    rows = [list(coeffs_desc[0::2]), list(coeffs_desc[1::2])]
    width = len(rows[0])
    rows[1] += [0.0] * (width - len(rows[1]))
    first_col = [rows[0][0], rows[1][0]] if n >= 1 else [rows[0][0]]
    for _ in range(n - 1):
        a, b = rows[-2], rows[-1]
        pivot = b[0]
        if pivot == 0.0:
            pivot = 1e-30 * eps_scale
        new = []
        for j in range(width - 1):
            a_next = a[j + 1] if j + 1 < len(a) else 0.0
            b_next = b[j + 1] if j + 1 < len(b) else 0.0
            new.append((pivot * a_next - a[0] * b_next) / pivot)
        new.append(0.0)
        rows.append(new)
        first_col.append(new[0])
    signs = [v for v in first_col if v != 0.0]
    return all(v > 0 for v in signs) if signs else False


def hurwitz_check(p):
    """True iff every root of p lies strictly in the open left half-plane.

    Runs the Routh array and cross-checks against companion eigenvalues;
    the eigenvalue verdict wins if a degenerate pivot made the array
    unreliable.
    """
    coeffs = list(reversed(p.coeffs))
    if coeffs[0] <= 0:
        raise ValueError("leading coefficient must be positive")
    if len(coeffs) == 1:
        return True
    routh = _routh_verdict(coeffs)
    roots = np.roots(coeffs)
    eig = bool(np.all(roots.real < 0))
    return eig if routh != eig else routh
