"""Gain-margin bracketing for the unit-delay prediction error loop.

The loop tolerates an output-feedback perturbation of slope gamma_m if a
descriptor-form matrix inequality W < 0 admits a solution; the analytic
ceiling is the trailing design gain, because a constant perturbation of that
slope parks a characteristic root at the origin. Feasibility of W < 0 at a
given slope is decided by minimizing the largest eigenvalue of a block
diagonal of W and the positivity constraints, a convex nonsmooth problem.
The solver runs a log-sum-exp smoothing continuation under L-BFGS, then a
small proximal bundle method (near-top eigenvector cuts, cutting-plane
model, adaptive prox weight) to sharpen the nonsmooth tail. Every
"feasible" answer ships the variables and is re-verified by a plain
symmetric eigenvalue check before being believed; a negative answer is
reported as unknown, never as a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .synthesis import GainVector, gain_star, sigma_star

__all__ = [
    "LmiVariables",
    "MarginBracket",
    "ChainDesign",
    "assemble_W",
    "lmi_feasible",
    "verify_certificate",
    "max_gain_margin",
    "upper_bound_gamma",
    "design_chain",
]

MAX_MARGIN_DIMENSION = 8


@dataclass(frozen=True)
class LmiVariables:
    P: np.ndarray
    R: np.ndarray
    S: np.ndarray
    P2: np.ndarray
    P3: np.ndarray
    P4: np.ndarray


@dataclass(frozen=True)
class MarginBracket:
    n: int
    lower: float
    upper: float
    certificate: LmiVariables | None
    eps: float = 1e-6  # strictness margin the certificate was verified at


@dataclass(frozen=True)
class ChainDesign:
    """Cascade sizing: threshold gain, stage count, per-stage gain."""

    gamma_phi: float
    h: float
    lambda_star: float
    N: int
    lam: float
    sigma_star_per_t: float


def _shift_matrix(n):
    return np.eye(n, k=1)


def _injection_matrix(gain):
    a1 = np.zeros((gain.n, gain.n))
    a1[:, 0] = -np.asarray(gain.l)
    return a1


def assemble_W(n, gain, h, gamma_m, variables):
    """The 4x4-block descriptor matrix; symmetric by construction."""
    if h <= 0:
        raise ValueError("delay must be positive")
    p, r, s = variables.P, variables.R, variables.S
    p2, p3, p4 = variables.P2, variables.P3, variables.P4
    for mat in (p, r, s, p2, p3, p4):
        if mat.shape != (n, n):
            raise ValueError("all variables must be n x n")
    a = _shift_matrix(n)
    a1 = _injection_matrix(gain)
    eye = np.eye(n)
    w11 = a.T @ p2 + p2.T @ a + s - r + gamma_m ** 2 * eye
    w12 = p - p2.T + a.T @ p3
    w13 = p2.T @ a1 + r
    w14 = p2.T + a.T @ p4
    w22 = -p3 - p3.T + h ** 2 * r
    w23 = p3.T @ a1
    w24 = p3.T - p4
    w33 = -s - r
    w34 = a1.T @ p4
    w44 = p4.T + p4 - eye
    return np.block(
        [
            [w11, w12, w13, w14],
            [w12.T, w22, w23, w24],
            [w13.T, w23.T, w33, w34],
            [w14.T, w24.T, w34.T, w44],
        ]
    )


def _default_eps(gamma_m):
    return 1e-6 * (1.0 + gamma_m ** 2)


def verify_certificate(n, gain, h, gamma_m, variables, eps):
    """Independent eigenvalue check of a feasibility certificate."""
    w = assemble_W(n, gain, h, gamma_m, variables)
    if np.max(np.linalg.eigvalsh((w + w.T) / 2)) > -eps / 2:
        return False
    for mat in (variables.P, variables.R, variables.S):
        if np.min(np.linalg.eigvalsh((mat + mat.T) / 2)) < eps / 2:
            return False
    return True


class _Packing:
    """Flat parameter vector <-> (P, R, S, P2, P3, P4)."""

    def __init__(self, n):
        self.n = n
        self.tri = [(i, j) for i in range(n) for j in range(i + 1)]
        self.d_sym = len(self.tri)
        self.d_full = n * n
        self.dim = 3 * self.d_sym + 3 * self.d_full

    def unpack(self, theta):
        n = self.n
        mats = []
        off = 0
        for _ in range(3):
            m = np.zeros((n, n))
            for idx, (i, j) in enumerate(self.tri):
                m[i, j] = theta[off + idx]
                m[j, i] = theta[off + idx]
            mats.append(m)
            off += self.d_sym
        for _ in range(3):
            mats.append(theta[off : off + self.d_full].reshape(n, n).copy())
            off += self.d_full
        return LmiVariables(*mats)

    def pack(self, variables):
        parts = []
        for m in (variables.P, variables.R, variables.S):
            parts.append(np.array([m[i, j] for i, j in self.tri]))
        for m in (variables.P2, variables.P3, variables.P4):
            parts.append(np.asarray(m, dtype=float).reshape(-1))
        return np.concatenate(parts)

    def pack_sym_grad(self, gfull):
        """Gradient wrt independent entries of a symmetric variable."""
        gsym = gfull + gfull.T
        return np.array(
            [gsym[i, j] if i != j else gfull[i, i] for i, j in self.tri]
        )


def _gradient_for_vector(v, packing, n, a, a1, h):
    """Gradient of v' M(theta) v with respect to the packed variables."""
    v1, v2, v3, v4 = v[:n], v[n : 2 * n], v[2 * n : 3 * n], v[3 * n : 4 * n]
    vp, vr, vs = v[4 * n : 5 * n], v[5 * n : 6 * n], v[6 * n : 7 * n]
    z = a @ v1 - v2 + a1 @ v3 + v4
    g_p = np.outer(2 * v1, v2) - np.outer(vp, vp)
    g_r = (
        -np.outer(v1, v1)
        + 2 * np.outer(v1, v3)
        + h ** 2 * np.outer(v2, v2)
        - np.outer(v3, v3)
        - np.outer(vr, vr)
    )
    g_s = np.outer(v1, v1) - np.outer(v3, v3) - np.outer(vs, vs)
    g_p2 = 2 * np.outer(z, v1)
    g_p3 = 2 * np.outer(z, v2)
    g_p4 = 2 * np.outer(z, v4)
    return np.concatenate(
        [
            packing.pack_sym_grad(g_p),
            packing.pack_sym_grad(g_r),
            packing.pack_sym_grad(g_s),
            g_p2.reshape(-1),
            g_p3.reshape(-1),
            g_p4.reshape(-1),
        ]
    )


def _stacked_eigensystem(theta, packing, n, a, a1, h, gamma_m, eps):
    variables = packing.unpack(theta)
    p, r, s = variables.P, variables.R, variables.S
    p2, p3, p4 = variables.P2, variables.P3, variables.P4
    eye = np.eye(n)
    w11 = a.T @ p2 + p2.T @ a + s - r + gamma_m ** 2 * eye
    w12 = p - p2.T + a.T @ p3
    w13 = p2.T @ a1 + r
    w14 = p2.T + a.T @ p4
    w22 = -p3 - p3.T + h ** 2 * r
    w23 = p3.T @ a1
    w24 = p3.T - p4
    w33 = -s - r
    w34 = a1.T @ p4
    w44 = p4.T + p4 - eye
    w = np.block(
        [
            [w11, w12, w13, w14],
            [w12.T, w22, w23, w24],
            [w13.T, w23.T, w33, w34],
            [w14.T, w24.T, w34.T, w44],
        ]
    )
    big = np.zeros((7 * n, 7 * n))
    big[: 4 * n, : 4 * n] = w + eps * np.eye(4 * n)
    big[4 * n : 5 * n, 4 * n : 5 * n] = eps * eye - p
    big[5 * n : 6 * n, 5 * n : 6 * n] = eps * eye - r
    big[6 * n : 7 * n, 6 * n : 7 * n] = eps * eye - s
    return np.linalg.eigh((big + big.T) / 2)


def _objective_and_cuts(theta, packing, n, a, a1, h, gamma_m, eps):
    """Largest eigenvalue of blkdiag(W + eps I, eps I - P, eps I - R,
    eps I - S) plus one valid cutting plane per near-top eigenvector.

    For any fixed unit vector v, v' M(theta') v underestimates the largest
    eigenvalue everywhere, so each near-top eigenvector yields a cut. The
    extra cuts matter: at the feasibility boundary the top eigenvalue is
    typically multiple and a single-cut model crawls.
    """
    vals, vecs = _stacked_eigensystem(theta, packing, n, a, a1, h, gamma_m, eps)
    f = vals[-1]
    window = max(1e-7, 0.1 * abs(f))
    cuts = []
    for idx in range(len(vals) - 1, -1, -1):
        if vals[idx] < f - window or len(cuts) >= 6:
            break
        grad = _gradient_for_vector(vecs[:, idx], packing, n, a, a1, h)
        cuts.append((vals[idx], grad))
    return f, cuts


def _smoothed_value_grad(theta, mu, packing, n, a, a1, h, gamma_m, eps):
    """Log-sum-exp smoothing of the largest eigenvalue with exact gradient."""
    vals, vecs = _stacked_eigensystem(theta, packing, n, a, a1, h, gamma_m, eps)
    vmax = vals[-1]
    weights = np.exp((vals - vmax) / mu)
    total = np.sum(weights)
    f = vmax + mu * math.log(total)
    weights /= total
    grad = np.zeros(packing.dim)
    for i in range(len(vals)):
        if weights[i] < 1e-14:
            continue
        grad += weights[i] * _gradient_for_vector(vecs[:, i], packing, n, a, a1, h)
    return f, grad


def _project_simplex(v):
    u = np.sort(v)[::-1]
    cssv = np.cumsum(u) - 1.0
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > cssv)[0][-1]
    theta = cssv[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _bundle_dual(gmat, errs, t, alpha0=None):
    """min over the simplex of t/2 |G a|^2 + e . a, by accelerated
    projected gradient with warm starting."""
    k = gmat.shape[0]
    if alpha0 is not None and len(alpha0) == k:
        alpha = alpha0.copy()
    else:
        alpha = np.full(k, 1.0 / k)
    gram = gmat @ gmat.T
    lip = t * max(np.max(np.linalg.eigvalsh(gram)), 1e-12) + 1e-12
    y = alpha.copy()
    tk = 1.0
    for _ in range(500):
        grad = t * (gram @ y) + errs
        alpha_new = _project_simplex(y - grad / lip)
        tk_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * tk * tk))
        y = alpha_new + ((tk - 1.0) / tk_new) * (alpha_new - alpha)
        moved = np.linalg.norm(alpha_new - alpha)
        alpha, tk = alpha_new, tk_new
        if moved < 1e-14:
            break
    return alpha


def _minimize_eigenvalue(theta0, oracle, budget_iters=1200, target=0.0):
    """Proximal bundle descent on a convex max-eigenvalue objective.

    oracle(theta) returns (f, cuts) with cuts a list of (value, gradient)
    linearizations valid at theta. Returns (best_theta, best_f) and stops
    early once best_f < target.
    """
    center = theta0.copy()
    f_center, first_cuts = oracle(center)
    best_theta, best_f = center.copy(), f_center
    cuts_g = [g for _, g in first_cuts]
    cuts_f = [v for v, _ in first_cuts]
    cuts_pt = [center.copy() for _ in first_cuts]
    max_cuts = 36
    t_init = 1.0 / max(np.linalg.norm(cuts_g[0]), 1e-9)
    t = t_init
    alpha = None
    null_streak = 0
    stall = 0
    for _ in range(budget_iters):
        if best_f < target:
            break
        if stall >= 250:
            # no measurable progress for a long stretch; give up early
            break
        gmat = np.array(cuts_g)
        errs = np.array(
            [
                f_center - (cf + cg @ (center - cp))
                for cf, cg, cp in zip(cuts_f, cuts_g, cuts_pt)
            ]
        )
        errs = np.maximum(errs, 0.0)
        alpha = _bundle_dual(gmat, errs, t, alpha)
        direction = gmat.T @ alpha
        agg_err = float(errs @ alpha)
        predicted = t * float(direction @ direction) + agg_err
        if predicted < 1e-14 * max(1.0, abs(f_center)):
            # model cannot improve the center further at this prox weight
            t *= 4.0
            alpha = None
            if t > 1e8:
                break
            continue
        theta_new = center - t * direction
        f_new, new_cuts = oracle(theta_new)
        if f_new < best_f - max(1e-14, 1e-6 * abs(best_f)):
            stall = 0
        else:
            stall += 1
        if f_new < best_f:
            best_f, best_theta = f_new, theta_new.copy()
        if f_new <= f_center - 0.1 * predicted:
            center, f_center = theta_new, f_new
            t = min(t * 2.0, 1e6)
            null_streak = 0
        else:
            t = max(t / 1.6, 1e-12)
            null_streak += 1
            if null_streak >= 40:
                # prox weight has collapsed; kick it back up
                t = max(t, t_init / 10.0)
                null_streak = 0
        for val, grad in new_cuts:
            cuts_g.append(grad)
            cuts_f.append(val)
            cuts_pt.append(theta_new)
        if len(cuts_g) > max_cuts:
            # keep the aggregated plane so trimming cannot lose convergence
            drop = len(cuts_g) - max_cuts + 1
            cuts_g = [direction.copy()] + cuts_g[drop:]
            cuts_f = [f_center - agg_err] + cuts_f[drop:]
            cuts_pt = [center.copy()] + cuts_pt[drop:]
            alpha = None
    return best_theta, best_f


def _lyapunov_seed(n, gain):
    a = _shift_matrix(n)
    a1 = _injection_matrix(gain)
    closed = a + a1
    eye = np.eye(n)
    kron = np.kron(eye, closed.T) + np.kron(closed.T, eye)
    p0 = np.linalg.solve(kron, -eye.reshape(-1)).reshape(n, n)
    p0 = (p0 + p0.T) / 2
    return p0 / max(np.max(np.abs(p0)), 1.0)


def _initial_variables(n, gain):
    """Heuristic start: delay-free Lyapunov shape with heavy multipliers.

    Certificates sit with the descriptor multipliers one to two orders of
    magnitude above the Lyapunov blocks, and with the delayed-state weight
    nearly vanishing; starting in that regime is what lets the smoothed
    descent reach the thin feasible needle at dimensions above three.
    """
    p0 = _lyapunov_seed(n, gain)
    eye = np.eye(n)
    return LmiVariables(
        P=2.0 * p0,
        R=0.1 * eye,
        S=0.01 * eye,
        P2=20.0 * p0,
        P3=15.0 * p0,
        P4=15.0 * eye,
    )


def _fallback_variables(n, gain):
    """Balanced-scale start kept as a second attempt."""
    p0 = _lyapunov_seed(n, gain)
    eye = np.eye(n)
    return LmiVariables(
        P=2.0 * p0,
        R=0.5 * eye,
        S=0.5 * eye,
        P2=1.0 * p0,
        P3=0.5 * p0,
        P4=0.5 * eye,
    )


_SMOOTHING_LADDER = (
    (1e-1, 300),
    (1e-2, 300),
    (1e-3, 300),
    (1e-4, 300),
    (1e-5, 600),
    (1e-6, 1500),
    (2e-7, 4000),
    (5e-8, 4000),
    (1e-8, 4000),
    (2e-9, 4000),
)


def _solve_feasibility(theta0, packing, n, a, a1, h, gamma_m, eps, budget_iters):
    """Hybrid descent: smoothed quasi-Newton continuation, a scalar rescale
    line search, then the nonsmooth bundle as a finisher.

    The smoothing stage supplies curvature information that carries the
    iterate down the thin feasibility needle; the bundle stage sharpens the
    nonsmooth tail. Stops as soon as the exact objective is safely
    negative, and bails out of the expensive deep-smoothing stages when
    progress clearly died while still far from feasibility.
    """
    target = -0.25 * eps

    def exact(theta):
        vals, _ = _stacked_eigensystem(theta, packing, n, a, a1, h, gamma_m, eps)
        return vals[-1]

    def oracle(theta):
        return _objective_and_cuts(theta, packing, n, a, a1, h, gamma_m, eps)

    theta = theta0.copy()
    best_theta, best_f = theta.copy(), exact(theta)
    start_warm = best_f < 1e-3
    slow_stages = 0
    for mu, iters in _SMOOTHING_LADDER:
        if start_warm and mu > 1e-4:
            continue
        if mu < max(eps * 0.01, 1e-12):
            break
        res = minimize(
            lambda th: _smoothed_value_grad(th, mu, packing, n, a, a1, h, gamma_m, eps),
            theta,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": iters, "ftol": 1e-18, "gtol": 1e-14, "maxcor": 30},
        )
        theta = res.x
        f = exact(theta)
        improved = f < 0.5 * best_f
        if f < best_f:
            best_theta, best_f = theta.copy(), f
        if best_f < target:
            return best_theta, best_f
        if not improved and best_f > 100.0 * eps:
            slow_stages += 1
            if slow_stages >= 2:
                break
        else:
            slow_stages = 0
    for c in np.logspace(-1.0, 1.5, 26):
        f = exact(c * best_theta)
        if f < best_f:
            best_f = f
            theta = c * best_theta
            best_theta = theta
    if best_f < target:
        return best_theta, best_f
    if 0.0 <= best_f <= 25.0 * eps:
        theta, f = _minimize_eigenvalue(best_theta, oracle, budget_iters, target)
        if f < best_f:
            best_theta, best_f = theta, f
    return best_theta, best_f


def lmi_feasible(n, gain, h, gamma_m, eps=None, warm_start=None, budget_iters=1200):
    """Search for a feasibility certificate of W < 0 at slope gamma_m.

    Returns (True, LmiVariables) only when the certificate passes the
    independent eigenvalue verification; otherwise (False, "unknown"). The
    negative answer is never a proof of infeasibility.
    """
    if gamma_m < 0:
        raise ValueError("gain-margin slope must be nonnegative")
    if eps is None:
        eps = _default_eps(gamma_m)
    packing = _Packing(n)
    a = _shift_matrix(n)
    a1 = _injection_matrix(gain)
    starts = []
    if warm_start is not None:
        warm_list = warm_start if isinstance(warm_start, (list, tuple)) else [warm_start]
        starts.extend(packing.pack(w) for w in warm_list)
    starts.append(packing.pack(_initial_variables(n, gain)))
    starts.append(packing.pack(_fallback_variables(n, gain)))
    best_f = math.inf
    for theta0 in starts:
        theta, f = _solve_feasibility(
            theta0, packing, n, a, a1, h, gamma_m, eps, budget_iters
        )
        if f < 0.0:
            variables = packing.unpack(theta)
            if verify_certificate(n, gain, h, gamma_m, variables, eps):
                return True, variables
        best_f = min(best_f, f)
        if best_f > 1000.0 * eps and len(starts) > 2:
            # hopelessly far on a warm-started query; skip remaining starts
            break
    return False, "unknown"


def upper_bound_gamma(n):
    """Analytic ceiling: the trailing design gain.

    A constant output perturbation of this slope shifts the characteristic
    equation to D(s) - l_n = 0, which is solved by s = 0, so no larger
    slope can leave the loop asymptotically stable.
    """
    return gain_star(n).l[-1]


def max_gain_margin(n, tol=None, budget_iters=1200, eps=None):
    """Bisection bracket for the certified gain margin at unit delay.

    tol is the absolute bisection resolution; by default it scales with the
    analytic upper bound so small-margin dimensions still resolve. The
    strictness margin likewise shrinks with the expected slope magnitude:
    certificates for higher dimensions are intrinsically ill-conditioned
    (the attainable interior slack falls roughly with the square of the
    margin itself), and a fixed strictness would reject them wholesale.
    The returned lower bound always carries a verified certificate, except
    in the degenerate case where even slope 0 could not be certified,
    reported as lower 0 with no certificate.
    """
    if not 1 <= n <= MAX_MARGIN_DIMENSION:
        raise ValueError("dimension must be in 1..%d" % MAX_MARGIN_DIMENSION)
    gain = gain_star(n)
    upper = gain.l[-1]
    if tol is None:
        tol = 1e-3 * upper
    if eps is None:
        eps = min(1e-6, max(1e-2 * upper ** 2, 1e-11))
    ok, cert = lmi_feasible(n, gain, 1.0, 0.0, eps=eps, budget_iters=budget_iters)
    if not ok:
        return MarginBracket(n=n, lower=0.0, upper=upper, certificate=None, eps=eps)
    lo, hi = 0.0, upper
    base = cert
    best = cert
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        ok, result = lmi_feasible(
            n, gain, 1.0, mid, eps=eps, warm_start=[best, base], budget_iters=budget_iters
        )
        if ok:
            lo, best = mid, result
        else:
            hi = mid
    return MarginBracket(n=n, lower=lo, upper=upper, certificate=best, eps=eps)


def design_chain(n, gamma_phi, h, gamma_m):
    """Size the sub-predictor cascade from the margin and the nonlinearity.

    Threshold gain max(gamma_phi/gamma_m, 1); stage count the integer
    ceiling of threshold times delay (at least one stage); per-stage scalar
    gain N/h, which puts every stage exactly at the unit normalized delay
    the gains were designed for.
    """
    if gamma_m <= 0:
        raise ValueError("gain margin must be positive")
    if gamma_phi < 0:
        raise ValueError("Lipschitz constant must be nonnegative")
    if h <= 0:
        raise ValueError("delay must be positive")
    lambda_star = max(gamma_phi / gamma_m, 1.0)
    stages = max(1, math.ceil(lambda_star * h))
    lam = stages / h
    return ChainDesign(
        gamma_phi=float(gamma_phi),
        h=float(h),
        lambda_star=lambda_star,
        N=stages,
        lam=lam,
        sigma_star_per_t=sigma_star(n) * lam,
    )
