"""The conjugacy h = id + u to the linear part, as a convergent series.

Writing the map as f~ = A + delta with a Z^3-periodic displacement delta,
the equation h o f = A o h becomes u(f x) = A u(x) - delta(x).  Projecting
onto the eigendirections of A turns this into scalar cohomological
equations solved by one-sided geometric series: backward orbit sums for
the contracting component, forward orbit sums for the expanding ones.
Truncations are chosen from explicit geometric tail majorants, so the
functional-equation residual is bounded by the requested tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InversionDiverged, NoSpectralGap, SegmentTooShort
from .torus_core import DAMap, nearest_delta, torus_distance, wrap

SPECTRAL_GAP_TOL = 1e-6
INVERSE_TOL = 1e-11
INVERSE_MAX_ITER = 200


def _displacement_bound(map: DAMap):
    """Sup-norm majorant of |f~ - A| from the shear amplitudes."""
    per_axis_pre = np.zeros(3)
    for s in map.pre_shears:
        per_axis_pre[s.axis] += abs(s.amplitude)
    per_axis_post = np.zeros(3)
    for s in map.post_shears:
        per_axis_post[s.axis] += abs(s.amplitude)
    a_norm = np.linalg.norm(map.linear_part.matrix.astype(float), 2)
    return a_norm * np.linalg.norm(per_axis_pre) + np.linalg.norm(per_axis_post)


@dataclass(frozen=True, eq=False)
class ConjugacyApprox:
    """Truncated series for u = h - id, split along the eigenbasis of A.

    truncation holds the series lengths (K_s, K_wu, K_su); tail_bound is
    the sum of the geometric majorants of the three discarded tails.  At
    eps_scale = 0 all truncations are 0 and evaluation returns the
    identity exactly.
    """

    map: DAMap
    truncation: tuple
    tail_bound: float
    tolerance: float

    def displacement_field(self, x):
        """u(x), vectorized over points; shape like x.

        Evaluation happens at the canonical representative, so u is
        exactly Z^3-periodic whenever the lift wraps to the same floats.
        """
        x = wrap(np.asarray(x, dtype=float))
        lin = self.map.linear_part
        mu = lin.eigenvalues
        left = lin.left_eigenvectors
        k_s, k_wu, k_su = self.truncation

        comps = np.zeros(x.shape[:-1] + (3,))
        y = x
        for k in range(max(k_wu, k_su)):
            d = self.map.displacement(y) @ left.T
            if k < k_wu:
                comps[..., 1] += mu[1] ** (-(k + 1)) * d[..., 1]
            if k < k_su:
                comps[..., 2] += mu[2] ** (-(k + 1)) * d[..., 2]
            y = self.map.apply(y)
        y = x
        for k in range(1, k_s + 1):
            y = self.map.apply(y, "inverse")
            d = self.map.displacement(y) @ left.T
            comps[..., 0] -= mu[0] ** (k - 1) * d[..., 0]
        return comps @ lin.right_eigenvectors.T


def solve_conjugacy(map: DAMap, tolerance: float) -> ConjugacyApprox:
    """Choose series truncations so each geometric tail is below tolerance/3."""
    mu = map.linear_part.eigenvalues
    mod = np.abs(mu)
    if np.min(np.abs(mod - 1.0)) < SPECTRAL_GAP_TOL:
        raise NoSpectralGap("an eigenvalue modulus is within 1e-6 of 1")

    d_bound = _displacement_bound(map)
    bounds = np.linalg.norm(map.linear_part.left_eigenvectors, axis=1) * d_bound

    target = tolerance / 3.0
    ks = np.zeros(3, dtype=int)
    tails = np.zeros(3)
    if d_bound > 0.0:
        # stable tail: sum_{k > K} |mu_s|^(k-1) |delta_s| = b mod^K / (1 - mod)
        b = bounds[0]
        k = int(np.ceil(np.log(target * (1.0 - mod[0]) / b) / np.log(mod[0])))
        ks[0] = max(k, 0)
        tails[0] = b * mod[0] ** ks[0] / (1.0 - mod[0])
        for i in (1, 2):
            # expanding tail: sum_{k >= K} mod^-(k+1) |delta| = b mod^-K/(mod-1)
            b = bounds[i]
            k = int(np.ceil(np.log(b / (target * (mod[i] - 1.0))) / np.log(mod[i])))
            ks[i] = max(k, 0)
            tails[i] = b * mod[i] ** (-float(ks[i])) / (mod[i] - 1.0)
    return ConjugacyApprox(
        map=map,
        truncation=(int(ks[0]), int(ks[1]), int(ks[2])),
        tail_bound=float(tails.sum()),
        tolerance=float(tolerance),
    )


def evaluate_h(conj: ConjugacyApprox, x, direction: str = "forward"):
    """Evaluate h (x + u(x) mod Z^3) or its inverse by fixed-point iteration.

    The inverse solves y = x + u(x) via x_{n+1} = y - u(x_n), which
    contracts in the small-perturbation regime; InversionDiverged is
    raised when the observed contraction factor reaches 1.
    """
    x = np.asarray(x, dtype=float)
    if direction == "forward":
        return wrap(x + conj.displacement_field(x))
    if direction != "inverse":
        raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
    current = x.copy()
    last_step = np.inf
    grew = 0
    for _ in range(INVERSE_MAX_ITER):
        nxt = x - conj.displacement_field(wrap(current))
        step = np.max(np.abs(nxt - current)) if nxt.size else 0.0
        current = nxt
        if step < INVERSE_TOL:
            return wrap(current)
        if step >= last_step:
            grew += 1
            if grew >= 3:
                raise InversionDiverged(
                    f"fixed-point step grew to {step:.2e}; contraction factor >= 1"
                )
        else:
            grew = 0
        last_step = step
    raise InversionDiverged(
        f"no convergence to {INVERSE_TOL} within {INVERSE_MAX_ITER} iterations"
    )


def conjugacy_residual(conj: ConjugacyApprox, grid_resolution: int) -> float:
    """max over a grid of torus_distance(h(f(x)), A(h(x)))."""
    res = grid_resolution
    axes = np.arange(res) / res
    grid = np.stack(np.meshgrid(axes, axes, axes, indexing="ij"), -1).reshape(-1, 3)
    amat = conj.map.linear_part.matrix.astype(float)
    h_fx = evaluate_h(conj, conj.map.apply(grid))
    a_hx = wrap(evaluate_h(conj, grid) @ amat.T)
    return float(torus_distance(h_fx, a_hx).max())


@dataclass(frozen=True)
class CenterDerivativeStats:
    """Deviation between the center derivative of h and a leaf density."""

    max_deviation: float
    mean_deviation: float
    n_points: int


def center_derivative_check(conj: ConjugacyApprox, segment, profile) -> CenterDerivativeStats:
    """Compare d/dt of the center coordinate of h along a wu-leaf with rho.

    The h-image of the leaf is unwrapped to a continuous lift, its
    coordinate along the center eigendirection differentiated with
    central differences in arclength, normalized to unit segment
    integral (the same normalization as the density), and compared
    pointwise with profile.rho.
    """
    pts = segment.points
    if pts.shape[0] < 10:
        raise SegmentTooShort(f"segment has {pts.shape[0]} points, need >= 10")
    if segment.bundle != "wu":
        raise ValueError("center derivative check requires a wu-leaf segment")
    t = segment.arclength
    h_pts = evaluate_h(conj, pts)
    steps = nearest_delta(h_pts[1:], h_pts[:-1])
    lift = np.vstack([h_pts[0], h_pts[0] + np.cumsum(steps, axis=0)])
    center = lift @ conj.map.linear_part.left_eigenvectors[1]
    if center[-1] < center[0]:
        center = -center
    deriv = np.gradient(center, t, edge_order=2)
    deriv = deriv / np.trapezoid(deriv, t)
    dev = np.abs(deriv - profile.rho)
    return CenterDerivativeStats(
        max_deviation=float(dev.max()),
        mean_deviation=float(dev.mean()),
        n_points=int(pts.shape[0]),
    )


def holder_probe(conj: ConjugacyApprox, scales, samples: int, seed: int):
    """Log-log regression estimate of the Holder exponent of u per direction.

    For each eigendirection v of A and each scale d, measures the sup over
    sample points of |u(x + d v) - u(x)| and regresses log sup against
    log d.  Returns {'s': slope, 'wu': slope, 'su': slope}; a zero u is
    reported as exponent 1.0 by convention.
    """
    scales = np.asarray(list(scales), dtype=float)
    if scales.size < 3 or np.any(np.diff(scales) >= 0):
        raise ValueError("need at least 3 strictly decreasing scales")
    rng = np.random.default_rng(seed)
    x = rng.random((samples, 3))
    ux = conj.displacement_field(x)
    out = {}
    for i, name in enumerate(("s", "wu", "su")):
        v = conj.map.linear_part.right_eigenvectors[:, i]
        sups = []
        for d in scales:
            diff = conj.displacement_field(wrap(x + d * v)) - ux
            sups.append(np.linalg.norm(diff, axis=1).max())
        sups = np.asarray(sups)
        if np.max(sups) < 1e-14:
            out[name] = 1.0
        else:
            slope = np.polyfit(np.log(scales), np.log(np.maximum(sups, 1e-300)), 1)[0]
            out[name] = float(slope)
    return out
