"""One-dimensional invariant foliations, leaf densities and UBD statistics.

Leaves are integrated with classical RK4 on the estimated unit bundle
field.  Conditional densities of volume along expanding leaves follow the
infinite-product formula: the density ratio of two points on a common leaf
is the limit of products of leaf-Jacobian ratios along backward iterates,
truncated once the iterates have collapsed together and a geometric tail
majorant is below tolerance.

The product direction convention is fixed so that the pushforward
identity rho(f x) * |Jf(x)| * |L_x| / |L_{f x}| = rho(x) holds for the
normalized densities (see equivariance_check); with Delta(x, y) meaning
rho(x)/rho(y) this gives Delta(x, y) = prod_{i>=1} J(f^-i y) / J(f^-i x).

Numerical conditioning: free backward iteration amplifies transverse
(off-leaf) error at the inverse stable rate, which outruns the on-leaf
contraction of the two expanding bundles.  The backward iterates are
therefore reprojected onto a freshly integrated leaf through the backward
orbit of the base point at every level, which pins the transverse error
at the leaf-integration accuracy and lets the separation cutoff actually
be reached.  The stable bundle is handled by the same machinery applied
to the inverse map, whose expanding foliation it is; there the forward
iterates converge fast enough that no reprojection is needed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateIntersection,
    FrameFailure,
    NonExpandingBundle,
    NotOnLeaf,
    NumericalBlowup,
)
from .splitting import DEFAULT_DEPTH, bundle_vectors
from .torus_core import DAMap, nearest_delta, torus_distance, wrap

DEFAULT_LEAF_STEP = 1e-3
SEPARATION_CUTOFF = 1e-6
HOLDER_SLACK = 2.0
MAX_PRODUCT_LEVELS = 200
ON_LEAF_TOL = 1e-6

_BUNDLE_INDEX = {"s": 0, "wu": 1, "su": 2}


def _check_bundle(bundle):
    if bundle not in _BUNDLE_INDEX:
        raise ValueError(f"bundle must be one of 's', 'wu', 'su', got {bundle!r}")


@dataclass(frozen=True, eq=False)
class LeafSegment:
    """Sampled arc of a one-dimensional invariant foliation.

    ``points`` has shape (n, 3) on the torus, ``arclength`` the cumulative
    parameter starting at 0; ``base_index`` marks the point the segment
    was integrated from.
    """

    bundle: str
    points: np.ndarray
    arclength: np.ndarray
    map: DAMap
    base_index: int = 0

    @property
    def length(self):
        return float(self.arclength[-1])


@dataclass(frozen=True, eq=False)
class DensityProfile:
    """Normalized conditional density along a leaf segment.

    rho is positive with trapezoidal integral 1 over the arclength
    parameter; the density relative to the normalized leaf measure is
    rho * segment.length.
    """

    segment: LeafSegment
    rho: np.ndarray


@dataclass(frozen=True, eq=False)
class UBDStatistic:
    """Sup/inf bounds of normalized leaf densities across box scales."""

    bundle: str
    box_scales: tuple
    K_estimates: tuple
    K_global: float

    def to_dict(self):
        return {
            "bundle": self.bundle,
            "box_scales": list(self.box_scales),
            "K_estimates": list(self.K_estimates),
            "K_global": self.K_global,
        }


def _field(map, pts, bundle, depth):
    """Unit bundle field at a batch of points."""
    try:
        vecs = bundle_vectors(map, pts, depth)
    except DegenerateIntersection as exc:
        raise FrameFailure(str(exc)) from exc
    return vecs[_BUNDLE_INDEX[bundle]]


def _match_sign(v, ref):
    s = np.where(np.sum(v * ref, axis=-1) < 0.0, -1.0, 1.0)
    return v * s[..., None]


def _integrate_leaves(map, x0, bundle, halflength, step, depth):
    """Lockstep RK4 integration of a batch of leaves through x0 (n, 3).

    Returns (points, arclength) with points of shape (2m+1, n, 3); the
    base points sit at index m.
    """
    n_steps = max(int(round(halflength / step)), 1)
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    n = x0.shape[0]
    v0 = _field(map, x0, bundle, depth)

    # both directions advance in one lockstep batch
    x = np.vstack([x0, x0])
    ref = np.vstack([v0, -v0])
    out = []
    for _ in range(n_steps):
        k1 = _match_sign(_field(map, x, bundle, depth), ref)
        k2 = _match_sign(_field(map, wrap(x + 0.5 * step * k1), bundle, depth), k1)
        k3 = _match_sign(_field(map, wrap(x + 0.5 * step * k2), bundle, depth), k1)
        k4 = _match_sign(_field(map, wrap(x + step * k3), bundle, depth), k1)
        x = wrap(x + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        ref = k1
        out.append(x)
    plus = [frame[:n] for frame in out]
    minus = [frame[n:] for frame in out]
    pts = np.stack(minus[::-1] + [x0] + plus)
    t = np.arange(2 * n_steps + 1) * step
    return pts, t


def integrate_leaf(
    map: DAMap,
    x,
    bundle: str,
    halflength: float,
    step: float = DEFAULT_LEAF_STEP,
    depth: int = DEFAULT_DEPTH,
) -> LeafSegment:
    """Integrate the bundle leaf through x, both directions, to +-halflength.

    Fourth-order integration of the unit bundle field, orientation kept
    continuous by sign matching each stage with the previous direction.
    """
    _check_bundle(bundle)
    if step > halflength / 10.0:
        raise ValueError("step must be at most halflength/10")
    pts, t = _integrate_leaves(map, np.asarray(x, dtype=float)[None, :], bundle,
                               halflength, step, depth)
    return LeafSegment(
        bundle=bundle,
        points=pts[:, 0, :],
        arclength=t,
        map=map,
        base_index=(len(t) - 1) // 2,
    )


def leaf_jacobian(map: DAMap, x, bundle: str, depth: int = DEFAULT_DEPTH):
    """Norm of Df(x) applied to the unit bundle vector at x."""
    _check_bundle(bundle)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = np.atleast_2d(x)
    e = _field(map, pts, bundle, depth)
    j = np.linalg.norm(np.einsum("nij,nj->ni", map.derivative(pts), e), axis=1)
    return float(j[0]) if single else j


def _log_leaf_jacobian(map, pts, bundle, depth, inverse=False):
    """log leaf Jacobian at a batch of points, for the map or its inverse."""
    e = _field(map, pts, bundle, depth)
    jac = map.jacobian_inverse(pts) if inverse else map.derivative(pts)
    return np.log(np.linalg.norm(np.einsum("nij,nj->ni", jac, e), axis=1))


def _project_polyline(z, poly, t_poly):
    """Project points z (m, 3) onto the polyline poly (p, 3).

    Returns (snapped points, arclength parameters, clamped) where clamped
    reports whether some projection hit a polyline end.
    """
    rel = nearest_delta(z[None, :, :], poly[:, None, :])      # (p, m, 3)
    seg = nearest_delta(poly[1:], poly[:-1])                  # (p-1, 3)
    len2 = np.maximum(np.sum(seg * seg, axis=-1), 1e-300)
    tpar = np.clip(
        np.einsum("pmi,pi->pm", rel[:-1], seg) / len2[:, None], 0.0, 1.0
    )
    disp = rel[:-1] - tpar[..., None] * seg[:, None, :]
    d2 = np.sum(disp * disp, axis=-1)                         # (p-1, m)
    best = np.argmin(d2, axis=0)
    cols = np.arange(z.shape[0])
    tp = tpar[best, cols]
    snapped = wrap(poly[best] + tp[:, None] * seg[best])
    tau = t_poly[best] + tp * (t_poly[1] - t_poly[0])
    clamped = ((best == 0) & (tp <= 0.0)) | ((best == len(poly) - 2) & (tp >= 1.0))
    return snapped, tau, bool(clamped.any())


def _delta_log(map, pts, bases, bundle, tolerance, depth, step=DEFAULT_LEAF_STEP):
    """log Delta(p, base) for lockstep segment points pts (l, n, 3).

    bases has shape (n, 3); column j of pts lies on the bundle leaf of
    bases[j].  Returns an (l, n) array.  Expanding bundles run over
    backward iterates with reprojection onto the leaf through the base
    iterate; the stable bundle runs over forward iterates of the map
    (backward for the inverse map) without reprojection.

    Truncation: stop when the worst separation is below the cutoff and
    the geometric tail majorant 2 * maxdiff * r / (1 - r) is below
    tolerance (r = per-bundle contraction rate of the linear part, the
    factor 2 absorbing Holder variation of the bundle); stop early when
    separation or the majorant saturates at its numerical floor.
    """
    pts = np.asarray(pts, dtype=float)
    l, n = pts.shape[:2]
    bases = np.atleast_2d(np.asarray(bases, dtype=float))
    mod = np.abs(map.linear_part.eigenvalues)
    rate = {"wu": 1.0 / mod[1], "su": 1.0 / mod[2], "s": mod[0]}[bundle]
    reproject = bundle != "s"

    z = pts.copy()
    b = bases.copy()
    acc = np.zeros((l, n))
    max_tau = max(float(torus_distance(pts, bases[None, :, :]).max()), 2.0 * step)
    prev_sep = np.inf
    prev_tail = np.inf
    tail_stall = 0
    for level in range(MAX_PRODUCT_LEVELS):
        direction = "inverse" if reproject else "forward"
        z = map.apply(z.reshape(l * n, 3), direction).reshape(l, n, 3)
        b = map.apply(b, direction)
        if reproject:
            halflength = 0.95 * max_tau + 4.0 * step
            for _ in range(4):
                poly, t_poly = _integrate_leaves(map, b, bundle, halflength, step, depth)
                center = t_poly[(len(t_poly) - 1) // 2]
                snapped = np.empty_like(z)
                tau = np.empty((l, n))
                clamped = False
                for j in range(n):
                    snapped[:, j], tau[:, j], cl = _project_polyline(
                        z[:, j], poly[:, j], t_poly
                    )
                    clamped = clamped or cl
                if not clamped:
                    break
                halflength *= 1.6
            else:
                raise NumericalBlowup("leaf reprojection kept clamping at the ends")
            z = snapped
            max_tau = float(np.abs(tau - center).max())
            sep = max_tau
        else:
            sep = float(torus_distance(z, b[None, :, :]).max())

        logj = _log_leaf_jacobian(
            map, np.vstack([z.reshape(l * n, 3), b]), bundle, depth,
            inverse=not reproject,
        )
        diff = logj[l * n:][None, :] - logj[: l * n].reshape(l, n)
        acc += diff
        maxdiff = float(np.abs(diff).max())
        tail = HOLDER_SLACK * maxdiff * rate / (1.0 - rate)

        if maxdiff < 1e-15 and level >= 1:
            return acc
        if sep < SEPARATION_CUTOFF and tail < tolerance:
            return acc
        if level >= 3 and sep >= prev_sep:
            return acc          # separation hit its numerical floor
        if sep < SEPARATION_CUTOFF:
            tail_stall = tail_stall + 1 if tail >= 0.9 * prev_tail else 0
            if tail_stall >= 3:
                return acc      # majorant saturated at the J-evaluation noise
        prev_sep = sep
        prev_tail = min(prev_tail, tail)
    raise NumericalBlowup(
        f"density product did not converge in {MAX_PRODUCT_LEVELS} levels "
        f"(separation {sep:.2e}, tail {tail:.2e})"
    )


def _segment_distance(y, pts):
    """Distance from y to the polyline through pts, using nearest lifts."""
    rel = nearest_delta(y, pts)
    seg = nearest_delta(pts[1:], pts[:-1])
    len2 = np.sum(seg * seg, axis=1)
    tpar = np.clip(np.sum(rel[:-1] * seg, axis=1) / len2, 0.0, 1.0)
    closest = rel[:-1] - tpar[:, None] * seg
    return float(np.linalg.norm(closest, axis=1).min())


def delta_density_ratio(
    map: DAMap,
    x,
    y,
    bundle: str,
    tolerance: float,
    depth: int = DEFAULT_DEPTH,
    step: float = DEFAULT_LEAF_STEP,
    search_halflength: float = 0.6,
) -> float:
    """Density ratio rho(x)/rho(y) for two points on a common expanding leaf.

    Checks that y lies within 1e-6 of the integrated leaf through x, then
    evaluates the truncated backward product of leaf-Jacobian ratios.
    """
    _check_bundle(bundle)
    if bundle == "s":
        raise NonExpandingBundle("density ratio requires an expanding bundle")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(wrap(x), wrap(y)):
        return 1.0
    seg = integrate_leaf(map, x, bundle, search_halflength, step=step, depth=depth)
    if _segment_distance(y, seg.points) > ON_LEAF_TOL:
        raise NotOnLeaf(
            f"{y} is farther than {ON_LEAF_TOL} from the {bundle}-leaf through {x}"
        )
    out = _delta_log(map, x[None, None, :], y[None, :], bundle, tolerance, depth, step)
    return float(np.exp(out[0, 0]))


def _profile_rho(map, points, arclength, base_index, bundle, tolerance, depth, step):
    logd = _delta_log(
        map, points[:, None, :], points[base_index][None, :],
        bundle, tolerance, depth, step,
    )[:, 0]
    rho = np.exp(logd - logd.max())
    rho /= np.trapezoid(rho, arclength)
    return rho


def leaf_density_profile(
    map: DAMap,
    segment: LeafSegment,
    tolerance: float,
    depth: int = DEFAULT_DEPTH,
    step: float = None,
) -> DensityProfile:
    """Normalized conditional density along an expanding leaf segment."""
    if segment.bundle == "s":
        raise NonExpandingBundle("density profile requires an expanding bundle")
    if step is None:
        step = float(segment.arclength[1] - segment.arclength[0])
    rho = _profile_rho(
        map, segment.points, segment.arclength, segment.base_index,
        segment.bundle, tolerance, depth, step,
    )
    return DensityProfile(segment=segment, rho=rho)


def ubd_statistic(
    map: DAMap,
    bundle: str,
    box_scales,
    samples_per_scale: int,
    seed: int,
    step: float = DEFAULT_LEAF_STEP,
    depth: int = DEFAULT_DEPTH,
    tolerance: float = 1e-6,
) -> UBDStatistic:
    """Density bounds over foliated boxes of several scales.

    A box at scale s consists of bundle-leaf segments of arclength s
    through points sampled on a transversal disk of diameter s.  Each
    segment's density is normalized on the segment; the density relative
    to normalized leaf measure is rho * s, K at a scale the worst of sup
    and 1/inf over sampled segments and points, and K_global the maximum
    over scales.  Deterministic for a given seed.
    """
    _check_bundle(bundle)
    scales = tuple(float(s) for s in box_scales)
    if not scales or min(scales) <= 0.0 or max(scales) > 0.5:
        raise ValueError("box scales must lie in (0, 0.5]")
    rng = np.random.default_rng(seed)
    trans = [b for b in ("s", "wu", "su") if b != bundle]

    k_estimates = []
    for scale in scales:
        center = rng.random(3)
        vecs = bundle_vectors(map, center, depth)
        t1 = vecs[_BUNDLE_INDEX[trans[0]]]
        t2 = vecs[_BUNDLE_INDEX[trans[1]]]
        radius = 0.5 * scale * np.sqrt(rng.random(samples_per_scale))
        angle = 2.0 * np.pi * rng.random(samples_per_scale)
        offsets = radius[:, None] * (
            np.cos(angle)[:, None] * t1 + np.sin(angle)[:, None] * t2
        )
        starts = wrap(center + offsets)
        pts, t = _integrate_leaves(map, starts, bundle, scale / 2.0, step, depth)
        mid = (len(t) - 1) // 2
        logd = _delta_log(map, pts, pts[mid], bundle, tolerance, depth, step)
        rho = np.exp(logd - logd.max(axis=0))
        rho /= np.trapezoid(rho, t, axis=0)
        rho_hat = rho * t[-1]
        k_scale = max(1.0, float(rho_hat.max()), float(1.0 / rho_hat.min()))
        k_estimates.append(k_scale)
    return UBDStatistic(
        bundle=bundle,
        box_scales=scales,
        K_estimates=tuple(k_estimates),
        K_global=float(max(k_estimates)),
    )


@dataclass(frozen=True, eq=False)
class CocycleRatioStatistic:
    """Extrema of leaf-Jacobian ratio products over leaf pairs and times."""

    bundle: str
    sup_ratio: float
    inf_ratio: float
    pairs: int
    n_max: int

    def to_dict(self):
        return {
            "bundle": self.bundle,
            "sup_ratio": self.sup_ratio,
            "inf_ratio": self.inf_ratio,
            "pairs": self.pairs,
            "n_max": self.n_max,
        }


def cocycle_ratio_statistic(
    map: DAMap,
    bundle: str,
    pairs: int,
    n_max: int,
    seed: int,
    leaf_halflength: float = 0.2,
    step: float = DEFAULT_LEAF_STEP,
    depth: int = DEFAULT_DEPTH,
) -> CocycleRatioStatistic:
    """sup and inf over pairs and n <= n_max of prod_j J(f^j x)/J(f^j y).

    Pairs (x, y) are the endpoints of integrated leaf segments through
    random points, so they lie on common bundle leaves; the running
    product is accumulated in log space along the forward orbits.
    """
    _check_bundle(bundle)
    rng = np.random.default_rng(seed)
    starts = rng.random((pairs, 3))
    pts, _ = _integrate_leaves(map, starts, bundle, leaf_halflength, step, depth)
    z = np.vstack([pts[-1], pts[0]])
    acc = np.zeros(pairs)
    running_max = np.full(pairs, -np.inf)
    running_min = np.full(pairs, np.inf)
    for _ in range(n_max):
        logj = _log_leaf_jacobian(map, z, bundle, depth)
        acc += logj[:pairs] - logj[pairs:]
        running_max = np.maximum(running_max, acc)
        running_min = np.minimum(running_min, acc)
        z = map.apply(z)
    return CocycleRatioStatistic(
        bundle=bundle,
        sup_ratio=float(np.exp(running_max.max())),
        inf_ratio=float(np.exp(running_min.min())),
        pairs=pairs,
        n_max=n_max,
    )


def equivariance_check(
    map: DAMap,
    segment: LeafSegment,
    tolerance: float,
    depth: int = DEFAULT_DEPTH,
    step: float = None,
) -> float:
    """Residual of the density pushforward identity on a segment.

    Computes normalized densities on the segment and on its forward image
    and returns max |rhoh(f x) * |Jf(x)| * |L_x| / |L_fx| - rhoh(x)| / rhoh(x)
    over samples, where rhoh denotes the density relative to normalized
    leaf measure and |L| the segment arclengths.
    """
    if segment.bundle == "s":
        raise NonExpandingBundle("equivariance check requires an expanding bundle")
    if step is None:
        step = float(segment.arclength[1] - segment.arclength[0])
    rho = _profile_rho(
        map, segment.points, segment.arclength, segment.base_index,
        segment.bundle, tolerance, depth, step,
    )
    image_pts = map.apply(segment.points)
    chords = np.linalg.norm(nearest_delta(image_pts[1:], image_pts[:-1]), axis=1)
    image_t = np.concatenate([[0.0], np.cumsum(chords)])
    rho_image = _profile_rho(
        map, image_pts, image_t, segment.base_index,
        segment.bundle, tolerance, depth, step,
    )

    jac = np.exp(_log_leaf_jacobian(map, segment.points, segment.bundle, depth))
    len_x = segment.length
    len_fx = float(image_t[-1])
    rho_hat = rho * len_x
    rho_hat_image = rho_image * len_fx
    resid = np.abs(rho_hat_image * jac * len_x / len_fx - rho_hat) / rho_hat
    return float(resid.max())
