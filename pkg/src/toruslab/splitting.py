"""Finite-time estimation of the invariant splitting and cone certification.

The three bundle directions at a point x are estimated from the derivative
cocycle: the strong unstable vector is the leading vector of a QR-type
iteration pushed forward along the backward orbit segment ending at x, the
stable vector is the analogous object for the inverse map, and the weak
unstable (center) vector spans the intersection of the forward unstable
2-plane estimate with the backward center-stable 2-plane estimate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateIntersection
from .torus_core import DAMap

DEFAULT_DEPTH = 40
DEGENERATE_TOL = 1e-10

BUNDLES = ("s", "wu", "su")


def _as_batch(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def _fix_signs(vectors):
    """Make the largest-magnitude component of each row positive."""
    idx = np.argmax(np.abs(vectors), axis=-1)
    sign = np.sign(np.take_along_axis(vectors, idx[..., None], axis=-1))
    sign[sign == 0] = 1.0
    return vectors * sign


def _mgs_pair(w):
    """In-place modified Gram-Schmidt on the column pairs w[..., :, 0:2]."""
    c0 = w[..., 0]
    c0 /= np.sqrt(np.einsum("...i,...i->...", c0, c0))[..., None]
    c1 = w[..., 1]
    c1 -= np.einsum("...i,...i->...", c0, c1)[..., None] * c0
    c1 /= np.sqrt(np.einsum("...i,...i->...", c1, c1))[..., None]


def bundle_vectors(map: DAMap, points, depth: int = DEFAULT_DEPTH):
    """Estimated (e_s, e_wu, e_su) at each point; each of shape like points.

    The iteration is seeded with the eigenvectors of the linear part, so
    for the linear map the result is exact at any depth >= 1.  Raises
    DegenerateIntersection when the unstable and center-stable plane
    estimates are within 1e-10 of coincident.
    """
    if depth < 1:
        raise ValueError("depth must be >= 1")
    x, single = _as_batch(points)
    n = x.shape[0]
    ev = map.linear_part.right_eigenvectors  # columns s, wu, su

    back = np.empty((depth + 1, n, 3))
    fwd = np.empty((depth + 1, n, 3))
    back[0] = fwd[0] = x
    for j in range(depth):
        back[j + 1] = map.apply(back[j], "inverse")
        fwd[j + 1] = map.apply(fwd[j])

    # all step matrices in two batched calls: Df along the backward orbit
    # for the unstable pair, (Df)^-1 along the forward orbit (which is
    # D(f^-1) at f^{j+1} x) for the center-stable pair
    jac_f = map.derivative(back[1:].reshape(depth * n, 3)).reshape(depth, n, 3, 3)
    jac_b = map.jacobian_inverse(fwd[:depth].reshape(depth * n, 3)).reshape(
        depth, n, 3, 3
    )
    steps = np.stack([jac_f, jac_b], axis=1)[::-1]  # deepest first

    w = np.empty((2, n, 3, 2))
    w[0] = np.stack([ev[:, 2], ev[:, 1]], axis=1)   # unstable pair seed
    w[1] = np.stack([ev[:, 0], ev[:, 1]], axis=1)   # center-stable pair seed
    for k in range(depth):
        w = np.einsum("cnij,cnjk->cnik", steps[k], w)
        _mgs_pair(w)

    e_su = w[0, :, :, 0]
    e_s = w[1, :, :, 0]
    normal_u = np.cross(w[0, :, :, 0], w[0, :, :, 1])
    normal_cs = np.cross(w[1, :, :, 0], w[1, :, :, 1])

    e_wu = np.cross(normal_u, normal_cs)
    norms = np.linalg.norm(e_wu, axis=1)
    if np.min(norms) < DEGENERATE_TOL:
        bad = int(np.argmin(norms))
        raise DegenerateIntersection(
            f"unstable and center-stable planes coincide near {x[bad]} "
            f"(intersection norm {norms[bad]:.2e} at depth {depth})"
        )
    e_wu = e_wu / norms[:, None]

    e_s, e_wu, e_su = (_fix_signs(e) for e in (e_s, e_wu, e_su))
    if single:
        return e_s[0], e_wu[0], e_su[0]
    return e_s, e_wu, e_su


@dataclass(frozen=True, eq=False)
class Frame:
    """Estimated splitting at a point with per-bundle invariance residuals.

    residuals[i] is the angle between Df(x) e_i(x) and e_i(f x), the latter
    taken from an independently computed frame at f x; order (s, wu, su).
    """

    base: np.ndarray
    e_s: np.ndarray
    e_wu: np.ndarray
    e_su: np.ndarray
    depth: int
    residuals: np.ndarray

    def vector(self, bundle: str):
        return {"s": self.e_s, "wu": self.e_wu, "su": self.e_su}[bundle]


def _angles(u, v):
    """Angle between the lines spanned by rows of u and v (sign ignored)."""
    un = u / np.linalg.norm(u, axis=-1, keepdims=True)
    vn = v / np.linalg.norm(v, axis=-1, keepdims=True)
    dots = np.abs(np.sum(un * vn, axis=-1))
    crosses = np.linalg.norm(np.cross(un, vn), axis=-1)
    return np.arctan2(crosses, dots)


def finite_time_frame(map: DAMap, x, depth: int = DEFAULT_DEPTH) -> Frame:
    """Frame at x together with invariance residuals against the frame at f(x)."""
    x = np.asarray(x, dtype=float)
    pair = np.stack([x, map.apply(x)])
    es, ewu, esu = bundle_vectors(map, pair, depth)
    here = np.stack([es[0], ewu[0], esu[0]])       # rows s, wu, su
    there = np.stack([es[1], ewu[1], esu[1]])
    pushed = np.einsum("ij,kj->ki", map.derivative(x), here)
    residuals = _angles(pushed, there)
    return Frame(
        base=x,
        e_s=here[0],
        e_wu=here[1],
        e_su=here[2],
        depth=depth,
        residuals=residuals,
    )


def invariance_residual(map: DAMap, samples: int, depth: int, seed: int):
    """Mean and max invariance residual per bundle over random points.

    Deterministic for a given seed; the same points are used at every
    depth, so residuals are comparable across depth values.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    x = rng.random((samples, 3))
    fx = map.apply(x)
    both = np.concatenate([x, fx])
    es, ewu, esu = bundle_vectors(map, both, depth)
    jac = map.derivative(x)
    out = {}
    for name, e in zip(BUNDLES, (es, ewu, esu)):
        pushed = np.einsum("nij,nj->ni", jac, e[:samples])
        ang = _angles(pushed, e[samples:])
        out[name] = {"mean": float(ang.mean()), "max": float(ang.max())}
    return out


# -- cone certification ----------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConeCertificate:
    """Grid-sampled cone-invariance margins; heuristic, not a proof.

    margins maps e.g. 'u_invariance' to the worst-case slack of the
    corresponding condition over the grid; the verdict is true iff every
    margin is strictly positive.
    """

    grid_resolution: int
    aperture: float
    margins: dict
    verdict: bool

    def to_dict(self):
        return {
            "grid_resolution": self.grid_resolution,
            "aperture": self.aperture,
            "margins": dict(self.margins),
            "verdict": self.verdict,
        }


def _cone_samples(core_dim, aperture, n_angles=12):
    """Unit-core test vectors filling the cone up to its boundary.

    Returns (core, other) coordinate blocks, shapes (k, core_dim) and
    (k, 3 - core_dim); vectors are ||core|| = 1, ||other|| in {0, a/2, a}.
    """
    if core_dim == 1:
        cores = np.array([[1.0]])
    else:
        th = np.linspace(0.0, np.pi, n_angles, endpoint=False)
        cores = np.stack([np.cos(th), np.sin(th)], axis=1)
    other_dim = 3 - core_dim
    if other_dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = np.linspace(0.0, 2 * np.pi, 2 * n_angles, endpoint=False)
        dirs = np.stack([np.cos(th), np.sin(th)], axis=1)
    blocks_core = [cores]
    blocks_other = [np.zeros((cores.shape[0], other_dim))]
    for radius in (0.5 * aperture, aperture):
        for d in dirs:
            blocks_core.append(cores)
            blocks_other.append(np.tile(radius * d, (cores.shape[0], 1)))
    return np.concatenate(blocks_core), np.concatenate(blocks_other)


_CONES = {
    # name: (core indices in eigen coordinates, forward?, expansion checked?)
    "su": ((2,), True, True),
    "u": ((1, 2), True, True),
    "s": ((0,), False, True),
    "cs": ((0, 1), False, False),
}


def cone_certificate(
    map: DAMap, grid_resolution: int, aperture: float = 0.5
) -> ConeCertificate:
    """Check cone invariance of the splitting of the linear part on a grid.

    At every grid point the derivative (inverse derivative for the stable
    and center-stable cones) is expressed in the eigenbasis of the linear
    part and applied to a fixed family of vectors sampling each cone of
    the given aperture.  Margins record the worst slack of cone invariance
    (aperture minus image aperture) and of expansion (growth factor minus
    1, measured in eigenbasis coordinates).
    """
    if grid_resolution < 8:
        raise ValueError("grid_resolution must be >= 8")
    res = grid_resolution
    axes = np.arange(res) / res
    grid = np.stack(np.meshgrid(axes, axes, axes, indexing="ij"), -1).reshape(-1, 3)

    left = map.linear_part.left_eigenvectors
    right = map.linear_part.right_eigenvectors

    samples = {}
    for name, (core_idx, forward, expand) in _CONES.items():
        core, other = _cone_samples(len(core_idx), aperture)
        other_idx = tuple(i for i in range(3) if i not in core_idx)
        vecs = np.zeros((core.shape[0], 3))
        vecs[:, core_idx] = core
        vecs[:, other_idx] = other
        samples[name] = (vecs, core_idx, other_idx, forward, expand)

    worst_aperture = {name: 0.0 for name in _CONES}
    worst_growth = {name: np.inf for name in _CONES}

    chunk = 2048
    for start in range(0, grid.shape[0], chunk):
        pts = grid[start : start + chunk]
        jac_f = map.derivative(pts)
        jac_b = map.jacobian_inverse(pts)
        m_f = np.einsum("ij,njk,kl->nil", left, jac_f, right)
        m_b = np.einsum("ij,njk,kl->nil", left, jac_b, right)
        for name, (vecs, core_idx, other_idx, forward, expand) in samples.items():
            m = m_f if forward else m_b
            img = np.einsum("nij,kj->nki", m, vecs)
            core_norm = np.linalg.norm(img[..., core_idx], axis=-1)
            other_norm = np.linalg.norm(img[..., other_idx], axis=-1)
            ap = other_norm / np.maximum(core_norm, 1e-300)
            worst_aperture[name] = max(worst_aperture[name], float(ap.max()))
            if expand:
                growth = np.linalg.norm(img, axis=-1) / np.linalg.norm(vecs, axis=-1)
                worst_growth[name] = min(worst_growth[name], float(growth.min()))

    margins = {}
    for name, (_, _, _, _, expand) in samples.items():
        margins[f"{name}_invariance"] = aperture - worst_aperture[name]
        if expand:
            margins[f"{name}_expansion"] = worst_growth[name] - 1.0
    verdict = all(v > 0.0 for v in margins.values())
    return ConeCertificate(
        grid_resolution=res, aperture=aperture, margins=margins, verdict=verdict
    )
