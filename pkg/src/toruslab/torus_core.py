"""Points, lifts and exactly volume-preserving map families on the 3-torus.

Maps are built from an integer unimodular 3x3 matrix composed with
trigonometric coordinate shears.  Shears displace one coordinate by a sine
of the other two, so they are exactly invertible, have unipotent Jacobians
(det == 1), and keep every map in the family exactly volume preserving.

All operations are vectorized: a point is an array of shape (3,) and a
batch of points an array of shape (n, 3).  Every returned point is the
canonical representative with coordinates in [0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidShear, NotPartiallyHyperbolic, NotUnimodular

TWO_PI = 2.0 * np.pi

_UNIT_MODULUS_TOL = 1e-9
_DISTINCT_MODULUS_TOL = 1e-9


def wrap(x):
    """Canonical torus representative of x, coordinates in [0, 1)."""
    y = np.asarray(x, dtype=float) % 1.0
    # x % 1.0 can round to exactly 1.0 for tiny negative inputs
    return np.where(y >= 1.0, y - 1.0, y)


def nearest_delta(x, y):
    """Displacement x - y using the nearest lift, coordinates in [-0.5, 0.5)."""
    d = (np.asarray(x, dtype=float) - np.asarray(y, dtype=float) + 0.5) % 1.0 - 0.5
    return np.where(d >= 0.5, d - 1.0, d)


def torus_distance(x, y):
    """Euclidean distance between nearest lifts; at most sqrt(3)/2."""
    return np.linalg.norm(nearest_delta(x, y), axis=-1)


def _det3_int(m):
    """Exact determinant of a 3x3 integer matrix using Python ints."""
    a = [[int(m[i][j]) for j in range(3)] for i in range(3)]
    return (
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    )


def _adjugate3_int(m):
    """Exact adjugate of a 3x3 integer matrix (list of lists of ints)."""
    a = [[int(m[i][j]) for j in range(3)] for i in range(3)]

    def cof(i, j):
        r = [k for k in range(3) if k != i]
        c = [k for k in range(3) if k != j]
        minor = a[r[0]][c[0]] * a[r[1]][c[1]] - a[r[0]][c[1]] * a[r[1]][c[0]]
        return (-1) ** (i + j) * minor

    # adjugate = transposed cofactor matrix
    return [[cof(j, i) for j in range(3)] for i in range(3)]


def _matmul_int(a, b):
    return [
        [sum(int(a[i][k]) * int(b[k][j]) for k in range(3)) for j in range(3)]
        for i in range(3)
    ]


def _matpow_int(m, p):
    out = [[1 if i == j else 0 for j in range(3)] for i in range(3)]
    base = [[int(m[i][j]) for j in range(3)] for i in range(3)]
    for _ in range(p):
        out = _matmul_int(out, base)
    return out


@dataclass(frozen=True, eq=False)
class ToralAutomorphism:
    """Integer unimodular 3x3 matrix with its real spectral data.

    Eigendata is sorted by ascending modulus, so index 0 is the contracting
    direction (s), index 1 the weak expanding one (wu) and index 2 the
    strong expanding one (su).  ``right_eigenvectors`` holds unit
    eigenvectors as columns, ``left_eigenvectors`` the dual basis as rows,
    with left @ right == identity.
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    right_eigenvectors: np.ndarray
    left_eigenvectors: np.ndarray
    log_moduli: np.ndarray
    inverse_matrix: np.ndarray = field(repr=False)

    @property
    def moduli(self):
        return np.abs(self.eigenvalues)

    def __post_init__(self):
        for name in (
            "matrix",
            "eigenvalues",
            "right_eigenvectors",
            "left_eigenvectors",
            "log_moduli",
            "inverse_matrix",
        ):
            getattr(self, name).setflags(write=False)


def make_linear_map(matrix) -> ToralAutomorphism:
    """Validate an integer matrix and compute its spectral data.

    Parameters
    ----------
    matrix : array_like, shape (3, 3)
        Integer entries.  Must be unimodular with real eigenvalues of
        pairwise distinct moduli, exactly one of them below 1.

    Raises
    ------
    NotUnimodular
        If |det| != 1.
    NotPartiallyHyperbolic
        If the shape is not 3x3 or the spectrum does not split as
        one contracting and two expanding real directions.
    """
    m = np.asarray(matrix)
    if m.shape != (3, 3):
        raise NotPartiallyHyperbolic(
            f"expected a 3x3 integer matrix, got shape {m.shape}"
        )
    if not np.all(m == np.rint(m)):
        raise ValueError("matrix entries must be integers")
    m = np.rint(m).astype(np.int64)

    det = _det3_int(m)
    if abs(det) != 1:
        raise NotUnimodular(f"|det| = {abs(det)} != 1")

    w, v = np.linalg.eig(m.astype(float))
    if np.max(np.abs(w.imag)) > _UNIT_MODULUS_TOL:
        raise NotPartiallyHyperbolic("complex eigenvalues")
    w = w.real
    v = v.real

    order = np.argsort(np.abs(w))
    w = w[order]
    v = v[:, order]
    mod = np.abs(w)

    if np.min(np.abs(mod - 1.0)) < _UNIT_MODULUS_TOL:
        raise NotPartiallyHyperbolic("eigenvalue modulus equal to 1")
    if np.min(np.diff(mod)) < _DISTINCT_MODULUS_TOL:
        raise NotPartiallyHyperbolic("repeated eigenvalue moduli")
    if not (mod[0] < 1.0 and mod[1] > 1.0 and mod[2] > 1.0):
        raise NotPartiallyHyperbolic(
            "need exactly one contracting and two expanding directions"
        )

    v = v / np.linalg.norm(v, axis=0)
    # sign convention: first component exceeding 1e-12 made positive
    for j in range(3):
        col = v[:, j]
        k = int(np.argmax(np.abs(col) > 1e-12))
        if col[k] < 0:
            v[:, j] = -col

    left = np.linalg.inv(v)
    pairing = np.abs(left @ v - np.eye(3)).max()
    if pairing > 1e-12:
        raise NotPartiallyHyperbolic(f"ill-conditioned eigenbasis ({pairing:.2e})")

    adj = np.array(_adjugate3_int(m), dtype=np.int64)
    inv = adj * det  # det = +-1, so adj/det == adj*det

    return ToralAutomorphism(
        matrix=m,
        eigenvalues=w,
        right_eigenvectors=v,
        left_eigenvectors=left,
        log_moduli=np.log(mod),
        inverse_matrix=inv,
    )


@dataclass(frozen=True)
class ShearSpec:
    """One trigonometric coordinate shear y -> y + amp*sin(2 pi k.y + phase)*e_axis.

    ``wave_vector`` is an integer 3-vector with zero component on ``axis``
    (0-based), which makes the shear exactly invertible with det(Dg) == 1.
    """

    axis: int
    wave_vector: tuple
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if self.axis not in (0, 1, 2):
            raise InvalidShear(f"axis must be 0, 1 or 2, got {self.axis}")
        wv = tuple(int(k) for k in self.wave_vector)
        if len(wv) != 3:
            raise InvalidShear("wave_vector must have 3 integer components")
        if wv[self.axis] != 0:
            raise InvalidShear(
                f"wave_vector{wv} has nonzero component on its own axis {self.axis}"
            )
        object.__setattr__(self, "wave_vector", wv)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "phase", float(self.phase))

    def scaled(self, factor: float) -> "ShearSpec":
        return ShearSpec(self.axis, self.wave_vector, self.amplitude * factor, self.phase)

    def inverse(self) -> "ShearSpec":
        return ShearSpec(self.axis, self.wave_vector, -self.amplitude, self.phase)


def _shear_apply(points, shear: ShearSpec, out=None):
    """Apply one shear to lifted points (no wrapping)."""
    y = np.array(points, dtype=float, copy=True) if out is None else out
    k = np.asarray(shear.wave_vector, dtype=float)
    y[..., shear.axis] += shear.amplitude * np.sin(TWO_PI * (y @ k) + shear.phase)
    return y


def _shear_unapply(points, shear: ShearSpec):
    """Exact inverse: the phase argument does not involve the shear's own axis."""
    y = np.array(points, dtype=float, copy=True)
    k = np.asarray(shear.wave_vector, dtype=float)
    y[..., shear.axis] -= shear.amplitude * np.sin(TWO_PI * (y @ k) + shear.phase)
    return y


def _shear_cos(points, shear: ShearSpec):
    k = np.asarray(shear.wave_vector, dtype=float)
    return TWO_PI * shear.amplitude * np.cos(
        TWO_PI * (np.asarray(points) @ k) + shear.phase
    )


@dataclass(frozen=True, eq=False)
class DAMap:
    """Volume-preserving map f = post_shears o A o pre_shears on the 3-torus.

    ``construction_tag`` is one of ``linear``, ``post_composed`` or
    ``smooth_conjugate``.  In the smooth_conjugate mode the pre list is a
    chain phi and the post list its exact inverse, so f = phi^-1 o A o phi.
    ``base_shears`` and ``eps_scale`` record the construction arguments for
    serialization; the shear lists actually applied carry the scaled
    amplitudes.

    Instances are immutable and safe to share across workers; all methods
    are pure functions of their arguments.
    """

    linear_part: ToralAutomorphism
    pre_shears: tuple
    post_shears: tuple
    construction_tag: str
    base_shears: tuple = ()
    eps_scale: float = 0.0

    @property
    def is_linear(self):
        return all(s.amplitude == 0.0 for s in self.pre_shears + self.post_shears)

    # -- evaluation ------------------------------------------------------

    def apply_lift(self, x):
        """Forward lift evaluation R^3 -> R^3 (no final wrap).

        The lift satisfies f~(x + m) = f~(x) + A m for integer m, so the
        displacement f~(x) - A x is Z^3-periodic.
        """
        y = np.array(x, dtype=float, copy=True)
        for s in self.pre_shears:
            y = _shear_apply(y, s, out=y)
        y = y @ self.linear_part.matrix.T.astype(float)
        for s in self.post_shears:
            y = _shear_apply(y, s, out=y)
        return y

    def apply(self, x, direction="forward"):
        """Evaluate the map (or its exact closed-form inverse) on the torus."""
        if direction == "forward":
            return wrap(self.apply_lift(x))
        if direction != "inverse":
            raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
        y = np.array(x, dtype=float, copy=True)
        for s in reversed(self.post_shears):
            y = _shear_unapply(y, s)
        y = y @ self.linear_part.inverse_matrix.T.astype(float)
        for s in reversed(self.pre_shears):
            y = _shear_unapply(y, s)
        return wrap(y)

    # -- derivatives -----------------------------------------------------

    def _chain_points(self, x):
        """Intermediate points of the forward composition, as lifted arrays."""
        pts_pre = []
        y = np.array(x, dtype=float, copy=True)
        for s in self.pre_shears:
            pts_pre.append(y)
            y = _shear_apply(y, s)
        y = y @ self.linear_part.matrix.T.astype(float)
        pts_post = []
        for s in self.post_shears:
            pts_post.append(y)
            y = _shear_apply(y, s)
        return pts_pre, pts_post

    @staticmethod
    def _rmul_shear(jac, shear, points, sign=1.0):
        """jac <- jac @ (I + sign*c e_axis k^T): rank-1 column update."""
        c = sign * _shear_cos(points, shear)
        kvec = np.asarray(shear.wave_vector, dtype=float)
        jac += np.einsum("...,...i,j->...ij", c, jac[..., :, shear.axis], kvec)

    @staticmethod
    def _lmul_shear(jac, shear, points, sign=1.0):
        """jac <- (I + sign*c e_axis k^T) @ jac: rank-1 row update."""
        c = sign * _shear_cos(points, shear)
        kvec = np.asarray(shear.wave_vector, dtype=float)
        jac[..., shear.axis, :] += np.einsum(
            "...,...k->...k", c, np.einsum("j,...jk->...k", kvec, jac)
        )

    def derivative(self, x, direction="forward"):
        """Exact analytic Jacobian by the chain rule; shape (..., 3, 3).

        ``inverse`` returns D(f^-1)(x) = (Df(f^-1 x))^-1, assembled from
        the closed-form inverses of the unipotent shear factors.
        """
        if direction == "inverse":
            return self.jacobian_inverse(self.apply(x, "inverse"))
        if direction != "forward":
            raise ValueError(f"direction must be 'forward' or 'inverse', got {direction!r}")
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        pts_pre, pts_post = self._chain_points(x)
        jac = np.broadcast_to(
            self.linear_part.matrix.astype(float), batch + (3, 3)
        ).copy()
        # Df = DP_m ... DP_1 . A . DR_l ... DR_1, with DR_1 evaluated at x
        for s, p in zip(reversed(self.pre_shears), reversed(pts_pre)):
            self._rmul_shear(jac, s, p)
        for s, p in zip(self.post_shears, pts_post):
            self._lmul_shear(jac, s, p)
        return jac

    def apply_with_jacobian(self, x):
        """Forward image (wrapped) and exact Jacobian in one chain pass."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        pts_pre = []
        y = np.array(x, copy=True)
        for s in self.pre_shears:
            pts_pre.append(y)
            y = _shear_apply(y, s)
        y = y @ self.linear_part.matrix.T.astype(float)
        pts_post = []
        for s in self.post_shears:
            pts_post.append(y)
            y = _shear_apply(y, s)
        jac = np.broadcast_to(
            self.linear_part.matrix.astype(float), batch + (3, 3)
        ).copy()
        for s, p in zip(reversed(self.pre_shears), reversed(pts_pre)):
            self._rmul_shear(jac, s, p)
        for s, p in zip(self.post_shears, pts_post):
            self._lmul_shear(jac, s, p)
        return wrap(y), jac

    def jacobian_inverse(self, x):
        """(Df(x))^-1 at torus points x, assembled factor by factor."""
        x = np.asarray(x, dtype=float)
        batch = x.shape[:-1]
        pts_pre, pts_post = self._chain_points(x)
        inv = np.broadcast_to(
            self.linear_part.inverse_matrix.astype(float), batch + (3, 3)
        ).copy()
        # (Df)^-1 = DR_1^-1 ... DR_l^-1 . A^-1 . DP_1^-1 ... DP_m^-1
        for s, p in zip(self.post_shears, pts_post):
            self._rmul_shear(inv, s, p, sign=-1.0)
        for s, p in zip(reversed(self.pre_shears), reversed(pts_pre)):
            self._lmul_shear(inv, s, p, sign=-1.0)
        return inv

    def displacement(self, x):
        """Z^3-periodic displacement f~(x) - A x of the lift."""
        x = np.asarray(x, dtype=float)
        return self.apply_lift(x) - x @ self.linear_part.matrix.T.astype(float)


def make_da_map(A: ToralAutomorphism, shears, eps_scale: float, mode: str) -> DAMap:
    """Build a volume-preserving map with linear part A.

    Parameters
    ----------
    A : ToralAutomorphism
    shears : sequence of ShearSpec
        Base shear shapes; every amplitude is multiplied by ``eps_scale``.
    eps_scale : float
        Nonnegative global amplitude.
    mode : {'post_composed', 'smooth_conjugate'}
        post_composed returns f = g_k o ... o g_1 o A.  smooth_conjugate
        returns f = phi^-1 o A o phi with phi = g_k o ... o g_1, which is
        smoothly conjugate to A by construction.
    """
    if eps_scale < 0:
        raise ValueError("eps_scale must be nonnegative")
    if mode not in ("post_composed", "smooth_conjugate"):
        raise ValueError(f"unknown mode {mode!r}")
    shears = tuple(
        s if isinstance(s, ShearSpec) else ShearSpec(**s) for s in shears
    )
    scaled = tuple(s.scaled(eps_scale) for s in shears)
    tag = "linear" if not scaled else mode
    if mode == "post_composed":
        pre, post = (), scaled
    else:
        pre = scaled
        post = tuple(s.inverse() for s in reversed(scaled))
    return DAMap(
        linear_part=A,
        pre_shears=pre,
        post_shears=post,
        construction_tag=tag,
        base_shears=shears,
        eps_scale=float(eps_scale),
    )


def linear_da_map(A: ToralAutomorphism) -> DAMap:
    """The automorphism itself as a DAMap."""
    return make_da_map(A, (), 0.0, "post_composed")


# -- serialization --------------------------------------------------------

def da_map_to_json(m: DAMap) -> dict:
    return {
        "matrix": [[int(v) for v in row] for row in m.linear_part.matrix],
        "shears": [
            {
                "axis": s.axis,
                "wave_vector": list(s.wave_vector),
                "amplitude": s.amplitude,
                "phase": s.phase,
            }
            for s in m.base_shears
        ],
        "eps_scale": m.eps_scale,
        "mode": "post_composed" if m.construction_tag == "linear" else m.construction_tag,
    }


def da_map_from_json(d: dict) -> DAMap:
    A = make_linear_map(d["matrix"])
    shears = [ShearSpec(**s) for s in d.get("shears", [])]
    return make_da_map(A, shears, d.get("eps_scale", 0.0), d.get("mode", "post_composed"))
