"""Lyapunov exponents, periodic-point enumeration and Newton continuation.

Exponents are computed with the discrete QR method (Benettin et al.; see
also Dieci & Van Vleck, SIAM J. Numer. Anal. 34, 1997): push an
orthonormal triple through the derivative cocycle, re-orthonormalize every
step, and average the logs of the R diagonal.  Periodic orbits of the
perturbed maps are found by Newton continuation from the exactly
enumerated periodic points of the linear part.

Randomness enters only through explicit integer seeds driving numpy's
PCG64 generator; identical seeds give bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NewtonDiverged,
    NonHyperbolicOrbit,
    NumericalBlowup,
    PeriodTooLarge,
)
from .torus_core import (
    DAMap,
    ToralAutomorphism,
    _adjugate3_int,
    _det3_int,
    _matpow_int,
    wrap,
)

DEFAULT_BURN_IN = 1000
HISTORY_STRIDE = 100
ENUMERATION_CAP = 10**6
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50
HYPERBOLICITY_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ExponentEstimate:
    """QR exponent triple in log units per iterate, sorted ascending.

    ``history`` rows are (step, lambda_s, lambda_wu, lambda_su) partial
    averages sampled every 100 counted steps, for convergence diagnostics.
    """

    values: np.ndarray
    steps: int
    history: np.ndarray = field(repr=False)

    @property
    def exponent_sum(self):
        return float(self.values.sum())


def _qr_positive(b):
    """Batched QR with positive diagonal R; b has shape (n, 3, 3)."""
    q, r = np.linalg.qr(b)
    sign = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    sign = np.where(sign == 0, 1.0, sign)
    q = q * sign[:, None, :]
    r = r * sign[:, :, None]
    return q, r


def _qr_exponents(map: DAMap, x0, steps, burn_in, q_seed, want_history):
    """Batched QR iteration; returns (values (n,3) ascending, history)."""
    x = np.asarray(x0, dtype=float).copy()
    n = x.shape[0]
    rng = np.random.default_rng(q_seed)
    q, _ = _qr_positive(rng.standard_normal((n, 3, 3)))

    const_jac = map.derivative(x[:1])[0] if map.is_linear else None

    def push(x, q):
        if const_jac is not None:
            b = np.einsum("ij,njk->nik", const_jac, q)
            x_next = map.apply(x)
        else:
            x_next, jac = map.apply_with_jacobian(x)
            b = np.einsum("nij,njk->nik", jac, q)
        q, r = _qr_positive(b)
        logs = np.log(np.diagonal(r, axis1=-2, axis2=-1))
        return x_next, q, logs

    for _ in range(burn_in):
        x, q, _ = push(x, q)

    acc = np.zeros((n, 3))
    history = []
    for k in range(1, steps + 1):
        x, q, logs = push(x, q)
        acc += logs
        if want_history and (k % HISTORY_STRIDE == 0 or k == steps):
            part = np.sort(acc[0] / k)
            if not np.all(np.isfinite(part)):
                raise NumericalBlowup(f"non-finite exponent average at step {k}")
            history.append((float(k), *part))

    if not np.all(np.isfinite(acc)):
        raise NumericalBlowup("non-finite accumulator after final step")
    values = np.sort(acc / steps, axis=1)
    return values, np.array(history) if want_history else np.empty((0, 4))


def orbit_exponents(
    map: DAMap,
    x0,
    steps: int,
    burn_in: int = DEFAULT_BURN_IN,
    q_seed: int = 0,
) -> ExponentEstimate:
    """Lyapunov exponents along the orbit of x0.

    Parameters
    ----------
    map : DAMap
    x0 : array_like, shape (3,)
    steps : int
        Number of counted iterations, at least 100.
    burn_in : int
        Discarded alignment iterations before counting starts.
    q_seed : int
        Seed for the random orthonormal initial frame.
    """
    if steps < 100:
        raise ValueError("steps must be >= 100")
    x0 = np.asarray(x0, dtype=float)[None, :]
    values, history = _qr_exponents(map, x0, int(steps), int(burn_in), q_seed, True)
    return ExponentEstimate(values=values[0], steps=int(steps), history=history)


@dataclass(frozen=True, eq=False)
class ExponentFieldStats:
    """Per-bundle statistics of exponents over random starting points."""

    mean: np.ndarray
    sd: np.ndarray
    min: np.ndarray
    max: np.ndarray
    values: np.ndarray = field(repr=False)
    samples: int = 0
    steps: int = 0

    def to_dict(self):
        return {
            "mean": self.mean.tolist(),
            "sd": self.sd.tolist(),
            "min": self.min.tolist(),
            "max": self.max.tolist(),
            "samples": self.samples,
            "steps": self.steps,
        }


def exponent_field(
    map: DAMap,
    samples: int,
    steps: int,
    seed: int,
    burn_in: int = DEFAULT_BURN_IN,
) -> ExponentFieldStats:
    """Exponent statistics over independent uniform starting points."""
    if samples < 2:
        raise ValueError("samples must be >= 2")
    rng = np.random.default_rng(seed)
    x0 = rng.random((samples, 3))
    values, _ = _qr_exponents(map, x0, int(steps), int(burn_in), seed + 1, False)
    return ExponentFieldStats(
        mean=values.mean(axis=0),
        sd=values.std(axis=0),
        min=values.min(axis=0),
        max=values.max(axis=0),
        values=values,
        samples=int(samples),
        steps=int(steps),
    )


def periodic_points_linear(
    A: ToralAutomorphism, period: int, cap: int = ENUMERATION_CAP
):
    """All period-p points of the linear map, exactly enumerated.

    Solves (A^p - I) x in Z^3 with x in [0,1)^3 by scanning the integer
    vectors m in the bounding box of (A^p - I)[0,1)^3 and keeping the
    exact rational solutions x = (A^p - I)^{-1} m that land in [0,1)^3.
    The count always equals |det(A^p - I)|.

    Returns an array of shape (count, 3), sorted lexicographically.
    """
    if period < 1:
        raise ValueError("period must be >= 1")
    mp = _matpow_int(A.matrix, period)
    m = [[mp[i][j] - (1 if i == j else 0) for j in range(3)] for i in range(3)]
    det = _det3_int(m)
    if det == 0:
        raise ValueError("A^p - I is singular; an eigenvalue is a root of unity")
    count = abs(det)
    if count > cap:
        raise PeriodTooLarge(f"|det(A^p - I)| = {count} exceeds cap {cap}")
    adj = _adjugate3_int(m)

    corners = np.array(
        [[m[i][0] * a + m[i][1] * b + m[i][2] * c for i in range(3)]
         for a in (0, 1) for b in (0, 1) for c in (0, 1)],
        dtype=np.int64,
    )
    lo = corners.min(axis=0)
    hi = corners.max(axis=0)

    points = []
    for m0 in range(int(lo[0]), int(hi[0]) + 1):
        for m1 in range(int(lo[1]), int(hi[1]) + 1):
            for m2 in range(int(lo[2]), int(hi[2]) + 1):
                num = [
                    adj[i][0] * m0 + adj[i][1] * m1 + adj[i][2] * m2
                    for i in range(3)
                ]
                if det > 0:
                    ok = all(0 <= v < det for v in num)
                else:
                    ok = all(det < v <= 0 for v in num)
                if ok:
                    points.append([v / det for v in num])
    points.sort()
    pts = np.array(points, dtype=float).reshape(len(points), 3)
    if len(points) != count:
        raise NumericalBlowup(
            f"enumeration found {len(points)} points, determinant says {count}"
        )
    return pts


@dataclass(frozen=True, eq=False)
class PeriodicOrbit:
    """Continued periodic orbit with its exponents.

    ``translation`` is the lift datum m with f~^p(x) = x + m, inherited
    from the linear seed.  ``exponents`` are (1/p) log of the eigenvalue
    moduli of D(f^p), sorted ascending.
    """

    period: int
    points: np.ndarray
    translation: tuple
    exponents: np.ndarray
    newton_residual: float


def _orbit_jacobian(map: DAMap, x, period):
    """D(f^p) at x as the product of step Jacobians along the orbit."""
    jac = np.eye(3)
    y = x
    for _ in range(period):
        jac = map.derivative(y) @ jac
        y = map.apply(y)
    return jac


def continue_periodic(map: DAMap, seed_point, period: int) -> PeriodicOrbit:
    """Newton continuation of a linear periodic point to the perturbed map.

    Iterates on the lift residual F(x) = f~^p(x) - x - m with the exact
    Jacobian D(f^p) - I; the translation m is the one of the linear seed.
    """
    x = wrap(np.asarray(seed_point, dtype=float))
    amat = map.linear_part.matrix.astype(float)
    apx = np.linalg.matrix_power(amat, period) @ x
    translation = np.rint(apx - x).astype(np.int64)

    def residual(x):
        y = x.copy()
        for _ in range(period):
            y = map.apply_lift(y)
        return y - x - translation

    res = residual(x)
    res_norm = np.abs(res).max()
    for _ in range(NEWTON_MAX_ITER):
        if res_norm < NEWTON_TOL:
            break
        jac = _orbit_jacobian(map, wrap(x), period)
        try:
            step = np.linalg.solve(jac - np.eye(3), -res)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular Newton system at {x}") from exc
        if not np.all(np.isfinite(step)) or np.abs(step).max() > 0.5:
            raise NewtonDiverged(
                f"step size {np.abs(step).max():.2e} left the continuation basin"
            )
        x = x + step
        res = residual(x)
        res_norm = np.abs(res).max()
    if not res_norm < NEWTON_TOL:
        raise NewtonDiverged(
            f"residual {res_norm:.2e} after {NEWTON_MAX_ITER} iterations"
        )

    x = wrap(x)
    jac = _orbit_jacobian(map, x, period)
    moduli = np.sort(np.abs(np.linalg.eigvals(jac)))
    if np.min(np.abs(moduli - 1.0)) < HYPERBOLICITY_TOL:
        raise NonHyperbolicOrbit(
            f"eigenvalue modulus within {HYPERBOLICITY_TOL} of 1 at period {period}"
        )
    orbit = [x]
    for _ in range(period - 1):
        orbit.append(map.apply(orbit[-1]))
    return PeriodicOrbit(
        period=period,
        points=np.array(orbit),
        translation=tuple(int(v) for v in translation),
        exponents=np.log(moduli) / period,
        newton_residual=float(res_norm),
    )


@dataclass(frozen=True, eq=False)
class PeriodicDataSummary:
    """Extrema of periodic exponents over all continued orbits.

    spread = max - min per bundle; a small spread is numerical evidence
    for constant periodic data.  ``failures`` lists (period, seed, error)
    for seeds whose continuation failed.
    """

    max_period: int
    count: int
    min: np.ndarray
    max: np.ndarray
    spread: np.ndarray
    mean: np.ndarray
    orbits: list = field(repr=False)
    failures: list = field(repr=False)

    def to_dict(self):
        return {
            "max_period": self.max_period,
            "count": self.count,
            "min": self.min.tolist(),
            "max": self.max.tolist(),
            "spread": self.spread.tolist(),
            "mean": self.mean.tolist(),
            "failures": [
                {"period": p, "seed": list(map(float, s)), "error": e}
                for p, s, e in self.failures
            ],
        }


def periodic_data_spread(
    map: DAMap, max_period: int, cap: int = ENUMERATION_CAP
) -> PeriodicDataSummary:
    """Continue every linear periodic point up to max_period and report extrema."""
    if max_period < 1:
        raise ValueError("max_period must be >= 1")
    orbits = []
    failures = []
    for period in range(1, max_period + 1):
        for seed in periodic_points_linear(map.linear_part, period, cap):
            try:
                orbits.append(continue_periodic(map, seed, period))
            except (NewtonDiverged, NonHyperbolicOrbit) as exc:
                failures.append((period, tuple(seed), str(exc)))
    if not orbits:
        raise NewtonDiverged("no periodic orbit could be continued")
    expo = np.array([o.exponents for o in orbits])
    return PeriodicDataSummary(
        max_period=int(max_period),
        count=len(orbits),
        min=expo.min(axis=0),
        max=expo.max(axis=0),
        spread=expo.max(axis=0) - expo.min(axis=0),
        mean=expo.mean(axis=0),
        orbits=orbits,
        failures=failures,
    )
