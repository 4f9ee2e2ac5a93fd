"""Projections onto the Nehari set and the sign-changing Nehari set.

Both work purely on coefficient records from :mod:`kclattice.energy`, so a
projection costs a handful of scalar evaluations once the coefficients of a
field are known.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .energy import FiberCoeffs, SignCoeffs, _f_s, f_eval, f_grad, f_hess

__all__ = [
    "ProjectionError",
    "RayProjection",
    "PairProjection",
    "project_ray",
    "project_pair",
    "multi_start_pair",
]


class ProjectionError(ValueError):
    """The field cannot be projected (degenerate coefficients or bad exponent)."""


@dataclass(frozen=True)
class RayProjection:
    s_star: float
    fiber_residual: float
    bracket: tuple[float, float]


@dataclass(frozen=True)
class PairProjection:
    """``grad_norm`` is ``|grad f|`` divided by the size of its largest terms."""

    s_u: float
    t_u: float
    grad_norm: float
    hessian_definite: bool
    value: float


def project_ray(c: FiberCoeffs, tol: float = 1e-13) -> RayProjection:
    """Scale ``s*`` with ``(J'(s* u), s* u) = 0``.

    With ``sigma = s^2`` the condition reads ``g(sigma) = A + B sigma -
    D sigma^(p-1) = 0``; ``g`` rises to a single maximum and then falls to
    -inf, so the positive root is unique. ``|g(sigma*)| <= tol * A``.
    """
    A, B, D, p = c.A, c.B, c.D, c.p
    if not A > 0:
        raise ProjectionError("A = 0: the field is zero")
    if not D > 0:
        raise ProjectionError("D = 0: the Choquard term vanishes, no Nehari point on this ray")
    if not p > 2:
        raise ProjectionError(f"p must exceed 2, got {p}")

    def g(x):
        return A + B * x - D * x ** (p - 1)

    def dg(x):
        return B - (p - 1) * D * x ** (p - 2)

    crit = (B / (D * (p - 1))) ** (1.0 / (p - 2)) if B > 0 else 0.0
    lo = max(crit, (A / D) ** (1.0 / (p - 1)))
    hi = lo
    while g(hi) >= 0:
        lo, hi = hi, 2.0 * hi
    bracket = (lo, hi)

    x = 0.5 * (lo + hi)
    for _ in range(200):
        gx = g(x)
        if gx > 0:
            lo = x
        else:
            hi = x
        d = dg(x)
        x_new = x - gx / d if d < 0 else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        step = abs(x_new - x)
        x = x_new
        if abs(g(x)) <= tol * A and step <= 4 * np.finfo(float).eps * x:
            break
        if hi - lo <= 2 * np.finfo(float).eps * hi:
            break
    s = math.sqrt(x)
    return RayProjection(s, abs(g(x)) * x, (math.sqrt(bracket[0]), math.sqrt(bracket[1])))


def _argmax_s(c: SignCoeffs, t: float) -> float:
    # f_s(0+, t) >= 0 (K <= 0) and f_s -> -inf; the root of f_s(., t)
    lo = 0.0
    hi = 1.0
    while _f_s(c, hi, t) > 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e150:
            raise ProjectionError("pair map is unbounded along s")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _f_s(c, mid, t) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return 0.5 * (lo + hi)


def _start_grid(rng: np.random.Generator | None, count: int = 16):
    base = np.linspace(-2.0, 2.0, count)
    if rng is None:
        return 10.0**base, 10.0**base
    step = base[1] - base[0]
    return (
        10.0 ** (base + rng.uniform(-0.5, 0.5) * step),
        10.0 ** (base + rng.uniform(-0.5, 0.5) * step),
    )


def _grad_scale(c: SignCoeffs, s: float, t: float) -> float:
    # magnitudes of the terms that cancel in f_s and f_t
    b, p = c.b, c.p
    return max(
        1.0,
        s * c.Aplus + t * c.Aminus
        + b * (s**3 * c.Gplus**2 + t**3 * c.Gminus**2)
        + s ** (2 * p - 1) * c.Dplus + t ** (2 * p - 1) * c.Dminus,
    )


def project_pair(
    c: SignCoeffs, tol: float = 1e-9, grid_seed: int = 0, max_iter: int = 200
) -> PairProjection:
    """Positive maximiser ``(s_u, t_u)`` of ``f(s, t) = J(s u+ + t u-)``.

    Coarse 16x16 log grid on ``[1e-2, 1e2]^2`` (jittered for ``grid_seed > 0``),
    alternating one-dimensional maximisation, then Newton on ``grad f = 0``
    with the analytic Hessian. Only defined for ``p > 4``. ``tol`` bounds the
    gradient norm relative to the size of its terms, which is what rounding
    allows for fields of any amplitude.
    """
    if not c.p > 4:
        raise ProjectionError(
            f"sign-changing projection needs p > 4 (got p = {c.p}); uniqueness of the pair is unknown"
        )
    if not (c.Aplus > 0 and c.Aminus > 0):
        raise ProjectionError("both signs must be present")
    if not (c.Dplus > 0 and c.Dminus > 0):
        raise ProjectionError("Choquard self-terms vanish; f is unbounded above")

    rng = None if grid_seed == 0 else np.random.default_rng(grid_seed)
    ss, tt = _start_grid(rng)
    vals = np.array([[f_eval(c, s, t) for t in tt] for s in ss])
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    s, t = float(ss[i]), float(tt[j])

    for _ in range(max_iter):
        s_new = _argmax_s(c, t)
        t_new = _argmax_s(c.swapped(), s_new)
        done = abs(s_new - s) <= 1e-6 * s_new and abs(t_new - t) <= 1e-6 * t_new
        s, t = s_new, t_new
        if done:
            break

    rel = lambda s, t: math.hypot(*f_grad(c, s, t)) / _grad_scale(c, s, t)  # noqa: E731
    best = (rel(s, t), s, t)
    for _ in range(50):
        g = np.array(f_grad(c, s, t))
        try:
            step = np.linalg.solve(f_hess(c, s, t), g)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while not (s - lam * step[0] > 0 and t - lam * step[1] > 0):
            lam *= 0.5
        s, t = s - lam * step[0], t - lam * step[1]
        gn = rel(s, t)
        if gn < best[0]:
            best = (gn, s, t)
        if np.max(np.abs(lam * step) / np.array([s, t])) <= 1e-15:
            break
    gn, s, t = best

    if not (s > 0 and t > 0 and math.isfinite(s) and math.isfinite(t)):
        raise ProjectionError(f"pair iteration left the positive quadrant: ({s}, {t})")
    if gn > tol:
        raise ProjectionError(f"pair projection did not converge (|grad f| = {gn:.3e})")
    H = f_hess(c, s, t)
    definite = bool(H[0, 0] < 0 and np.linalg.det(H) > 0)
    return PairProjection(s, t, gn, definite, f_eval(c, s, t))


def multi_start_pair(
    c: SignCoeffs, seeds=range(10), tol: float = 1e-9
) -> tuple[PairProjection, list[PairProjection]]:
    """Run :func:`project_pair` from several jittered grids.

    The winner has the smallest gradient norm (ties broken by ``(s, t)``).
    """
    runs = [project_pair(c, tol, grid_seed=int(k)) for k in seeds]
    best = min(runs, key=lambda r: (r.grad_norm, r.s_u, r.t_u))
    return best, runs
