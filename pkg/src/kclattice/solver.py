"""Ground states and sign-changing ground states by projected gradient descent.

Each iterate is kept on the Nehari set (ray projection) or on the
sign-changing Nehari set (pair projection). A step moves along the Sobolev
gradient, i.e. the Riesz representative of ``J'(u)`` in the ``H`` inner
product ``<u, v> = int a grad u grad v + h u v``, and is re-projected; an
Armijo test on ``J`` after projection decides acceptance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .energy import (
    Params,
    energy_J,
    fiber_coeffs,
    h_norm_sq,
    h_values,
    pairing_J_prime,
    residual_EL,
    sign_coeffs,
)
from .green import KernelTable
from .lattice import BoxDomain, Field, _check, lp_norm, split_signs
from .nehari import ProjectionError, project_pair, project_ray

log = logging.getLogger(__name__)

__all__ = [
    "InitSpec",
    "SolveConfig",
    "SolveReport",
    "SolveError",
    "make_init",
    "solve_ground",
    "solve_sign_changing",
    "residual",
    "fiber_curve",
    "boundary_ratio",
]


class SolveError(RuntimeError):
    """Precondition failure or unrecoverable breakdown of an iteration."""


@dataclass(frozen=True)
class InitSpec:
    """Initial guess.

    kind: ``positive_bump`` (Gaussian at the box centre), ``odd_bumps``
    (positive bump shifted by ``offset`` along the first axis and its
    negative mirror image), ``random`` with ``sign_pattern`` ``positive`` or
    ``mixed``, or ``file`` (``path``). ``noise`` adds seeded multiplicative
    jitter to the bump variants.
    """

    kind: str = "positive_bump"
    width: float = 1.5
    offset: int = 2
    sign_pattern: str = "positive"
    noise: float = 0.0
    shift: tuple[int, int, int] = (0, 0, 0)
    path: str | None = None

    def __post_init__(self):
        if self.kind not in ("positive_bump", "odd_bumps", "random", "file"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file init needs a path")
        if not self.width > 0:
            raise ValueError("init width must be positive")
        object.__setattr__(self, "shift", tuple(int(c) for c in self.shift))


@dataclass(frozen=True)
class SolveConfig:
    max_iters: int = 2000
    step0: float = 1.0
    backtrack: float = 0.5
    armijo: float = 1e-4
    tol_residual: float = 1e-6
    tol_nehari: float = 1e-8
    rng_seed: int = 0
    init: InitSpec = field(default_factory=InitSpec)
    max_reseeds: int = 5
    method: str = "fft"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.step0 > 0:
            raise ValueError("step0 must be positive")
        if not 0 < self.backtrack < 1:
            raise ValueError("backtrack factor must lie in (0, 1)")
        if not 0 < self.armijo < 1:
            raise ValueError("armijo constant must lie in (0, 1)")
        if not (self.tol_residual > 0 and self.tol_nehari > 0):
            raise ValueError("tolerances must be positive")


@dataclass
class SolveReport:
    energy: float
    residual_rel: float
    nehari_residuals: list[float]
    iterations: int
    energy_trace: list[float]
    residual_trace: list[float]
    sign_counts: tuple[int, int]
    converged: bool
    min_projected_norm: float = math.inf
    reseeds: int = 0
    pair_trace: list[tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def _bump(dom: BoxDomain, center, width: float) -> np.ndarray:
    X = dom.coords()
    r2 = np.sum((X - np.asarray(center)) ** 2, axis=1)
    return np.exp(-r2 / (2.0 * width * width))


def make_init(dom: BoxDomain, init: InitSpec, seed: int = 0) -> Field:
    from .lattice import load_field

    rng = np.random.default_rng(seed)
    c = np.asarray(dom.center()) + np.asarray(init.shift)
    if init.kind == "file":
        u = load_field(init.path)
        if u.domain != dom:
            raise SolveError(f"init file lives on {u.domain}, expected {dom}")
        return u
    if init.kind == "random":
        if init.sign_pattern == "positive":
            return Field(dom, rng.uniform(0.0, 1.0, dom.size))
        if init.sign_pattern == "mixed":
            return Field(dom, rng.uniform(-1.0, 1.0, dom.size))
        raise ValueError(f"unknown sign pattern {init.sign_pattern!r}")
    if init.kind == "positive_bump":
        v = _bump(dom, c, init.width)
    else:
        e = np.array([init.offset, 0, 0])
        v = _bump(dom, c + e, init.width) - _bump(dom, c - e, init.width)
    if init.noise:
        v = v * (1.0 + init.noise * rng.uniform(-1.0, 1.0, dom.size))
    return Field(dom, v)


class _SobolevGradient:
    """Solves ``(-a Lap + h) g = G`` on the box with zero exterior values."""

    def __init__(self, params: Params, spec, dom: BoxDomain):
        L = dom.L
        n = dom.size
        idx = np.arange(n).reshape(dom.shape)
        rows, cols = [], []
        for ax in range(3):
            a = np.take(idx, range(L - 1), axis=ax).ravel()
            b = np.take(idx, range(1, L), axis=ax).ravel()
            rows += [a, b]
            cols += [b, a]
        rows = np.concatenate(rows) if rows else np.array([], int)
        cols = np.concatenate(cols) if cols else np.array([], int)
        adj = sp.csc_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
        diag = sp.diags(6.0 * params.a + h_values(spec, dom))
        self._solve = spla.factorized((diag - params.a * adj).tocsc())

    def __call__(self, g: Field) -> Field:
        return Field(g.domain, self._solve(g.values))


def residual(params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, method="fft") -> float:
    """``||G||_2 / max(1, ||u||_2)`` for the Euler-Lagrange defect ``G``."""
    G = residual_EL(params, spec, ker, dom, u, method)
    return float(np.linalg.norm(G.values)) / max(1.0, lp_norm(u, 2))


def boundary_ratio(u: Field) -> float:
    """``max |u|`` on the outer shell of the box over ``max |u|`` overall."""
    g = np.abs(u.grid)
    top = g.max()
    if top == 0.0:
        return 0.0
    inner = g[1:-1, 1:-1, 1:-1]
    shell = g.copy()
    if inner.size:
        shell[1:-1, 1:-1, 1:-1] = 0.0
    return float(shell.max() / top)


def _ray_project(params, spec, ker, dom, w, method):
    c = fiber_coeffs(params, spec, ker, dom, w, method)
    try:
        r = project_ray(c)
    except ProjectionError as exc:
        raise SolveError(f"Nehari projection failed: {exc}") from exc
    return r.s_star * w


def solve_ground(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, cfg: SolveConfig | None = None,
    init: Field | None = None,
) -> tuple[Field, SolveReport]:
    """Minimise ``J`` over the Nehari set."""
    cfg = cfg or SolveConfig()
    ker.require_radius(dom)
    m = cfg.method
    u0 = init if init is not None else make_init(dom, cfg.init, cfg.rng_seed)
    _check(dom, u0)
    if not np.any(u0.values):
        raise SolveError("initial field is zero")
    precond = _SobolevGradient(params, spec, dom)

    u = _ray_project(params, spec, ker, dom, u0, m)
    J = energy_J(params, spec, ker, dom, u, m)
    min_norm = math.sqrt(h_norm_sq(params, spec, dom, u))
    energies, residuals = [J], []
    tau = cfg.step0
    converged = False
    it = 0
    while True:
        G = residual_EL(params, spec, ker, dom, u, m)
        res = float(np.linalg.norm(G.values)) / max(1.0, lp_norm(u, 2))
        norm2 = h_norm_sq(params, spec, dom, u)
        neh = abs(float(np.dot(G.values, u.values))) / norm2
        residuals.append(res)
        if res <= cfg.tol_residual and neh <= cfg.tol_nehari:
            converged = True
            break
        if it >= cfg.max_iters:
            break
        d = precond(G)
        slope = float(np.dot(G.values, d.values))
        accepted = False
        while tau > 1e-14 * cfg.step0:
            v = _ray_project(params, spec, ker, dom, u - tau * d, m)
            Jv = energy_J(params, spec, ker, dom, v, m)
            if Jv <= J - cfg.armijo * tau * slope:
                accepted = True
                break
            tau *= cfg.backtrack
        if not accepted:
            log.warning("ground solve: line search stalled at iteration %d (residual %.3e)", it, res)
            break
        u, J = v, Jv
        min_norm = min(min_norm, math.sqrt(h_norm_sq(params, spec, dom, u)))
        energies.append(J)
        it += 1
        tau = min(cfg.step0, tau / cfg.backtrack)

    if float(np.sum(u.values)) < 0:
        u = -u
    pos = int(np.count_nonzero(u.values > 0))
    neg = int(np.count_nonzero(u.values < 0))
    G = residual_EL(params, spec, ker, dom, u, m)
    report = SolveReport(
        energy=J,
        residual_rel=residuals[-1],
        nehari_residuals=[abs(float(np.dot(G.values, u.values))) / h_norm_sq(params, spec, dom, u)],
        iterations=it,
        energy_trace=energies,
        residual_trace=residuals,
        sign_counts=(pos, neg),
        converged=converged,
        min_projected_norm=min_norm,
    )
    log.info("ground solve: J=%.12g residual=%.3e iterations=%d converged=%s", J, report.residual_rel, it, converged)
    return u, report


def _pair_project(params, spec, ker, dom, w, method):
    c = sign_coeffs(params, spec, ker, dom, w, method)
    try:
        pr = project_pair(c)
    except ProjectionError as exc:
        raise SolveError(f"sign-changing projection failed: {exc}") from exc
    wp, wm = split_signs(w)
    return pr.s_u * wp + pr.t_u * wm, pr


def _sign_residuals(G: Field, u: Field, norm2: float) -> list[float]:
    up, um = split_signs(u)
    return [abs(float(np.dot(G.values, part.values))) / norm2 for part in (up, um)]


def solve_sign_changing(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, cfg: SolveConfig | None = None,
    init: Field | None = None,
) -> tuple[Field, SolveReport]:
    """Minimise ``J`` over the sign-changing Nehari set (``p > 4``)."""
    cfg = cfg or SolveConfig(init=InitSpec(kind="odd_bumps"))
    if not params.p > 4:
        raise SolveError(f"sign-changing solve needs p > 4, got p = {params.p}")
    ker.require_radius(dom)
    m = cfg.method
    u0 = init if init is not None else make_init(dom, cfg.init, cfg.rng_seed)
    _check(dom, u0)
    seed_plus, seed_minus = split_signs(u0)
    if not (np.any(seed_plus.values) and np.any(seed_minus.values)):
        raise SolveError("sign-changing solve needs an initial field with both signs")
    precond = _SobolevGradient(params, spec, dom)
    reseeds = 0

    def revive(w: Field) -> Field:
        nonlocal reseeds
        wp, wm = split_signs(w)
        scale = lp_norm(w, math.inf)
        if not np.any(wp.values):
            reseeds += 1
            log.warning("positive part vanished; re-seeding from the initial pattern (%d)", reseeds)
            w = w + (1e-3 * scale / lp_norm(seed_plus, math.inf)) * seed_plus * (wm.values == 0)
        if not np.any(wm.values):
            reseeds += 1
            log.warning("negative part vanished; re-seeding from the initial pattern (%d)", reseeds)
            w = w + (1e-3 * scale / lp_norm(seed_minus, math.inf)) * seed_minus * (wp.values == 0)
        if reseeds > cfg.max_reseeds:
            raise SolveError(f"sign death persisted after {cfg.max_reseeds} re-seeds")
        return w

    u, pr = _pair_project(params, spec, ker, dom, u0, m)
    pairs = [(pr.s_u, pr.t_u)]
    J = energy_J(params, spec, ker, dom, u, m)
    min_norm = math.sqrt(h_norm_sq(params, spec, dom, u))
    energies, residuals = [J], []
    tau = cfg.step0
    converged = False
    it = 0
    while True:
        G = residual_EL(params, spec, ker, dom, u, m)
        res = float(np.linalg.norm(G.values)) / max(1.0, lp_norm(u, 2))
        nr = _sign_residuals(G, u, h_norm_sq(params, spec, dom, u))
        residuals.append(res)
        if res <= cfg.tol_residual and max(nr) <= cfg.tol_nehari:
            converged = True
            break
        if it >= cfg.max_iters:
            break
        d = precond(G)
        slope = float(np.dot(G.values, d.values))
        accepted = False
        while tau > 1e-14 * cfg.step0:
            w = revive(u - tau * d)
            v, pv = _pair_project(params, spec, ker, dom, w, m)
            Jv = energy_J(params, spec, ker, dom, v, m)
            if Jv <= J - cfg.armijo * tau * slope:
                accepted = True
                break
            tau *= cfg.backtrack
        if not accepted:
            log.warning("sign-changing solve: line search stalled at iteration %d (residual %.3e)", it, res)
            break
        u, J = v, Jv
        pairs.append((pv.s_u, pv.t_u))
        min_norm = min(min_norm, math.sqrt(h_norm_sq(params, spec, dom, u)))
        energies.append(J)
        it += 1
        tau = min(cfg.step0, tau / cfg.backtrack)

    G = residual_EL(params, spec, ker, dom, u, m)
    report = SolveReport(
        energy=J,
        residual_rel=residuals[-1],
        nehari_residuals=_sign_residuals(G, u, h_norm_sq(params, spec, dom, u)),
        iterations=it,
        energy_trace=energies,
        residual_trace=residuals,
        sign_counts=(int(np.count_nonzero(u.values > 0)), int(np.count_nonzero(u.values < 0))),
        converged=converged,
        min_projected_norm=min_norm,
        reseeds=reseeds,
        pair_trace=pairs,
    )
    log.info("sign-changing solve: J=%.12g residual=%.3e iterations=%d converged=%s", J, report.residual_rel, it, converged)
    return u, report


def fiber_curve(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, s_grid, method="fft"
) -> np.ndarray:
    """Rows ``(s, J(su), (J'(su), su))`` evaluated directly on the scaled field."""
    _check(dom, u)
    if not np.any(u.values):
        raise ValueError("fiber curve needs a nonzero field")
    rows = []
    for s in s_grid:
        su = float(s) * u
        rows.append(
            (
                float(s),
                energy_J(params, spec, ker, dom, su, method),
                pairing_J_prime(params, spec, ker, dom, su, su, method),
            )
        )
    return np.array(rows)
