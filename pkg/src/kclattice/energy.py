"""Energy functional of the Kirchhoff-Choquard problem on a box, and its pieces.

    J(u) = 1/2 ||u||^2 + b/4 (int |grad u|^2)^2 - 1/(2p) int (R * |u|^p) |u|^p

with ``||u||^2 = int a |grad u|^2 + h u^2``. Integrals are sums over Z^3 with
``u`` extended by zero outside the box.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .green import KernelTable, choquard_pairing, convolve
from .lattice import (
    BoxDomain,
    Field,
    _check,
    dirichlet_energy,
    dirichlet_form,
    k_v,
    laplacian,
    split_signs,
)

__all__ = [
    "Params",
    "ConstantPotential",
    "PeriodicPotential",
    "CoercivePotential",
    "FiberCoeffs",
    "SignCoeffs",
    "h_eval",
    "h_values",
    "h_norm_sq",
    "abs_pow",
    "energy_J",
    "residual_EL",
    "pairing_J_prime",
    "fiber_coeffs",
    "fiber_value",
    "sign_coeffs",
    "f_eval",
    "f_grad",
    "f_hess",
    "decomposition_check",
]


@dataclass(frozen=True)
class Params:
    a: float = 1.0
    b: float = 1.0
    p: float = 3.0
    alpha: float = 2.0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"a must be positive, got {self.a}")
        if not self.b > 0:
            raise ValueError(f"b must be positive, got {self.b}")
        if not self.p > 2:
            raise ValueError(f"p must exceed 2, got {self.p}")
        if not 0 < self.alpha < 3:
            raise ValueError(f"alpha must lie in (0, 3), got {self.alpha}")


# --- potentials ------------------------------------------------------------


@dataclass(frozen=True)
class ConstantPotential:
    h0: float = 1.0

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("h0 must be positive")

    def values(self, coords: np.ndarray) -> np.ndarray:
        return np.full(len(coords), float(self.h0))


@dataclass(frozen=True)
class PeriodicPotential:
    """``h(x) = cell[x mod tau]``; ``cell`` is indexed like a box of side ``tau``."""

    tau: int
    cell: tuple
    h0: float | None = None

    def __post_init__(self):
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError("tau must be a positive integer")
        cell = tuple(float(c) for c in np.asarray(self.cell, dtype=float).ravel())
        if len(cell) != self.tau**3:
            raise ValueError(f"periodic cell needs tau^3 = {self.tau**3} entries, got {len(cell)}")
        object.__setattr__(self, "cell", cell)
        h0 = min(cell) if self.h0 is None else float(self.h0)
        if not h0 > 0:
            raise ValueError("periodic potential needs h0 > 0")
        if min(cell) < h0:
            raise ValueError(f"periodic cell entry {min(cell)} falls below h0 = {h0}")
        object.__setattr__(self, "h0", h0)

    def values(self, coords: np.ndarray) -> np.ndarray:
        t = self.tau
        r = np.mod(np.asarray(coords, dtype=np.int64), t)
        return np.asarray(self.cell)[(r[:, 0] * t + r[:, 1]) * t + r[:, 2]]


@dataclass(frozen=True)
class CoercivePotential:
    """``h(x) = h0 + slope * |x - center|_1``."""

    h0: float = 1.0
    slope: float = 0.5
    center: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if not (self.h0 > 0 and self.slope > 0):
            raise ValueError("coercive potential needs h0 > 0 and slope > 0")
        object.__setattr__(self, "center", tuple(int(c) for c in self.center))

    def values(self, coords: np.ndarray) -> np.ndarray:
        d = np.abs(np.asarray(coords) - np.asarray(self.center)).sum(axis=1)
        return self.h0 + self.slope * d


def h_eval(spec, x) -> float:
    return float(spec.values(np.asarray([x], dtype=np.int64))[0])


def h_values(spec, dom: BoxDomain) -> np.ndarray:
    return spec.values(dom.coords())


# --- functional ------------------------------------------------------------


def abs_pow(v: np.ndarray, q: float) -> np.ndarray:
    """``|v|^q`` with ``0^q = 0``."""
    a = np.abs(v)
    if float(q).is_integer():
        return a ** int(q)
    out = np.zeros_like(a)
    nz = a > 0
    out[nz] = np.exp(q * np.log(a[nz]))
    return out


def _signed_pow(v: np.ndarray, q: float) -> np.ndarray:
    # sign(v) |v|^q, i.e. |v|^(q-1) v for q = p - 1
    return np.sign(v) * abs_pow(v, q)


def h_norm_sq(params: Params, spec, dom: BoxDomain, u: Field) -> float:
    _check(dom, u)
    return params.a * dirichlet_energy(dom, u) + float(
        np.dot(h_values(spec, dom), u.values * u.values)
    )


def _choquard(params, ker, dom, u, method):
    w = Field(dom, abs_pow(u.values, params.p))
    return choquard_pairing(ker, dom, w, w, method)


def energy_J(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, method: str = "fft"
) -> float:
    _check(dom, u)
    D = dirichlet_energy(dom, u)
    norm2 = params.a * D + float(np.dot(h_values(spec, dom), u.values * u.values))
    return (
        0.5 * norm2
        + 0.25 * params.b * D * D
        - _choquard(params, ker, dom, u, method) / (2.0 * params.p)
    )


def residual_EL(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, method: str = "fft"
) -> Field:
    """Pointwise defect of the Euler-Lagrange equation on the box.

    ``-(a + b D(u)) Lap u + h u - (R * |u|^p) |u|^(p-2) u``; summing it against
    any ``phi`` supported in the box gives ``(J'(u), phi)``.
    """
    _check(dom, u)
    p = params.p
    kirchhoff = params.a + params.b * dirichlet_energy(dom, u)
    conv = convolve(ker, dom, Field(dom, abs_pow(u.values, p)), method)
    g = (
        -kirchhoff * laplacian(dom, u).values
        + h_values(spec, dom) * u.values
        - conv.values * _signed_pow(u.values, p - 1.0)
    )
    return Field(dom, g)


def pairing_J_prime(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, phi: Field,
    method: str = "fft",
) -> float:
    _check(dom, phi)
    return float(np.dot(residual_EL(params, spec, ker, dom, u, method).values, phi.values))


# --- fiber along a ray -----------------------------------------------------


@dataclass(frozen=True)
class FiberCoeffs:
    """``(J'(su), su) = s^2 A + s^4 B - s^(2p) D``."""

    A: float
    B: float
    D: float
    p: float

    def energy(self, s: float) -> float:
        """``J(su)`` from the same coefficients."""
        return 0.5 * s**2 * self.A + 0.25 * s**4 * self.B - s ** (2 * self.p) * self.D / (2 * self.p)


def fiber_coeffs(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, method: str = "fft"
) -> FiberCoeffs:
    _check(dom, u)
    if not np.any(u.values):
        raise ValueError("fiber coefficients need a nonzero field")
    G = dirichlet_energy(dom, u)
    A = params.a * G + float(np.dot(h_values(spec, dom), u.values * u.values))
    return FiberCoeffs(A, params.b * G * G, _choquard(params, ker, dom, u, method), params.p)


def fiber_value(c: FiberCoeffs, s: float) -> float:
    return s * s * c.A + s**4 * c.B - s ** (2 * c.p) * c.D


# --- the pair map f(s, t) = J(s u+ + t u-) -------------------------------


@dataclass(frozen=True)
class SignCoeffs:
    """Scalars that determine ``f(s, t) = J(s u+ + t u-)`` exactly."""

    Aplus: float
    Aminus: float
    Gplus: float
    Gminus: float
    Dplus: float
    Dminus: float
    E: float
    K: float
    a: float
    b: float
    p: float

    def swapped(self) -> SignCoeffs:
        return SignCoeffs(
            self.Aminus, self.Aplus, self.Gminus, self.Gplus, self.Dminus, self.Dplus,
            self.E, self.K, self.a, self.b, self.p,
        )


def sign_coeffs(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, method: str = "fft"
) -> SignCoeffs:
    _check(dom, u)
    up, um = split_signs(u)
    if not (np.any(up.values) and np.any(um.values)):
        raise ValueError("sign coefficients need a sign-changing field")
    p = params.p
    wp = Field(dom, abs_pow(up.values, p))
    wm = Field(dom, abs_pow(um.values, p))
    cp = convolve(ker, dom, wp, method).values
    cm = convolve(ker, dom, wm, method).values
    return SignCoeffs(
        Aplus=h_norm_sq(params, spec, dom, up),
        Aminus=h_norm_sq(params, spec, dom, um),
        Gplus=dirichlet_energy(dom, up),
        Gminus=dirichlet_energy(dom, um),
        Dplus=float(np.dot(cp, wp.values)),
        Dminus=float(np.dot(cm, wm.values)),
        E=float(np.dot(cp, wm.values)),
        K=k_v(dom, u),
        a=params.a,
        b=params.b,
        p=p,
    )


def f_eval(c: SignCoeffs, s: float, t: float) -> float:
    p, a, b, K = c.p, c.a, c.b, c.K
    Gp, Gm = c.Gplus, c.Gminus
    return (
        0.5 * s * s * c.Aplus
        + 0.25 * b * s**4 * Gp * Gp
        - s ** (2 * p) * c.Dplus / (2 * p)
        + 0.5 * t * t * c.Aminus
        + 0.25 * b * t**4 * Gm * Gm
        - t ** (2 * p) * c.Dminus / (2 * p)
        - 0.5 * a * s * t * K
        + 0.25 * b * s * s * t * t * K * K
        + 0.5 * b * s * s * t * t * Gp * Gm
        - 0.5 * b * s * t * K * (s * s * Gp + t * t * Gm)
        - (s * t) ** p * c.E / p
    )


def _f_s(c: SignCoeffs, s: float, t: float) -> float:
    p, a, b, K = c.p, c.a, c.b, c.K
    Gp, Gm = c.Gplus, c.Gminus
    return (
        s * c.Aplus
        + b * s**3 * Gp * Gp
        - s ** (2 * p - 1) * c.Dplus
        - 0.5 * a * t * K
        + 0.5 * b * s * t * t * K * K
        + b * s * t * t * Gp * Gm
        - 0.5 * b * t * K * (3 * s * s * Gp + t * t * Gm)
        - s ** (p - 1) * t**p * c.E
    )


def f_grad(c: SignCoeffs, s: float, t: float) -> tuple[float, float]:
    return _f_s(c, s, t), _f_s(c.swapped(), t, s)


def _f_ss(c: SignCoeffs, s: float, t: float) -> float:
    p, b, K = c.p, c.b, c.K
    Gp, Gm = c.Gplus, c.Gminus
    return (
        c.Aplus
        + 3 * b * s * s * Gp * Gp
        - (2 * p - 1) * s ** (2 * p - 2) * c.Dplus
        + 0.5 * b * t * t * K * K
        + b * t * t * Gp * Gm
        - 3 * b * s * t * K * Gp
        - (p - 1) * s ** (p - 2) * t**p * c.E
    )


def f_hess(c: SignCoeffs, s: float, t: float) -> np.ndarray:
    p, a, b, K = c.p, c.a, c.b, c.K
    Gp, Gm = c.Gplus, c.Gminus
    st = (
        -0.5 * a * K
        + b * s * t * K * K
        + 2 * b * s * t * Gp * Gm
        - 1.5 * b * K * (s * s * Gp + t * t * Gm)
        - p * (s * t) ** (p - 1) * c.E
    )
    return np.array([[_f_ss(c, s, t), st], [st, _f_ss(c.swapped(), t, s)]])


# --- decomposition identities ---------------------------------------------


@dataclass
class DecompositionReport:
    """Relative residuals ``|lhs - rhs| / (1 + |lhs|)`` of each identity."""

    residuals: dict = field(default_factory=dict)
    # a continuum-style splitting misses exactly the K_V terms
    continuum_gap: float = 0.0
    kv_terms: float = 0.0

    def max_residual(self) -> float:
        return max(self.residuals.values())


def _rel(lhs: float, rhs: float) -> float:
    return abs(lhs - rhs) / (1.0 + abs(lhs))


def decomposition_check(
    params: Params, spec, ker: KernelTable, dom: BoxDomain, u: Field, s: float, t: float,
    method: str = "fft",
) -> DecompositionReport:
    """Evaluate both sides of the discrete splitting identities for ``s u+ + t u-``.

    Left-hand sides are computed on the combined field; right-hand sides
    from quantities of ``s u+`` and ``t u-`` separately.
    """
    _check(dom, u)
    up, um = split_signs(u)
    if not (np.any(up.values) and np.any(um.values)):
        raise ValueError("decomposition_check needs a sign-changing field")
    a, b, p = params.a, params.b, params.p
    K = k_v(dom, u)
    sp, tm = s * up, t * um
    w = sp + tm
    J = lambda f: energy_J(params, spec, ker, dom, f, method)  # noqa: E731
    dJ = lambda f, g: pairing_J_prime(params, spec, ker, dom, f, g, method)  # noqa: E731
    Gs, Gt = dirichlet_energy(dom, sp), dirichlet_energy(dom, tm)
    cross = choquard_pairing(
        ker, dom, Field(dom, abs_pow(sp.values, p)), Field(dom, abs_pow(tm.values, p)), method
    )
    rep = DecompositionReport()
    r = rep.residuals

    # gradient splittings
    r["grad_i"] = _rel(dirichlet_energy(dom, w), Gs + Gt - s * t * K)
    r["grad_ii"] = _rel(dirichlet_form(dom, w, sp), Gs - 0.5 * s * t * K)
    r["grad_iii"] = _rel(dirichlet_form(dom, w, tm), Gt - 0.5 * s * t * K)

    shared = (
        -0.5 * a * s * t * K
        - 0.5 * b * s * t * K * (Gs + Gt)
    )
    r["energy_i"] = _rel(
        J(w),
        J(sp) + J(tm) + shared + 0.25 * b * (s * t * K) ** 2 + 0.5 * b * Gs * Gt - cross / p,
    )
    tail = shared + 0.5 * b * (s * t * K) ** 2 + b * Gs * Gt - cross
    r["pairing_ii"] = _rel(dJ(w, sp), dJ(sp, sp) + tail - b * s * t * K * Gs)
    r["pairing_iii"] = _rel(dJ(w, tm), dJ(tm, tm) + tail - b * s * t * K * Gt)

    # alternative pairing formula, stated at s = t = 1 for the field w itself
    wp, wm = split_signs(w)
    Kw = k_v(dom, w)
    Dw = dirichlet_energy(dom, w)
    conv = convolve(ker, dom, Field(dom, abs_pow(w.values, p)), method).values
    for name, part in (("alt_plus", wp), ("alt_minus", wm)):
        rhs = (
            h_norm_sq(params, spec, dom, part)
            + b * Dw * (dirichlet_energy(dom, part) - 0.5 * Kw)
            - 0.5 * a * Kw
            - float(np.dot(conv, abs_pow(part.values, p)))
        )
        r[name] = _rel(dJ(w, part), rhs)

    # continuum splitting at s = t = 1 versus the exact one
    G1p, G1m = dirichlet_energy(dom, up), dirichlet_energy(dom, um)
    cross1 = choquard_pairing(
        ker, dom, Field(dom, abs_pow(up.values, p)), Field(dom, abs_pow(um.values, p)), method
    )
    naive = J(up) + J(um) + 0.5 * b * G1p * G1m - cross1 / p
    rep.continuum_gap = J(u) - naive
    rep.kv_terms = -0.5 * a * K + 0.25 * b * K * K - 0.5 * b * K * (G1p + G1m)
    r["continuum_gap"] = _rel(rep.continuum_gap, rep.kv_terms)
    return rep
