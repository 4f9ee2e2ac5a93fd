"""Seeded identity and inequality suite behind ``kclattice verify``."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import (
    ConstantPotential,
    Params,
    decomposition_check,
    h_values,
    pairing_J_prime,
)
from .green import KernelTable, _dense_matrix, choquard_pairing, convolve_direct, convolve_fft, hls_exponents, hls_ratio
from .lattice import BoxDomain, Field, dirichlet_energy, k_v, lp_norm

__all__ = [
    "CheckResult",
    "VerifyReport",
    "signed_permutations",
    "kernel_symmetry_defect",
    "random_sign_changing",
    "energy_extended",
    "fd_error_ratios",
    "run_verify",
]


@dataclass
class CheckResult:
    name: str
    value: float
    limit: str
    passed: bool


@dataclass
class VerifyReport:
    seed: int
    checks: list[CheckResult] = field(default_factory=list)
    measured: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, value, limit, passed):
        self.checks.append(CheckResult(name, float(value), limit, bool(passed)))

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "passed": self.passed,
            "checks": [vars(c) for c in self.checks],
            "measured": self.measured,
        }


def signed_permutations():
    """The 48 maps ``z -> (e_0 z_pi0, e_1 z_pi1, e_2 z_pi2)``."""
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1, -1), repeat=3):
            yield perm, signs


def kernel_symmetry_defect(full: np.ndarray) -> float:
    """Largest difference between a centred cube table and its symmetric images."""
    worst = 0.0
    for perm, signs in signed_permutations():
        img = np.transpose(full, perm)
        for ax, sgn in enumerate(signs):
            if sgn < 0:
                img = np.flip(img, axis=ax)
        worst = max(worst, float(np.max(np.abs(img - full))))
    return worst


def random_sign_changing(dom: BoxDomain, rng: np.random.Generator) -> Field:
    """Uniform field on ``[-1, 1]`` with both signs forced present."""
    v = rng.uniform(-1.0, 1.0, dom.size)
    if dom.size >= 2:
        v[0], v[-1] = abs(v[0]) + 0.1, -abs(v[-1]) - 0.1
    return Field(dom, v)


def energy_extended(params, spec, ker, dom, u) -> np.longdouble:
    """``J(u)`` re-evaluated in extended precision with the explicit O(N^2) sum.

    Keeps rounding far below the truncation error of the difference quotients.
    """
    ld = np.longdouble
    v = np.asarray(u.values, dtype=ld).reshape(dom.shape)
    P = np.pad(v, 1)
    D = sum(np.sum(np.diff(P, axis=ax) ** 2) for ax in range(3))
    h = np.asarray(h_values(spec, dom), dtype=ld)
    flat = v.reshape(-1)
    w = np.abs(flat) ** ld(params.p)
    R = np.asarray(_dense_matrix(ker, dom), dtype=ld)
    chq = np.dot(R @ w, w)
    a, b, p = ld(params.a), ld(params.b), ld(params.p)
    return (a * D + np.dot(h, flat * flat)) / 2 + b * D * D / 4 - chq / (2 * p)


def fd_error_ratios(params, spec, ker, dom, u, phi, eps=1e-4):
    """Central-difference errors at ``eps`` and ``eps/2`` and their ratio."""
    exact = pairing_J_prime(params, spec, ker, dom, u, phi)

    def fd(e):
        hi = energy_extended(params, spec, ker, dom, u + e * phi)
        lo = energy_extended(params, spec, ker, dom, u - e * phi)
        return float((hi - lo) / (2 * np.longdouble(e)))

    e1 = abs(fd(eps) - exact)
    e2 = abs(fd(eps / 2) - exact)
    return e1, e2, (e1 / e2 if e2 > 0 else math.inf)


def _bounded_away(dom, rng):
    mag = rng.uniform(0.2, 1.0, dom.size)
    sgn = np.where(rng.uniform(size=dom.size) < 0.5, -1.0, 1.0)
    u = Field(dom, mag * sgn)
    return u / lp_norm(u, 2)


def run_verify(
    ker: KernelTable,
    seed: int = 0,
    params: Params | None = None,
    spec=None,
    n_fields: int = 1000,
    n_identity: int = 100,
    n_fd: int = 20,
    n_conv: int = 100,
) -> VerifyReport:
    """Run every check on seeded random fields; see :class:`VerifyReport`."""
    rng = np.random.default_rng(seed)
    params = params or Params(a=1.0, b=1.0, p=3.0, alpha=ker.alpha)
    spec = spec or ConstantPotential(1.0)
    rep = VerifyReport(seed)

    rep.add("kernel_symmetry", kernel_symmetry_defect(ker.full()), "== 0", kernel_symmetry_defect(ker.full()) == 0.0)

    dom5 = BoxDomain(5)
    kv_max, dir_ratio, interp = -math.inf, 0.0, -math.inf
    for _ in range(n_fields):
        u = Field(dom5, rng.uniform(-1.0, 1.0, dom5.size))
        kv_max = max(kv_max, k_v(dom5, u))
        n2 = lp_norm(u, 2) ** 2
        dir_ratio = max(dir_ratio, dirichlet_energy(dom5, u) / n2)
        lhs = lp_norm(u, 4) ** 4
        rhs = n2 * lp_norm(u, math.inf) ** 2
        interp = max(interp, (lhs - rhs) / rhs)
    rep.add("kv_nonpositive", kv_max, "<= 0", kv_max <= 0.0)
    rep.add("dirichlet_bound", dir_ratio, "<= 12", dir_ratio <= 12.0)
    rep.add("interpolation_2_4", interp, "<= 0", interp <= 1e-15)

    worst, alt, gap = 0.0, 0.0, 0.0
    sizes = [L for L in range(3, 10) if L - 1 <= ker.M]
    ps = (3.0, 4.5, 5.0)
    for i in range(n_identity):
        dom = BoxDomain(sizes[i % len(sizes)])
        prm = Params(params.a, params.b, ps[i % len(ps)], ker.alpha)
        u = random_sign_changing(dom, rng)
        s, t = rng.uniform(1e-3, 3.0, 2)
        r = decomposition_check(prm, spec, ker, dom, u, float(s), float(t))
        res = r.residuals
        worst = max(worst, *(v for k, v in res.items() if not k.startswith("alt") and k != "continuum_gap"))
        alt = max(alt, res["alt_plus"], res["alt_minus"])
        gap = max(gap, res["continuum_gap"])
    rep.add("decomposition_identities", worst, "<= 1e-10", worst <= 1e-10)
    rep.add("alternative_pairing", alt, "<= 1e-10", alt <= 1e-10)
    rep.add("continuum_gap_is_kv_terms", gap, "<= 1e-10", gap <= 1e-10)

    ratios = []
    for _ in range(n_fd):
        u, phi = _bounded_away(dom5, rng), _bounded_away(dom5, rng)
        ratios.append(fd_error_ratios(params, spec, ker, dom5, u, phi)[2])
    lo, hi = min(ratios), max(ratios)
    rep.add("fd_ratio_min", lo, ">= 3.5", lo >= 3.5)
    rep.add("fd_ratio_max", hi, "<= 4.5", hi <= 4.5)

    r_hls, s_hls = hls_exponents(ker.alpha)
    scale_dev, hls_max = 0.0, 0.0
    for _ in range(n_fields):
        u = Field(dom5, rng.uniform(-1.0, 1.0, dom5.size))
        v = Field(dom5, rng.uniform(-1.0, 1.0, dom5.size))
        lam = float(rng.uniform(0.1, 10.0))
        base = hls_ratio(ker, dom5, u, v, r_hls, s_hls)
        scale_dev = max(scale_dev, abs(hls_ratio(ker, dom5, lam * u, v, r_hls, s_hls) - base) / base)
        hls_max = max(hls_max, base)
    rep.add("hls_scale_invariance", scale_dev, "<= 1e-12", scale_dev <= 1e-12)
    rep.measured["hls_ratio_max"] = hls_max

    conv_dev = 0.0
    for _ in range(n_conv):
        w = Field(dom5, rng.uniform(-1.0, 1.0, dom5.size))
        a, b = convolve_fft(ker, dom5, w).values, convolve_direct(ker, dom5, w).values
        conv_dev = max(conv_dev, float(np.max(np.abs(a - b)) / np.max(np.abs(b))))
    rep.add("fft_vs_direct", conv_dev, "<= 1e-12", conv_dev <= 1e-12)

    d0 = Field.delta(dom5, (2, 2, 2))
    rep.measured["pairing_delta_delta"] = choquard_pairing(ker, dom5, d0, d0)
    rep.measured["kernel_min_value"] = ker.min_value()
    return rep
