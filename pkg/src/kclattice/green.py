"""Green's function of the discrete fractional Laplacian on Z^3.

The kernel is

    R_alpha(z) = K_alpha (2 pi)^-3 int_{T^3} cos(z.k) mu(k)^(-alpha/2) dk,
    K_alpha    = (2 pi)^-3 int_{T^3} mu(k)^(alpha/2) dk,
    mu(k)      = 6 - 2 sum_j cos(k_j).

Both integrals are evaluated with the shifted (midpoint) tensor rule, which
never samples the singular point k = 0. The leading quadrature error of the
kernel decays like ``n^(alpha-3)``; the table stores the Richardson
extrapolation of the two finest levels.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft

from .lattice import BoxDomain, Field, _check, lp_norm

log = logging.getLogger(__name__)

__all__ = [
    "QuadratureSpec",
    "KernelTable",
    "KernelRadiusError",
    "QuadratureError",
    "mu",
    "fractional_degree",
    "quadrature_levels",
    "build_kernel",
    "canonical_offsets",
    "convolve_direct",
    "convolve_fft",
    "convolve",
    "choquard_pairing",
    "hls_ratio",
    "hls_exponents",
    "save_kernel",
    "load_kernel",
    "cached_kernel",
    "cache_path",
]

CACHE_VERSION = 1


class KernelRadiusError(ValueError):
    """The kernel table does not cover every offset inside the box."""


class QuadratureError(RuntimeError):
    """Refinement did not reach the requested accuracy."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Midpoint tensor rule with ``n`` nodes per axis on the coarsest level.

    Level ``j`` uses ``n * 2**j`` nodes; ``refinement_levels`` levels are
    computed.
    """

    n: int = 128
    refinement_levels: int = 3
    rule: str = "midpoint-tensor"

    def __post_init__(self):
        if self.n < 8 or self.n % 2:
            raise ValueError(f"nodes per axis must be even and >= 8, got {self.n}")
        if self.refinement_levels < 2:
            raise ValueError("at least two refinement levels are needed")
        if self.rule != "midpoint-tensor":
            raise ValueError(f"unknown quadrature rule {self.rule!r}")

    @property
    def sizes(self) -> list[int]:
        return [self.n * 2**j for j in range(self.refinement_levels)]

    @property
    def finest(self) -> int:
        return self.sizes[-1]


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 3.0:
        raise ValueError(f"alpha must lie in (0, 3), got {alpha}")


def mu(k) -> np.ndarray | float:
    """Symbol ``6 - 2 sum cos(k_j)`` of the negative lattice Laplacian."""
    k = np.asarray(k, dtype=float)
    val = 6.0 - 2.0 * np.cos(k).sum(axis=-1)
    return float(val) if val.ndim == 0 else val


def _half_nodes(n: int) -> np.ndarray:
    # nodes in (0, pi); the rest follow from k -> 2 pi - k
    return 2.0 * np.pi * (np.arange(n // 2) + 0.5) / n


def _slab_symbol(c: np.ndarray, lo: int, hi: int) -> np.ndarray:
    return 6.0 - 2.0 * (c[lo:hi, None, None] + c[None, :, None] + c[None, None, :])


_SLAB = 16


def _midpoint_mean(n: int, power: float) -> float:
    c = np.cos(_half_nodes(n))
    h = c.size
    total = 0.0
    for lo in range(0, h, _SLAB):
        total += float(np.sum(_slab_symbol(c, lo, min(lo + _SLAB, h)) ** power))
    return total / h**3


def _midpoint_octant(alpha: float, M: int, n: int) -> np.ndarray:
    """Raw midpoint values of ``(2 pi)^-3 int cos(z.k) mu^(-alpha/2)`` for z in [0, M]^3."""
    k = _half_nodes(n)
    c = np.cos(k)
    h = k.size
    C = np.cos(np.outer(np.arange(M + 1), k))
    out = np.zeros((M + 1, M + 1, M + 1))
    for lo in range(0, h, _SLAB):
        hi = min(lo + _SLAB, h)
        F = _slab_symbol(c, lo, hi) ** (-0.5 * alpha)
        T = np.tensordot(F, C, axes=([2], [1]))  # (k1, k2, z3)
        T = np.tensordot(T, C, axes=([1], [1]))  # (k1, z3, z2)
        T = np.tensordot(C[:, lo:hi], T, axes=([1], [0]))  # (z1, z3, z2)
        out += T.transpose(0, 2, 1)
    return out / h**3


def fractional_degree(alpha: float, quad: QuadratureSpec | None = None) -> float:
    """``K_alpha``, the torus mean of ``mu^(alpha/2)``, on the finest level."""
    _check_alpha(alpha)
    quad = quad or QuadratureSpec()
    return _midpoint_mean(quad.finest, 0.5 * alpha)


def quadrature_levels(alpha: float, M: int, quad: QuadratureSpec) -> list[np.ndarray]:
    """Raw midpoint kernel octants (without the ``K_alpha`` factor), one per level."""
    _check_alpha(alpha)
    return [_midpoint_octant(alpha, M, n) for n in quad.sizes]


def canonical_offsets(M: int) -> np.ndarray:
    """Sorted offsets ``0 <= a <= b <= c <= M`` in lexicographic order."""
    return np.array(
        [(a, b, c) for a in range(M + 1) for b in range(a, M + 1) for c in range(b, M + 1)],
        dtype=np.int64,
    ).reshape(-1, 3)


def _canonical_lookup(M: int) -> np.ndarray:
    offs = canonical_offsets(M)
    idx = np.empty((M + 1,) * 3, dtype=np.int64)
    r = np.arange(M + 1)
    a, b, c = np.meshgrid(r, r, r, indexing="ij")
    s = np.sort(np.stack([a, b, c], axis=-1), axis=-1)
    pos = {tuple(o): i for i, o in enumerate(offs)}
    for key, i in pos.items():
        idx[np.all(s == key, axis=-1)] = i
    return idx


class KernelTable:
    """Tabulated ``R_alpha(z)`` for ``|z_i| <= M``.

    Only one value per orbit of the 48 signed coordinate permutations is
    stored; every lookup goes through the canonical offset, so symmetric
    offsets return bit-identical values. Instances are treated as immutable.
    """

    def __init__(self, alpha, K_alpha, M, values, quad, est_error):
        self.alpha = float(alpha)
        self.K_alpha = float(K_alpha)
        self.M = int(M)
        self.values = np.asarray(values, dtype=np.float64)
        self.values.setflags(write=False)
        self.quad = quad
        self.est_error = float(est_error)
        if self.values.shape != (len(canonical_offsets(self.M)),):
            raise ValueError("value block does not match the canonical offset count")
        self._lookup = _canonical_lookup(self.M)
        self._cache: dict = {}

    def __repr__(self):
        return (
            f"KernelTable(alpha={self.alpha}, M={self.M}, K_alpha={self.K_alpha:.12g}, "
            f"est_error={self.est_error:.3g})"
        )

    def __call__(self, z) -> float:
        a = np.abs(np.asarray(z, dtype=np.int64))
        if np.any(a > self.M):
            raise KernelRadiusError(f"offset {tuple(z)} exceeds kernel radius {self.M}")
        return float(self.values[self._lookup[tuple(a)]])

    def octant(self, radius: int | None = None) -> np.ndarray:
        """Values on ``[0, radius]^3``."""
        r = self.M if radius is None else radius
        if r > self.M:
            raise KernelRadiusError(f"radius {r} exceeds kernel radius {self.M}")
        return self.values[self._lookup[: r + 1, : r + 1, : r + 1]]

    def full(self, radius: int | None = None) -> np.ndarray:
        """Expanded table over ``[-radius, radius]^3``; centre at index ``radius``."""
        r = self.M if radius is None else radius
        oc = self.octant(r)
        a = np.abs(np.arange(-r, r + 1))
        return oc[np.ix_(a, a, a)]

    def min_value(self) -> float:
        return float(self.values.min())

    def require_radius(self, dom: BoxDomain) -> None:
        if self.M < dom.L - 1:
            raise KernelRadiusError(
                f"kernel radius {self.M} does not cover a box of side {dom.L} "
                f"(need M >= {dom.L - 1})"
            )


def build_kernel(
    alpha: float, M: int, quad: QuadratureSpec | None = None, tol: float | None = None
) -> KernelTable:
    """Tabulate ``R_alpha`` over ``|z_i| <= M``.

    ``est_error`` is the largest absolute change between the extrapolated
    estimates of the two finest level pairs (between the raw levels when only
    two levels are computed). If ``tol`` is given and ``est_error`` exceeds
    it, :class:`QuadratureError` is raised.
    """
    _check_alpha(alpha)
    if int(M) != M or M < 1:
        raise ValueError(f"kernel radius must be a positive integer, got {M}")
    quad = quad or QuadratureSpec()
    levels = quadrature_levels(alpha, M, quad)
    rate = 2.0 ** (3.0 - alpha)
    extrap = [(rate * fine - coarse) / (rate - 1.0) for coarse, fine in zip(levels, levels[1:])]
    if len(extrap) >= 2:
        diff = extrap[-1] - extrap[-2]
    else:
        diff = levels[-1] - levels[-2]
    K = _midpoint_mean(quad.finest, 0.5 * alpha)
    offs = canonical_offsets(M)
    sel = (offs[:, 0], offs[:, 1], offs[:, 2])
    values = K * extrap[-1][sel]
    est = K * float(np.max(np.abs(diff[sel])))
    ker = KernelTable(alpha, K, M, values, quad, est)
    if tol is not None and est > tol:
        raise QuadratureError(f"kernel est_error {est:.3e} exceeds tolerance {tol:.3e}")
    return ker


# --- convolution -----------------------------------------------------------


def _dense_matrix(ker: KernelTable, dom: BoxDomain) -> np.ndarray:
    key = ("dense", dom.L)
    if key not in ker._cache:
        X = dom.coords() - np.asarray(dom.origin)
        diff = np.abs(X[:, None, :] - X[None, :, :])
        oc = ker.octant(dom.L - 1)
        ker._cache[key] = oc[diff[..., 0], diff[..., 1], diff[..., 2]]
    return ker._cache[key]


def convolve_direct(ker: KernelTable, dom: BoxDomain, w: Field) -> Field:
    """``(R * w)(x) = sum_y R(x - y) w(y)`` by explicit O(N^2) summation."""
    _check(dom, w)
    ker.require_radius(dom)
    return Field(dom, _dense_matrix(ker, dom) @ w.values)


def _fft_size(ker: KernelTable, dom: BoxDomain) -> int:
    return scipy.fft.next_fast_len(dom.L + ker.M, real=True)


def _kernel_spectrum(ker: KernelTable, dom: BoxDomain):
    key = ("fft", dom.L)
    if key not in ker._cache:
        P = _fft_size(ker, dom)
        r = dom.L - 1
        full = ker.full(r)
        spread = np.zeros((P, P, P))
        idx = np.arange(-r, r + 1) % P
        spread[np.ix_(idx, idx, idx)] = full
        ker._cache[key] = (P, scipy.fft.rfftn(spread))
    return ker._cache[key]


def convolve_fft(ker: KernelTable, dom: BoxDomain, w: Field) -> Field:
    """Same sum as :func:`convolve_direct` via a zero-padded cyclic FFT."""
    _check(dom, w)
    ker.require_radius(dom)
    P, spec = _kernel_spectrum(ker, dom)
    L = dom.L
    W = scipy.fft.rfftn(w.grid, s=(P, P, P))
    out = scipy.fft.irfftn(W * spec, s=(P, P, P))[:L, :L, :L]
    return Field.from_grid(dom, out)


def convolve(ker: KernelTable, dom: BoxDomain, w: Field, method: str = "fft") -> Field:
    if method == "fft":
        return convolve_fft(ker, dom, w)
    if method == "direct":
        return convolve_direct(ker, dom, w)
    raise ValueError(f"unknown convolution method {method!r}")


def choquard_pairing(
    ker: KernelTable, dom: BoxDomain, w1: Field, w2: Field, method: str = "fft"
) -> float:
    """``sum_x (R * w1)(x) w2(x)``."""
    _check(dom, w2)
    return float(np.dot(convolve(ker, dom, w1, method).values, w2.values))


def hls_exponents(alpha: float) -> tuple[float, float]:
    """The symmetric admissible pair ``r = s = 6 / (3 + alpha)``."""
    r = 6.0 / (3.0 + alpha)
    return r, r


def hls_ratio(
    ker: KernelTable, dom: BoxDomain, u: Field, v: Field, r: float, s: float
) -> float:
    """``pairing(|u|, |v|) / (||u||_r ||v||_s)`` for an admissible exponent pair."""
    if not (r > 1 and s > 1 and math.isfinite(r) and math.isfinite(s)):
        raise ValueError("exponents must lie in (1, inf)")
    gap = 1.0 / r + 1.0 / s + (3.0 - ker.alpha) / 3.0 - 2.0
    if abs(gap) > 1e-9:
        raise ValueError(f"exponents violate 1/r + 1/s + (3 - alpha)/3 = 2 (off by {gap:.3g})")
    nu, nv = lp_norm(u, r), lp_norm(v, s)
    if nu == 0.0 or nv == 0.0:
        raise ValueError("hls_ratio needs nonzero fields")
    return choquard_pairing(ker, dom, abs(u), abs(v)) / (nu * nv)


# --- cache file ------------------------------------------------------------


def save_kernel(path, ker: KernelTable) -> None:
    header = {
        "alpha": ker.alpha,
        "K_alpha": ker.K_alpha,
        "M": ker.M,
        "quad_n": ker.quad.n,
        "quad_levels": ker.quad.refinement_levels,
        "est_error": ker.est_error,
        "version": CACHE_VERSION,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(json.dumps(header).encode() + b"\n" + ker.values.astype("<f8").tobytes())
    os.replace(tmp, path)


def load_kernel(path) -> KernelTable:
    blob = Path(path).read_bytes()
    head, sep, body = blob.partition(b"\n")
    if not sep:
        raise ValueError(f"{path}: missing kernel header")
    h = json.loads(head)
    if h.get("version") != CACHE_VERSION:
        raise ValueError(f"{path}: unsupported kernel cache version {h.get('version')}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    quad = QuadratureSpec(int(h["quad_n"]), int(h.get("quad_levels", 3)))
    return KernelTable(h["alpha"], h["K_alpha"], h["M"], values, quad, h["est_error"])


def default_cache_dir() -> Path:
    env = os.environ.get("KC_CACHE_DIR")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "kclattice"


def cache_path(alpha: float, M: int, quad: QuadratureSpec, cache_dir=None) -> Path:
    d = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    return d / f"kernel_a{alpha!r}_M{M}_n{quad.n}_l{quad.refinement_levels}.bin"


def cached_kernel(
    alpha: float,
    M: int,
    quad: QuadratureSpec | None = None,
    cache_dir=None,
    tol: float | None = None,
) -> tuple[KernelTable, bool]:
    """Load the kernel keyed by ``(alpha, M, n)`` or build and store it.

    Returns ``(table, hit)``.
    """
    quad = quad or QuadratureSpec()
    path = cache_path(alpha, M, quad, cache_dir)
    ker = None
    if path.exists():
        try:
            ker = load_kernel(path)
        except ValueError as exc:
            log.warning("discarding unreadable kernel cache %s: %s", path, exc)
    if ker is not None:
        if tol is not None and ker.est_error > tol:
            raise QuadratureError(
                f"cached kernel est_error {ker.est_error:.3e} exceeds tolerance {tol:.3e}"
            )
        return ker, True
    ker = build_kernel(alpha, M, quad, tol)
    save_kernel(path, ker)
    return ker, False
