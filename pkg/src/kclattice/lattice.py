"""Finite boxes of the integer lattice Z^3 and the discrete operators on them.

Fields live on a cubical box and are extended by zero outside of it, so every
vertex keeps its six lattice neighbours. Values are stored flat with the
linear index ``(i*L + j)*L + k`` (k fastest).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "BoxDomain",
    "Field",
    "DomainMismatchError",
    "laplacian",
    "neighbor_sum",
    "gradient_norm_sq",
    "gamma",
    "dirichlet_energy",
    "split_signs",
    "k_v",
    "lp_norm",
    "save_field",
    "load_field",
]


class DomainMismatchError(ValueError):
    """Raised when fields on different boxes are combined."""


@dataclass(frozen=True)
class BoxDomain:
    """The vertices ``origin + (i, j, k)`` with ``0 <= i, j, k < L``."""

    L: int
    origin: tuple[int, int, int] = (0, 0, 0)

    def __post_init__(self):
        if int(self.L) != self.L or self.L < 1:
            raise ValueError(f"L must be a positive integer, got {self.L!r}")
        if len(self.origin) != 3:
            raise ValueError("origin must be an integer 3-vector")
        object.__setattr__(self, "L", int(self.L))
        object.__setattr__(self, "origin", tuple(int(c) for c in self.origin))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.L, self.L, self.L)

    @property
    def size(self) -> int:
        return self.L**3

    def index_of(self, coord) -> int:
        i, j, k = (int(c) - o for c, o in zip(coord, self.origin))
        L = self.L
        if not (0 <= i < L and 0 <= j < L and 0 <= k < L):
            raise IndexError(f"{tuple(coord)} is outside the box")
        return (i * L + j) * L + k

    def coord_of(self, n: int) -> tuple[int, int, int]:
        if not 0 <= n < self.size:
            raise IndexError(n)
        i, rem = divmod(int(n), self.L * self.L)
        j, k = divmod(rem, self.L)
        o = self.origin
        return (o[0] + i, o[1] + j, o[2] + k)

    def coords(self) -> np.ndarray:
        """Lattice coordinates of all vertices, shape ``(N, 3)`` in index order."""
        r = np.arange(self.L)
        grid = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
        return grid + np.asarray(self.origin)

    def center(self) -> tuple[int, int, int]:
        """The vertex nearest the geometric centre (rounded down)."""
        return tuple(o + (self.L - 1) // 2 for o in self.origin)

    def contains(self, coord) -> bool:
        return all(0 <= int(c) - o < self.L for c, o in zip(coord, self.origin))


@dataclass
class Field:
    """A real function on a :class:`BoxDomain` (zero outside the box)."""

    domain: BoxDomain
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size != self.domain.size:
            raise ValueError(
                f"expected {self.domain.size} values for L={self.domain.L}, got {v.size}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, domain: BoxDomain) -> Field:
        return cls(domain, np.zeros(domain.size))

    @classmethod
    def delta(cls, domain: BoxDomain, coord, weight: float = 1.0) -> Field:
        f = cls.zeros(domain)
        f.values[domain.index_of(coord)] = weight
        return f

    @classmethod
    def from_grid(cls, domain: BoxDomain, grid) -> Field:
        return cls(domain, np.ascontiguousarray(grid, dtype=np.float64).reshape(-1))

    @property
    def grid(self) -> np.ndarray:
        return self.values.reshape(self.domain.shape)

    def at(self, coord) -> float:
        if not self.domain.contains(coord):
            return 0.0
        return float(self.values[self.domain.index_of(coord)])

    def copy(self) -> Field:
        return Field(self.domain, self.values.copy())

    def _other(self, other):
        if isinstance(other, Field):
            if other.domain != self.domain:
                raise DomainMismatchError(f"{self.domain} vs {other.domain}")
            return other.values
        return other

    def __add__(self, other):
        return Field(self.domain, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.domain, self.values - self._other(other))

    def __rsub__(self, other):
        return Field(self.domain, self._other(other) - self.values)

    def __mul__(self, other):
        return Field(self.domain, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.domain, self.values / self._other(other))

    def __neg__(self):
        return Field(self.domain, -self.values)

    def __abs__(self):
        return Field(self.domain, np.abs(self.values))


def _check(dom: BoxDomain, *fields: Field) -> None:
    for f in fields:
        if f.domain != dom:
            raise DomainMismatchError(f"field lives on {f.domain}, expected {dom}")


def _padded(u: Field) -> np.ndarray:
    return np.pad(u.grid, 1)


def neighbor_sum(dom: BoxDomain, u: Field) -> Field:
    """Sum of ``u`` over the six lattice neighbours of each box vertex."""
    _check(dom, u)
    P = _padded(u)
    s = (
        P[:-2, 1:-1, 1:-1]
        + P[2:, 1:-1, 1:-1]
        + P[1:-1, :-2, 1:-1]
        + P[1:-1, 2:, 1:-1]
        + P[1:-1, 1:-1, :-2]
        + P[1:-1, 1:-1, 2:]
    )
    return Field.from_grid(dom, s)


def laplacian(dom: BoxDomain, u: Field) -> Field:
    """``sum_{y~x} (u(y) - u(x))`` with zero exterior values."""
    nb = neighbor_sum(dom, u)
    return Field(dom, nb.values - 6.0 * u.values)


def _neighbor_differences(u: Field):
    # (u(y) - u(x)) for each of the six directions, evaluated on box vertices
    P = _padded(u)
    c = P[1:-1, 1:-1, 1:-1]
    return (
        P[:-2, 1:-1, 1:-1] - c,
        P[2:, 1:-1, 1:-1] - c,
        P[1:-1, :-2, 1:-1] - c,
        P[1:-1, 2:, 1:-1] - c,
        P[1:-1, 1:-1, :-2] - c,
        P[1:-1, 1:-1, 2:] - c,
    )


def gamma(dom: BoxDomain, u: Field, v: Field) -> Field:
    """Gradient form ``1/2 sum_{y~x} (u(y)-u(x)) (v(y)-v(x))`` at box vertices."""
    _check(dom, u, v)
    du = _neighbor_differences(u)
    dv = _neighbor_differences(v)
    out = sum(a * b for a, b in zip(du, dv))
    return Field.from_grid(dom, 0.5 * out)


def gradient_norm_sq(dom: BoxDomain, u: Field) -> Field:
    """``|grad u|^2`` at the box vertices."""
    _check(dom, u)
    out = sum(d * d for d in _neighbor_differences(u))
    return Field.from_grid(dom, 0.5 * out)


def _edge_differences(u: Field):
    P = _padded(u)
    return [np.diff(P, axis=ax) for ax in range(3)]


def dirichlet_energy(dom: BoxDomain, u: Field) -> float:
    """Sum of ``|grad u|^2`` over all of Z^3.

    Equal to the sum of squared differences over undirected edges touching
    the box, exterior values being zero.
    """
    _check(dom, u)
    return float(sum(np.sum(d * d) for d in _edge_differences(u)))


def dirichlet_form(dom: BoxDomain, u: Field, v: Field) -> float:
    """Bilinear form ``sum_x Gamma(u, v)(x)`` over all of Z^3."""
    _check(dom, u, v)
    return float(
        sum(np.sum(a * b) for a, b in zip(_edge_differences(u), _edge_differences(v)))
    )


def split_signs(u: Field) -> tuple[Field, Field]:
    """Return ``(max(u, 0), min(u, 0))``."""
    v = u.values
    return Field(u.domain, np.maximum(v, 0.0)), Field(u.domain, np.minimum(v, 0.0))


def k_v(dom: BoxDomain, u: Field) -> float:
    """Adjacency cross term between the positive and negative parts of ``u``.

    Sums ``u+(x) u-(y) + u-(x) u+(y)`` over ordered neighbour pairs; never
    positive.
    """
    _check(dom, u)
    up, um = split_signs(u)
    return 2.0 * float(np.dot(up.values, neighbor_sum(dom, um).values))


def lp_norm(u: Field, q: float) -> float:
    """Counting-measure l^q norm; ``q`` may be ``math.inf``."""
    if q != q or q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    a = np.abs(u.values)
    m = float(a.max()) if a.size else 0.0
    if math.isinf(q) or m == 0.0:
        return m
    # scale by the sup norm so large q neither overflows nor underflows
    return m * float(np.sum((a / m) ** q)) ** (1.0 / q)


def save_field(path, u: Field) -> None:
    """Write ``path`` (raw little-endian f64) and ``path.json`` (sidecar)."""
    path = Path(path)
    header = {
        "L": u.domain.L,
        "origin": list(u.domain.origin),
        "dtype": "f64le",
        "order": "k-fastest",
    }
    path.write_bytes(u.values.astype("<f8").tobytes())
    Path(str(path) + ".json").write_text(json.dumps(header))


def load_field(path) -> Field:
    path = Path(path)
    header = json.loads(Path(str(path) + ".json").read_text())
    if header.get("dtype") != "f64le" or header.get("order") != "k-fastest":
        raise ValueError(f"unsupported field format: {header}")
    dom = BoxDomain(int(header["L"]), tuple(header["origin"]))
    raw = path.read_bytes()
    if len(raw) != 8 * dom.size:
        raise ValueError(f"expected {8 * dom.size} bytes, found {len(raw)}")
    vals = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field file contains non-finite values")
    return Field(dom, vals)
