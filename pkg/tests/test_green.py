import math

import numpy as np
import pytest

from kclattice.green import (
    KernelRadiusError,
    QuadratureError,
    QuadratureSpec,
    build_kernel,
    cache_path,
    cached_kernel,
    canonical_offsets,
    choquard_pairing,
    convolve,
    convolve_direct,
    convolve_fft,
    fractional_degree,
    hls_exponents,
    hls_ratio,
    load_kernel,
    mu,
    quadrature_levels,
    save_kernel,
)
from kclattice.lattice import BoxDomain, Field
from kclattice.verify import kernel_symmetry_defect, signed_permutations

import oracles

OFFSETS = [(0, 0, 0), (1, 0, 0), (1, 1, 1), (2, 1, 0), (4, 0, 0), (3, 5, 7)]


def test_mu_values():
    assert mu((0, 0, 0)) == 0
    assert mu((math.pi,) * 3) == 12
    assert mu((math.pi, 0, 0)) == pytest.approx(4)


@pytest.mark.parametrize("n, levels", [(6, 3), (9, 3), (128, 1)])
def test_quadrature_spec_validation(n, levels):
    with pytest.raises(ValueError):
        QuadratureSpec(n, levels)


def test_quadrature_sizes():
    assert QuadratureSpec(16, 3).sizes == [16, 32, 64]


@pytest.mark.parametrize("alpha", [0.0, 3.0, -1.0, 3.5])
def test_alpha_outside_range(alpha):
    with pytest.raises(ValueError):
        build_kernel(alpha, 2)


def test_fractional_degree_anchors():
    assert fractional_degree(2.0) == pytest.approx(6.0, abs=1e-10)
    assert fractional_degree(1e-6) == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.5])
def test_fractional_degree_matches_subordination(alpha):
    assert fractional_degree(alpha) == pytest.approx(oracles.fractional_degree(alpha), rel=1e-8)


def test_fractional_degree_frozen():
    # subordination integral at two quadrature resolutions agreed to 4e-12
    assert fractional_degree(1.0) == pytest.approx(2.38760224286, abs=1e-10)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_kernel_matches_bessel_oracle(alpha, ker1, ker2):
    ker = ker1 if alpha == 1.0 else ker2
    for z in OFFSETS:
        ref = ker.K_alpha * oracles.green(alpha, z)
        assert abs(ker(z) - ref) <= ker.est_error, z


def test_watson_constant(ker2):
    # R_2(0) = 6 * G(0) with Watson's simple cubic lattice integral 0.2527310098586...
    assert ker2((0, 0, 0)) == pytest.approx(6 * 0.25273100985866, abs=ker2.est_error)


def test_green_identity(ker2):
    # R_2 solves -Lap R = 6 delta, so R(0) - R(e1) = 1
    assert ker2((0, 0, 0)) - ker2((1, 0, 0)) == pytest.approx(1.0, abs=1e-12)


def test_symmetry_bit_exact(ker1):
    full = ker1.full()
    assert kernel_symmetry_defect(full) == 0.0
    z = np.array([1, 3, 7])
    vals = {ker1(tuple(np.array(s) * z[list(p)])) for p, s in signed_permutations()}
    assert len(vals) == 1


def test_canonical_offsets_count():
    M = 6
    offs = canonical_offsets(M)
    assert len(offs) == math.comb(M + 3, 3)
    assert np.all(np.diff(offs, axis=1) >= 0)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_refinement_monotone(alpha):
    lv = quadrature_levels(alpha, 8, QuadratureSpec())
    d1, d2 = lv[1] - lv[0], lv[2] - lv[1]
    assert np.all(np.sign(d1) == np.sign(d2))
    np.testing.assert_allclose(d2 / d1, 2.0 ** (alpha - 3), rtol=0.02)


def test_est_error_is_level_difference():
    q = QuadratureSpec(16, 3)
    ker = build_kernel(1.5, 4, q)
    lv = quadrature_levels(1.5, 4, q)
    rate = 2.0**1.5
    ex = [(rate * f - c) / (rate - 1) for c, f in zip(lv, lv[1:])]
    assert ker.est_error == pytest.approx(ker.K_alpha * np.max(np.abs(ex[1] - ex[0])), rel=1e-12)
    assert ker((1, 2, 3)) == pytest.approx(ker.K_alpha * ex[1][1, 2, 3], rel=1e-14)
    # the extrapolated table is closer to the truth than the estimate claims
    assert abs(ker((0, 0, 0)) - ker.K_alpha * oracles.green(1.5, (0, 0, 0))) < ker.est_error
    with pytest.raises(QuadratureError):
        build_kernel(1.5, 4, q, tol=ker.est_error / 2)


def test_kernel_positive_and_decaying(ker2):
    line = [ker2((n, 0, 0)) for n in range(17)]
    assert min(line) > 0
    assert all(x > y for x, y in zip(line, line[1:]))


def test_radius_check(ker2_small):
    with pytest.raises(KernelRadiusError):
        ker2_small.require_radius(BoxDomain(10))
    ker2_small.require_radius(BoxDomain(9))


def test_kernel_out_of_table(ker2_small):
    with pytest.raises(KernelRadiusError):
        ker2_small((9, 0, 0))


def test_convolution_of_delta(ker2_small):
    dom = BoxDomain(5)
    out = convolve_fft(ker2_small, dom, Field.delta(dom, (0, 0, 0)))
    for n, x in enumerate(dom.coords()):
        assert out.values[n] == pytest.approx(ker2_small(tuple(x)), rel=1e-13)


def test_convolution_triple_loop(ker2_small, rng):
    dom = BoxDomain(3, (2, -1, 4))
    w = Field(dom, rng.normal(size=dom.size))
    ref = oracles.convolution(ker2_small, dom, w)
    np.testing.assert_allclose(convolve_direct(ker2_small, dom, w).values, ref, rtol=1e-14, atol=0)
    np.testing.assert_allclose(convolve_fft(ker2_small, dom, w).values, ref, rtol=1e-12)


def test_convolve_dispatch(ker2_small, rng):
    dom = BoxDomain(4)
    w = Field(dom, rng.normal(size=dom.size))
    np.testing.assert_array_equal(convolve(ker2_small, dom, w, "direct").values, convolve_direct(ker2_small, dom, w).values)
    with pytest.raises(ValueError):
        convolve(ker2_small, dom, w, "spectral")


def test_pairing_delta_delta(ker2_small):
    dom = BoxDomain(5)
    d = Field.delta(dom, (2, 2, 2))
    assert choquard_pairing(ker2_small, dom, d, d) == pytest.approx(ker2_small((0, 0, 0)), rel=1e-13)


def test_hls_exponents():
    r, s = hls_exponents(2.0)
    assert r == s == pytest.approx(1.2)
    assert 1 / r + 1 / s + (3 - 2.0) / 3 == pytest.approx(2.0)


def test_hls_ratio(ker2_small, rng):
    dom = BoxDomain(5)
    u, v = (Field(dom, rng.uniform(-1, 1, dom.size)) for _ in range(2))
    r, s = hls_exponents(2.0)
    base = hls_ratio(ker2_small, dom, u, v, r, s)
    assert hls_ratio(ker2_small, dom, 7.5 * u, 0.01 * v, r, s) == pytest.approx(base, rel=1e-12)
    with pytest.raises(ValueError):
        hls_ratio(ker2_small, dom, u, v, 2.0, 2.0)
    with pytest.raises(ValueError):
        hls_ratio(ker2_small, dom, Field.zeros(dom), v, r, s)


def test_kernel_file_roundtrip(tmp_path, ker2_small):
    path = tmp_path / "k.bin"
    save_kernel(path, ker2_small)
    back = load_kernel(path)
    assert back.alpha == ker2_small.alpha and back.M == ker2_small.M
    np.testing.assert_array_equal(back.values, ker2_small.values)
    assert back.est_error == ker2_small.est_error


def test_kernel_file_truncated(tmp_path, ker2_small):
    path = tmp_path / "k.bin"
    save_kernel(path, ker2_small)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_kernel(path)


def test_cache_hit(tmp_path):
    q = QuadratureSpec(16, 2)
    k1, hit1 = cached_kernel(1.0, 3, q, cache_dir=tmp_path)
    k2, hit2 = cached_kernel(1.0, 3, q, cache_dir=tmp_path)
    assert (hit1, hit2) == (False, True)
    np.testing.assert_array_equal(k1.values, k2.values)
    assert cache_path(1.0, 3, q, tmp_path).exists()


def test_corrupt_cache_is_rebuilt(tmp_path):
    q = QuadratureSpec(16, 2)
    ker, _ = cached_kernel(1.0, 3, q, cache_dir=tmp_path)
    path = cache_path(1.0, 3, q, tmp_path)
    path.write_bytes(path.read_bytes()[:-5])
    again, hit = cached_kernel(1.0, 3, q, cache_dir=tmp_path)
    assert not hit
    np.testing.assert_array_equal(again.values, ker.values)
    assert cached_kernel(1.0, 3, q, cache_dir=tmp_path)[1]
