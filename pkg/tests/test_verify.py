import pytest

from kclattice.energy import Params
from kclattice.lattice import BoxDomain, Field
from kclattice.verify import (
    fd_error_ratios,
    kernel_symmetry_defect,
    random_sign_changing,
    run_verify,
    signed_permutations,
)
from kclattice.energy import ConstantPotential

HLS_MAX_ALPHA2 = 0.8902145317019894


@pytest.fixture(scope="module")
def report(ker2):
    return run_verify(ker2, seed=0)


def test_all_checks_pass(report):
    failed = [c.name for c in report.checks if not c.passed]
    assert not failed


def test_check_names(report):
    names = {c.name for c in report.checks}
    assert names == {
        "kernel_symmetry", "kv_nonpositive", "dirichlet_bound", "interpolation_2_4",
        "decomposition_identities", "alternative_pairing", "continuum_gap_is_kv_terms",
        "fd_ratio_min", "fd_ratio_max", "hls_scale_invariance", "fft_vs_direct",
    }


def test_hls_regression_constant(report):
    # empirical max of the HLS ratio over 1000 seeded 5^3 fields at alpha = 2
    assert report.measured["hls_ratio_max"] == pytest.approx(HLS_MAX_ALPHA2, rel=1e-12)


def test_measured_anchors(report, ker2):
    assert report.measured["pairing_delta_delta"] == pytest.approx(ker2((0, 0, 0)), rel=1e-13)
    assert report.measured["kernel_min_value"] > 0


def test_signed_permutations_form_a_group():
    maps = list(signed_permutations())
    assert len(maps) == 48 == len(set(maps))


def test_corrupted_kernel_fails_symmetry(ker2_small):
    class Corrupted(type(ker2_small)):
        def full(self, radius=None):
            f = super().full(radius).copy()
            f[0, 1, 2] += 1e-9
            return f

    bad = Corrupted(ker2_small.alpha, ker2_small.K_alpha, ker2_small.M, ker2_small.values,
                    ker2_small.quad, ker2_small.est_error)
    assert kernel_symmetry_defect(bad.full()) > 0
    rep = run_verify(bad, seed=0, n_fields=10, n_identity=3, n_fd=2, n_conv=2)
    sym = next(c for c in rep.checks if c.name == "kernel_symmetry")
    assert not sym.passed and not rep.passed


def test_random_sign_changing_has_both_signs(rng):
    for L in (2, 3, 5):
        u = random_sign_changing(BoxDomain(L), rng)
        assert u.values.max() > 0 > u.values.min()


def test_fd_second_order(ker2_small, rng):
    dom = BoxDomain(4)
    u = Field(dom, rng.uniform(0.2, 1.0, dom.size))
    phi = Field(dom, rng.uniform(-1, 1, dom.size))
    e1, e2, ratio = fd_error_ratios(Params(), ConstantPotential(1.0), ker2_small, dom, u, phi)
    assert e2 < e1
    assert 3.5 <= ratio <= 4.5

