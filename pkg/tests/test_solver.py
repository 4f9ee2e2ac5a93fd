import numpy as np
import pytest

from kclattice import build_kernel
from kclattice.energy import CoercivePotential, ConstantPotential, Params, energy_J, fiber_coeffs
from kclattice.lattice import BoxDomain, Field, split_signs
from kclattice.nehari import project_ray
from kclattice.solver import (
    InitSpec,
    SolveConfig,
    SolveError,
    boundary_ratio,
    fiber_curve,
    make_init,
    residual,
    solve_ground,
    solve_sign_changing,
)

import oracles

DOM9 = BoxDomain(9)
P3 = Params(1.0, 1.0, 3.0, 2.0)
P5 = Params(1.0, 1.0, 5.0, 2.0)
H1 = ConstantPotential(1.0)
COER = CoercivePotential(1.0, 0.5, DOM9.center())
SC_CFG = SolveConfig(init=InitSpec(kind="odd_bumps"))

# pinned by independent runs from differently seeded noisy inits
GROUND_ENERGY = 141.85820518574


@pytest.fixture(scope="module")
def ground(ker2_small):
    return solve_ground(P3, H1, ker2_small, DOM9)


@pytest.fixture(scope="module")
def sign_changing(ker2_small):
    return solve_sign_changing(P5, COER, ker2_small, DOM9, SC_CFG)


def test_init_spec_validation():
    with pytest.raises(ValueError):
        InitSpec(kind="sine")
    with pytest.raises(ValueError):
        InitSpec(kind="file")
    with pytest.raises(ValueError):
        SolveConfig(backtrack=1.0)
    with pytest.raises(ValueError):
        SolveConfig(tol_residual=0.0)
    with pytest.raises(ValueError):
        SolveConfig(max_iters=0)


def test_odd_bumps_are_odd():
    u = make_init(DOM9, InitSpec(kind="odd_bumps"))
    np.testing.assert_allclose(u.grid[::-1], -u.grid, atol=1e-15)


def test_ground_regression(ground):
    u, rep = ground
    assert rep.converged
    assert rep.residual_rel <= 1e-6
    assert rep.nehari_residuals[0] <= 1e-8
    assert rep.energy > 0
    assert np.all(u.values >= 0) and rep.sign_counts[1] == 0
    assert rep.energy == pytest.approx(GROUND_ENERGY, abs=1e-6)


def test_ground_trace_nonincreasing(ground):
    trace = np.array(ground[1].energy_trace)
    assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[1:]))


def test_ground_cross_seed(ker2_small, ground):
    for seed in (1, 2):
        cfg = SolveConfig(rng_seed=seed, init=InitSpec(noise=0.1))
        _, rep = solve_ground(P3, H1, ker2_small, DOM9, cfg)
        assert rep.converged
        assert rep.energy == pytest.approx(ground[1].energy, abs=1e-6)


def test_ground_translation(ker2_small, ground):
    cfg = SolveConfig(init=InitSpec(shift=(1, 0, 0)))
    _, rep = solve_ground(P3, H1, ker2_small, DOM9, cfg)
    assert rep.converged and rep.energy == pytest.approx(ground[1].energy, abs=1e-6)


def test_ground_fixed_point(ker2_small, ground):
    u, rep = ground
    u2, rep2 = solve_ground(P3, H1, ker2_small, DOM9, init=u)
    assert rep2.converged and rep2.iterations <= 2
    assert abs(rep2.energy - rep.energy) <= 1e-10


def test_ground_sign_normalised(ker2_small):
    u0 = -make_init(DOM9, InitSpec())
    u, rep = solve_ground(P3, H1, ker2_small, DOM9, init=u0)
    assert u.values.sum() >= 0 and rep.sign_counts[1] == 0


def test_ground_single_vertex(ker2_small):
    dom = BoxDomain(1)
    for prm, h in [(P3, 1.0), (Params(0.5, 2.0, 4.5, 2.0), 3.0)]:
        u_ref, J_ref = oracles.scalar_ground(prm.a, prm.b, prm.p, h, ker2_small((0, 0, 0)))
        u, rep = solve_ground(prm, ConstantPotential(h), ker2_small, dom)
        assert rep.converged
        assert u.values[0] == pytest.approx(u_ref, abs=1e-10)
        assert rep.energy == pytest.approx(J_ref, abs=1e-10)


def test_nonconvergence_reported(ker2_small):
    _, rep = solve_ground(P3, H1, ker2_small, DOM9, SolveConfig(max_iters=2))
    assert not rep.converged and rep.iterations == 2


def test_ground_preconditions(ker2_small):
    with pytest.raises(SolveError):
        solve_ground(P3, H1, ker2_small, DOM9, init=Field.zeros(DOM9))
    with pytest.raises(ValueError):
        solve_ground(P3, H1, ker2_small, BoxDomain(11))


def test_ground_deterministic(ker2_small, ground):
    _, rep = solve_ground(P3, H1, ker2_small, DOM9)
    assert rep.to_dict() == ground[1].to_dict()


def test_residual_edge_cases(ker2_small, rng, ground):
    assert residual(P3, H1, ker2_small, DOM9, Field.zeros(DOM9)) == 0.0
    assert residual(P3, H1, ker2_small, DOM9, Field(DOM9, rng.normal(size=DOM9.size))) > 0
    assert residual(P3, H1, ker2_small, DOM9, ground[0]) <= 1e-6


def test_fiber_curve(ker2_small):
    u = make_init(DOM9, InitSpec())
    s_star = project_ray(fiber_coeffs(P3, H1, ker2_small, DOM9, u)).s_star
    grid = np.linspace(0.0, 3 * s_star, 301)
    tab = fiber_curve(P3, H1, ker2_small, DOM9, u, grid)
    np.testing.assert_array_equal(tab[0], [0.0, 0.0, 0.0])
    k = int(np.argmax(tab[:, 1]))
    assert abs(tab[k, 0] - s_star) <= grid[1] - grid[0]
    signs = np.sign(tab[1:, 2])
    assert np.count_nonzero(np.diff(signs)) == 1
    assert tab[-1, 1] < 0 and tab[-1, 2] < 0
    with pytest.raises(ValueError):
        fiber_curve(P3, H1, ker2_small, DOM9, Field.zeros(DOM9), grid)


def test_sign_changing_regression(sign_changing):
    u, rep = sign_changing
    assert rep.converged and rep.residual_rel <= 1e-6
    assert max(rep.nehari_residuals) <= 1e-6
    assert min(rep.sign_counts) > 0
    assert rep.energy > 0
    assert rep.reseeds == 0


def test_sign_changing_exceeds_ground(ker2_small, sign_changing):
    _, c = solve_ground(P5, COER, ker2_small, DOM9)
    assert c.converged
    assert sign_changing[1].energy > c.energy


def test_sign_changing_keeps_odd_symmetry(sign_changing):
    u, rep = sign_changing
    scale = np.max(np.abs(u.values))
    np.testing.assert_allclose(u.grid[::-1], -u.grid, atol=1e-6 * scale)
    s, t = np.array(rep.pair_trace).T
    np.testing.assert_allclose(s, t, rtol=1e-6)


def test_sign_changing_cross_seed(ker2_small, sign_changing):
    cfg = SolveConfig(rng_seed=3, init=InitSpec(kind="odd_bumps", noise=0.05))
    u, rep = solve_sign_changing(P5, COER, ker2_small, DOM9, cfg)
    assert rep.converged
    assert rep.energy == pytest.approx(sign_changing[1].energy, abs=1e-6)


@pytest.mark.xfail(strict=True, reason="the coercive potential on a 9^3 box only decays the state to ~8% at the shell")
def test_sign_changing_boundary_decay(sign_changing):
    assert boundary_ratio(sign_changing[0]) <= 1e-3


def test_sign_changing_preconditions(ker2_small):
    with pytest.raises(SolveError, match="both signs"):
        solve_sign_changing(P5, COER, ker2_small, DOM9, init=make_init(DOM9, InitSpec()))
    with pytest.raises(SolveError, match="p > 4"):
        solve_sign_changing(Params(1, 1, 4.0, 2.0), COER, ker2_small, DOM9)


def test_split_of_solution(sign_changing):
    up, um = split_signs(sign_changing[0])
    assert np.any(up.values) and np.any(um.values)


def test_energy_matches_report(ker2_small, ground):
    u, rep = ground
    assert energy_J(P3, H1, ker2_small, DOM9, u) == rep.energy


def test_boundary_ratio():
    dom = BoxDomain(3)
    assert boundary_ratio(Field.delta(dom, (1, 1, 1))) == 0.0
    assert boundary_ratio(Field(dom, np.ones(27))) == 1.0
    assert boundary_ratio(Field.zeros(dom)) == 0.0


def test_file_init(tmp_path, ground, ker2_small):
    from kclattice.lattice import save_field

    path = tmp_path / "u.f64"
    save_field(path, ground[0])
    cfg = SolveConfig(init=InitSpec(kind="file", path=str(path)))
    _, rep = solve_ground(P3, H1, ker2_small, DOM9, cfg)
    assert rep.iterations <= 2 and abs(rep.energy - ground[1].energy) <= 1e-10
    with pytest.raises(SolveError):
        make_init(BoxDomain(5), cfg.init)


def test_kernel_for_other_alpha_solves():
    ker = build_kernel(1.0, 4)
    _, rep = solve_ground(Params(1, 1, 3, 1.0), H1, ker, BoxDomain(5))
    assert rep.converged and rep.energy > 0
