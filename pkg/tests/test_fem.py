"""Hermite discretization: assembly oracles, nonlinear force, static solver."""

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.linalg import cho_factor

import beamflutter as bf
from beamflutter.fem import (
    NewtonError,
    _assemble_load,
    assemble_gram,
    damping_matrix,
    static_functional,
    static_solve,
)


@pytest.fixture(scope="module")
def space20():
    return bf.build_space(20, 1.0)


@pytest.fixture(scope="module")
def gram20(space20):
    return assemble_gram(space20)


def _basis_eval(space, i, x, deriv=0):
    e = np.zeros(space.n_dof)
    e[i] = 1.0
    return space.evaluate(e, x, deriv)


def test_build_space_dof_count():
    assert bf.build_space(20, 1.0).n_dof == 40
    assert bf.build_space(5, 2.0).n_dof == 10
    with pytest.raises(ValueError):
        bf.build_space(1, 1.0)


def test_quadratic_reproduced_exactly(space20):
    parabola = bf.InitialCondition.from_polynomials((0.0, 0.0, 1.0), (0.0,)).displacement
    w = space20.interpolate(parabola)
    assert space20.evaluate(w, 0.37) == pytest.approx(0.1369, abs=1e-15)
    xs = np.linspace(0.0, 1.0, 313)
    assert np.max(np.abs(space20.evaluate(w, xs) - xs**2)) < 1e-14
    assert np.max(np.abs(space20.evaluate(w, xs, 2) - 2.0)) < 1e-11


def test_interpolation_fourth_order(space20):
    # x^2 sin(pi x) lies in the clamped space (value and slope vanish at 0);
    # the standard Hermite bound h^4/384 * max|f''''| gives ~7.5e-6 at n=20
    f = lambda x: x**2 * np.sin(np.pi * x)
    fp = lambda x: 2 * x * np.sin(np.pi * x) + np.pi * x**2 * np.cos(np.pi * x)
    w = space20.interpolate(lambda x, d=0: f(x) if d == 0 else fp(x))
    xs = np.linspace(0.0, 1.0, 4001)
    assert np.max(np.abs(space20.evaluate(w, xs) - f(xs))) < 1e-5


def test_mass_block_matches_closed_form():
    # symbolic element integrals of Hermite cubic products, h-scaled slopes
    n, L = 2, 0.1
    space = bf.build_space(n, L)
    h = space.h
    m_e = (h / 420.0) * np.array(
        [
            [156.0, 22 * h, 54.0, -13 * h],
            [22 * h, 4 * h**2, 13 * h, -3 * h**2],
            [54.0, 13 * h, 156.0, -22 * h],
            [-13 * h, -3 * h**2, -22 * h, 4 * h**2],
        ]
    )
    expected = np.zeros((4, 4))
    expected[0:2, 0:2] = m_e[2:4, 2:4] + m_e[0:2, 0:2]  # node 1: both elements
    expected[0:2, 2:4] = m_e[0:2, 2:4]
    expected[2:4, 0:2] = m_e[2:4, 0:2]
    expected[2:4, 2:4] = m_e[2:4, 2:4]
    M = assemble_gram(space).M
    assert np.allclose(M, expected, rtol=0.0, atol=1e-15)


def test_mass_block_against_independent_quadrature():
    # literal shape polynomials integrated by adaptive quadrature
    h = 0.05
    shapes = [
        lambda t: 1 - 3 * t**2 + 2 * t**3,
        lambda t: h * t * (1 - t) ** 2,
        lambda t: 3 * t**2 - 2 * t**3,
        lambda t: h * t**2 * (t - 1),
    ]
    block = np.array(
        [
            [quad(lambda t: si(t) * sj(t), 0.0, 1.0)[0] * h for sj in shapes]
            for si in shapes
        ]
    )
    m_e = (h / 420.0) * np.array(
        [
            [156.0, 22 * h, 54.0, -13 * h],
            [22 * h, 4 * h**2, 13 * h, -3 * h**2],
            [54.0, 13 * h, 156.0, -22 * h],
            [-13 * h, -3 * h**2, -22 * h, 4 * h**2],
        ]
    )
    assert np.allclose(block, m_e, rtol=1e-12)


def test_khat_action_on_parabola_against_quadrature(space20, gram20):
    # interpolant of x^2 has w_xx = 2, so (Khat w)_i = 2 int phi_i'' dx
    parabola = bf.InitialCondition.from_polynomials((0.0, 0.0, 1.0), (0.0,)).displacement
    w = space20.interpolate(parabola)
    kw = gram20.Khat @ w
    for i in list(range(0, 6)) + [space20.n_dof - 2, space20.n_dof - 1]:
        oracle = 0.0
        for e in range(space20.n_elements):
            a, b = space20.nodes[e], space20.nodes[e + 1]
            oracle += quad(lambda x: 2.0 * _basis_eval(space20, i, x, 2), a, b)[0]
        assert kw[i] == pytest.approx(oracle, abs=1e-10)


def test_alpha_zero_mass(space20):
    mats = bf.assemble(space20, bf.BeamConfig(alpha=0.0))
    assert np.array_equal(mats.M_alpha, mats.M)
    mats1 = bf.assemble(space20, bf.BeamConfig(alpha=0.5))
    assert np.allclose(mats1.M_alpha, mats1.M + 0.5 * mats1.G)


@pytest.mark.parametrize("n", [5, 10, 20, 40])
def test_gram_matrices_spd(n):
    space = bf.build_space(n, 1.0)
    mats = bf.assemble(space, bf.BeamConfig(alpha=1e-3))
    for A in (mats.M, mats.M_alpha, mats.Khat):
        assert np.allclose(A, A.T)
        cho_factor(A)  # raises LinAlgError if not SPD
    assert np.allclose(mats.G, mats.G.T)
    cho_factor(mats.G)


def test_first_derivative_gram_consistency_rate():
    # w'Gw -> int w_x^2 at the interpolation rate O(h^4) for smooth fields
    f = lambda x: x**2 * np.sin(np.pi * x)
    fp = lambda x: 2 * x * np.sin(np.pi * x) + np.pi * x**2 * np.cos(np.pi * x)
    exact = quad(lambda x: fp(x) ** 2, 0.0, 1.0, limit=200)[0]
    errs = []
    for n in (5, 10, 20, 40):
        space = bf.build_space(n, 1.0)
        w = space.interpolate(lambda x, d=0: f(x) if d == 0 else fp(x))
        errs.append(abs(w @ (assemble_gram(space).G @ w) - exact))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates >= 3.7)


def test_nonlinear_force_zero_and_prestress(space20, gram20):
    mats = bf.assemble(space20, bf.BeamConfig())
    cfg = bf.BeamConfig(b1=1.0, b2=0.0)
    assert np.array_equal(bf.nonlinear_force(np.zeros(40), mats, cfg), np.zeros(40))
    w = np.sin(np.arange(40.0))
    assert np.allclose(bf.nonlinear_force(w, mats, cfg), -(mats.G @ w))
    with pytest.raises(ValueError):
        bf.nonlinear_force(np.zeros(39), mats, cfg)


def test_variants_agree_for_clamped_slope_tip(space20):
    # w = x^3 - 1.5 x^2 has w_x(1) = 0, so the boundary term of integration
    # by parts vanishes and physical == naive exactly (cubic is in the space)
    mats = bf.assemble(space20, bf.BeamConfig())
    cubic = bf.InitialCondition.from_polynomials((0.0, 0.0, -1.5, 1.0), (0.0,)).displacement
    w = space20.interpolate(cubic)
    phys = bf.nonlinear_force(w, mats, bf.BeamConfig(b1=0.5, b2=2.0))
    naive = bf.nonlinear_force(
        w, mats, bf.BeamConfig(b1=0.5, b2=2.0, bc_variant=bf.BC_NAIVE_LINEAR)
    )
    assert np.allclose(phys, naive, atol=1e-11)


def test_variants_differ_generically(space20):
    # x^2 has tip slope 2, so the dropped boundary term separates the variants
    mats = bf.assemble(space20, bf.BeamConfig())
    parabola = bf.InitialCondition.from_polynomials((0.0, 0.0, 1.0), (0.0,)).displacement
    w = space20.interpolate(parabola)
    phys = bf.nonlinear_force(w, mats, bf.BeamConfig(b2=1.0))
    naive = bf.nonlinear_force(w, mats, bf.BeamConfig(b2=1.0, bc_variant=bf.BC_NAIVE_LINEAR))
    assert not np.allclose(phys, naive, atol=1e-6)


def test_physical_force_is_energy_gradient(space20, gram20):
    cfg = bf.BeamConfig(b1=-0.5, b2=1.0)
    mats = bf.assemble(space20, cfg)
    rng = np.random.default_rng(0)
    w = rng.standard_normal(40) * 0.3

    def elastic_energy(w):
        g = w @ (gram20.G @ w)
        return 0.5 * cfg.D * w @ (gram20.Khat @ w) + 0.25 * cfg.b2 * g * g - 0.5 * cfg.b1 * g

    force = cfg.D * (gram20.Khat @ w) + bf.nonlinear_force(w, mats, cfg)
    h = 1e-6
    for i in range(0, 40, 3):
        e = np.zeros(40)
        e[i] = 1.0
        fd = (elastic_energy(w + h * e) - elastic_energy(w - h * e)) / (2 * h)
        assert abs(fd - force[i]) <= 1e-6 * max(1.0, abs(force[i]))


def test_damping_matrix_theory_coupling(space20):
    mats = bf.assemble(space20, bf.BeamConfig())
    cfg = bf.BeamConfig(alpha=0.5, k0=2.0, k1=7.0)
    assert np.allclose(damping_matrix(mats, cfg), 2.0 * mats.M + 7.0 * mats.G)
    theory = cfg.with_(theory_damping=True)
    assert np.allclose(damping_matrix(mats, theory), 2.0 * (mats.M + 0.5 * mats.G))


def test_static_solve_zero_load(space20):
    v = static_solve(np.zeros(40), 0.0, 0.0, bf.BeamConfig(b1=-1.0, b2=1.0), space20)
    assert np.array_equal(v, np.zeros(40))


def test_static_solve_small_load_matches_linear(space20, gram20):
    cfg = bf.BeamConfig(b2=1.0)
    F = 1e-4 * _assemble_load(space20, np.polynomial.Polynomial((1.0,)))
    v = static_solve(F, 0.0, 0.0, cfg, space20)
    v_lin = np.linalg.solve(cfg.D * gram20.Khat, F)
    assert np.linalg.norm(v - v_lin) <= 1e-6 * np.linalg.norm(v_lin)


def test_static_solve_full_load_descends(space20, gram20):
    cfg = bf.BeamConfig(b2=1.0)
    F = _assemble_load(space20, np.polynomial.Polynomial((1.0,)))
    v = static_solve(F, 0.0, 0.0, cfg, space20, tol=1e-10)
    s = v @ (gram20.G @ v)
    residual = cfg.D * (gram20.Khat @ v) + cfg.b2 * s * (gram20.G @ v) - F
    assert np.linalg.norm(residual) < 1e-10
    v_lin = np.linalg.solve(cfg.D * gram20.Khat, F)
    assert static_functional(v, F, 0.0, 0.0, cfg, space20) < static_functional(
        v_lin, F, 0.0, 0.0, cfg, space20
    )


def test_static_solve_lambda_mu_terms(space20, gram20):
    # with b2 = 0 and b1 = 0 the solve is linear: (1+lam) D Khat + mu G
    cfg = bf.BeamConfig(b2=0.0)
    F = _assemble_load(space20, np.polynomial.Polynomial((0.0, 1.0)))
    lam, mu = 0.7, 2.0
    v = static_solve(F, lam, mu, cfg, space20)
    ref = np.linalg.solve((1 + lam) * cfg.D * gram20.Khat + mu * gram20.G, F)
    assert np.allclose(v, ref, rtol=1e-10)


def test_static_solve_noncoercive_warning(space20):
    F = _assemble_load(space20, np.polynomial.Polynomial((1.0,)))
    with pytest.warns(UserWarning):
        try:
            static_solve(F, 0.0, 0.0, bf.BeamConfig(b1=2.0, b2=0.0), space20, max_iter=3)
        except NewtonError:
            pass


def test_newton_error_reports_best_iterate(space20):
    cfg = bf.BeamConfig(b2=1.0)
    F = _assemble_load(space20, np.polynomial.Polynomial((1.0,)))
    with pytest.raises(NewtonError) as info:
        static_solve(F, 0.0, 0.0, cfg, space20, tol=1e-30, max_iter=2)
    assert info.value.best is not None
    assert info.value.residual >= 0.0


def test_load_vector_polynomial_exactness(space20):
    # (p0, phi_i) with p0 = 1 + 2x, checked against adaptive quadrature
    poly = np.polynomial.Polynomial((1.0, 2.0))
    F = _assemble_load(space20, poly)
    for i in (0, 1, 17, 38, 39):
        oracle = 0.0
        for e in range(space20.n_elements):
            a, b = space20.nodes[e], space20.nodes[e + 1]
            oracle += quad(lambda x: poly(x) * _basis_eval(space20, i, x), a, b)[0]
        assert F[i] == pytest.approx(oracle, abs=1e-14)


def test_matrix_dump_roundtrip(tmp_path, gram20):
    path = tmp_path / "m.txt"
    bf.dump_matrix(gram20.M, path)
    loaded = np.loadtxt(path)
    assert np.array_equal(loaded, gram20.M)  # %.17g is lossless for float64
