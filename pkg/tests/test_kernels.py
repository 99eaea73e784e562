import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import zeta as scipy_zeta

from lorentzgas import kernels as kr

A1 = 12.0 / np.pi ** 2


def test_mean_free_path_values():
    assert kr.mean_free_path(1.0, 2.0) == 0.5
    assert kr.mean_free_path(2.0, 2.0) == 0.25
    assert kr.mean_free_path(1.0, 1.0) == 1.0
    with pytest.raises(kr.KernelError):
        kr.mean_free_path(0.0, 1.0)


def test_micro_mean_free_path():
    # d=2, nbar=1, r=0.01: (1 - pi e-4) / 0.02
    assert np.isclose(kr.micro_mean_free_path(2, 1.0, 0.01),
                      (1 - np.pi * 1e-4) / 0.02)
    assert np.isclose(kr.kicked_mean_collision_time(1.0, 0.01, 2), 100.0)


def test_poisson_kernel_values():
    assert np.isclose(kr.poisson_kernel(0.0, 0.5), 2.0)
    assert np.isclose(kr.poisson_kernel(0.5, 0.5), 2.0 / np.e)


def test_upsilon_piecewise():
    assert kr.upsilon(-1.0) == 0.0
    assert kr.upsilon(0.5) == 0.5
    assert kr.upsilon(2.0) == 1.0


def test_zeta_against_scipy():
    for d in (2, 3, 4):
        assert np.isclose(kr.zeta(d, n_terms=100_000),
                          float(scipy_zeta(d)), atol=1e-12)


def test_tail_constants():
    assert np.isclose(kr.tail_constant(2, 1.0), 1.0 / np.pi ** 2, atol=1e-14)
    # d=3: 1/(24 zeta(3)) with the series value of zeta(3)
    assert np.isclose(kr.tail_constant(3, 1.0),
                      0.5 / (12 * float(scipy_zeta(3))), atol=1e-12)
    assert np.isclose(kr.tail_constant(2, 2.0), kr.tail_constant(2, 1.0) / 4)


def test_kernel_bounds():
    lo, hi = kr.kernel_bounds(2, 0.0, 0.5)
    assert np.isclose(float(lo), A1, atol=1e-14)
    assert np.isclose(float(hi), A1, atol=1e-14)
    lo, _ = kr.kernel_bounds(2, 10.0, 0.5)
    assert float(lo) == 0.0


def test_lattice_kernel_spot_values():
    # arg = 1 + (1 - 0.5 - 1)/1 = 0.5
    assert np.isclose(kr.lattice_kernel_2d(-0.5, 1.0, 0.5),
                      6.0 / np.pi ** 2, atol=1e-15)
    # arg = 1 + (0.1 - 0.9 - 1)/1.8 = 0
    assert abs(kr.lattice_kernel_2d(-0.9, 10.0, 0.9)) < 1e-12
    # small xi plateau: (nbar xi)^-1 >= max + 1
    assert np.isclose(kr.lattice_kernel_2d(0.3, 0.2, -0.7), A1, atol=1e-15)


def test_lattice_kernel_symmetry_bitwise(rng):
    wp = rng.uniform(-1, 1, 10_000)
    w = rng.uniform(-1, 1, 10_000)
    xi = rng.uniform(0.01, 5.0, 10_000)
    a = kr.lattice_kernel_2d(wp, xi, w)
    b = kr.lattice_kernel_2d(w, xi, wp)
    assert np.array_equal(a, b)


def test_lattice_kernel_nbar_scaling(rng):
    wp = rng.uniform(-1, 1, 1000)
    w = rng.uniform(-1, 1, 1000)
    xi = rng.uniform(0.01, 3.0, 1000)
    for nbar in (0.5, 2.0, 3.7):
        a = kr.lattice_kernel_2d(wp, xi, w, nbar)
        b = nbar * kr.lattice_kernel_2d(wp, nbar * xi, w, 1.0)
        assert np.array_equal(a, b)


def test_lattice_kernel_within_bounds(rng):
    wp = rng.uniform(-1, 1, 50_000)
    w = rng.uniform(-1, 1, 50_000)
    xi = rng.uniform(1e-3, 20.0, 50_000)
    k = kr.lattice_kernel_2d(wp, xi, w)
    lo, hi = kr.kernel_bounds(2, xi, 0.5)
    assert np.all(k <= hi + 1e-12)
    assert np.all(k >= lo - 1e-12)


def test_equal_label_line_convention():
    # w == w': indicator limit, plateau inside the support, 0 outside.
    assert np.isclose(kr.lattice_kernel_2d(0.3, 0.5, 0.3), A1)
    assert kr.lattice_kernel_2d(0.3, 1.0, 0.3) == 0.0


# --- closed-form sections ----------------------------------------------------

def test_section_density_matches_direct_integral(rng):
    worst = 0.0
    for _ in range(40):
        W = rng.uniform(0, 0.999)
        xi = rng.uniform(0.01, 1.2 / (1 - W))
        a = 1 / xi - 1
        pts = sorted({p for p in (-W, W, min(max(a, -1), 1),
                                  min(max(-a, -1), 1)) if -1 < p < 1})
        direct = kr._quiet_quad(
            lambda w: kr.lattice_kernel_2d(W, xi, w) / 2.0, -1, 1,
            points=pts or None, limit=300)[0]
        closed = float(kr.section_density_1(xi, W))
        worst = max(worst, abs(direct - closed))
    assert worst < 1e-10


def test_section_normalization_every_label():
    k2 = kr.LatticeKernel2D(1.0)
    assert k2.normalization_check() < 1e-9


def test_section_tail_matches_quadrature(rng):
    for _ in range(20):
        W = rng.uniform(0, 0.995)
        xi = rng.uniform(0, 1 / (1 - W))
        brks = [b for b in (0.5, 1 / (1 + W)) if xi < b]
        direct = kr._quiet_quad(lambda x: kr.section_density_1(x, W), xi,
                                1 / (1 - W), points=brks or None,
                                limit=300, epsabs=1e-13)[0]
        fast = float(kr.section_tail_1(np.array(xi), np.array(W)))
        assert abs(direct - fast) < 1e-9


def test_section_xtail_matches_quadrature(rng):
    for _ in range(15):
        W = rng.uniform(0, 0.99)
        xi = rng.uniform(0, 1 / (1 - W))
        brks = [b for b in (0.5, 1 / (1 + W)) if xi < b]
        direct = kr._quiet_quad(lambda x: x * kr.section_density_1(x, W), xi,
                                1 / (1 - W), points=brks or None,
                                limit=300, epsabs=1e-13)[0]
        fast = float(kr.section_xtail_1(np.array(xi), np.array(W)))
        assert abs(direct - fast) < 1e-9


# --- Phi0 --------------------------------------------------------------------

def test_phi0_plateau_exact():
    k2 = kr.LatticeKernel2D(1.0)
    for xi in (1e-6, 0.1, 0.4999):
        assert np.isclose(k2.phi0(xi), A1, atol=1e-12)
    assert np.isclose(float(k2.phi0_grid(0.25)[0]), A1, atol=1e-12)


def test_phi0_monte_carlo_oracle():
    k2 = kr.LatticeKernel2D(1.0)
    rng = np.random.default_rng(5)
    wp = rng.uniform(-1, 1, 2_000_000)
    w = rng.uniform(-1, 1, 2_000_000)
    for xi in (0.8, 2.0):
        mc = kr.lattice_kernel_2d(wp, xi, w).mean()
        se = kr.lattice_kernel_2d(wp, xi, w).std() / np.sqrt(len(wp))
        assert abs(k2.phi0(xi) - mc) < 5 * se + 1e-4


def test_phi0_grid_matches_scalar():
    k2 = kr.LatticeKernel2D(1.0)
    xs = np.array([0.3, 0.7, 1.0, 2.5, 8.0])
    grid = k2.phi0_grid(xs)
    scal = np.array([k2.phi0(x) for x in xs])
    assert np.allclose(grid, scal, atol=1e-8)


def test_phi0_tail_constant():
    k2 = kr.LatticeKernel2D(1.0)
    C = kr.tail_constant(2, 1.0)
    assert abs(400.0 ** 3 * k2.phi0(400.0) - C) < 0.02 * C


def test_phi0_first_moment_is_mean_free_path():
    k2 = kr.LatticeKernel2D(1.0)
    m1 = quad(lambda x: x * k2.phi0(x), 0, 0.5)[0]
    m1 += quad(lambda x: x * k2.phi0(x), 0.5, 60.0, limit=400)[0]
    m1 += kr.tail_constant(2, 1.0) / 60.0  # analytic xi^-3 completion
    assert abs(m1 - 0.5) < 1e-3


def test_phi0_second_moment_diverges_logarithmically():
    k2 = kr.LatticeKernel2D(1.0)
    partial = []
    for Xi in (20.0, 200.0, 2000.0):
        val = quad(lambda x: x * x * k2.phi0(x), 0.5, Xi, limit=500)[0]
        partial.append(val)
    growth1 = partial[1] - partial[0]
    growth2 = partial[2] - partial[1]
    C = kr.tail_constant(2, 1.0)
    # each decade adds ~ C ln 10
    assert growth1 > 0.5 * C * np.log(10)
    assert growth2 > 0.5 * C * np.log(10)


def test_phi0_cdf_consistent_with_density():
    k2 = kr.LatticeKernel2D(1.0)
    xs = np.linspace(0.0, 6.0, 2401)
    cdf = k2.phi0_cdf(np.array([6.0]))[0]
    dens = k2.phi0_grid(xs)
    trap = np.trapezoid(dens, xs)
    assert abs(cdf - trap) < 2e-4


# --- K ------------------------------------------------------------------------

def test_K_at_zero_is_inverse_mean():
    k2 = kr.LatticeKernel2D(1.0)
    for w in (0.0, 0.5, -0.9):
        assert np.isclose(k2.K(0.0, w), 2.0, atol=1e-9)
    pk = kr.PoissonKernel(2, 1.0)
    assert np.isclose(pk.K(0.0, 0.3), 2.0)


def test_poisson_K_equals_kernel():
    pk = kr.PoissonKernel(2, 1.0)
    xs = np.linspace(0, 3, 7)
    assert np.allclose(pk.K(xs), pk.k(None, xs, None))
    assert np.allclose(pk.phi0(xs), pk.k(None, xs, None))


def test_K_fast_matches_reference(rng):
    k2 = kr.LatticeKernel2D(1.0)
    for _ in range(15):
        w = rng.uniform(-0.99, 0.99)
        xi = rng.uniform(0, 1.2 / (1 - abs(w)))
        assert abs(k2.K(xi, w)
                   - float(k2.K_fast(np.array(xi), np.array(w)))) < 1e-10


def test_K_vs_nested_quad():
    # independent oracle: direct 2D integration of the kernel
    k2 = kr.LatticeKernel2D(1.0)
    for (xi, w) in ((0.3, 0.2), (1.0, -0.6)):
        outer = quad(
            lambda x: kr._quiet_quad(
                lambda wp: kr.lattice_kernel_2d(wp, x, w) / 2.0,
                -1, 1, limit=200)[0],
            xi, 1.0 / (1.0 - abs(w)), limit=200)[0]
        assert abs(k2.K(xi, w) - 2.0 * outer) < 1e-6


def test_K_marginal_cdf_endpoints():
    k2 = kr.LatticeKernel2D(1.0)
    vals = k2.K_xi_marginal_cdf(np.array([0.0, 1e4]))
    assert abs(vals[0]) < 1e-6
    assert vals[1] > 0.9999


def test_normalizations_quadrature():
    triple = float(np.ravel(kr._w_refined_integral(
        lambda Wn: kr.section_tail_1(np.zeros(1)[..., None], Wn)))[0])
    Knorm = float(2.0 * np.ravel(kr._w_refined_integral(
        lambda Wn: kr.section_xtail_1(np.zeros(1)[..., None], Wn)))[0])
    assert abs(triple - 1.0) < 1e-6
    assert abs(Knorm - 1.0) < 1e-6


# --- stationarity -------------------------------------------------------------

def test_stationarity_residual_poisson():
    res = kr.stationarity_residual(kr.PoissonKernel(2, 1.0), n_xi=40, n_w=9)
    assert res < 1e-8


def test_stationarity_residual_lattice():
    res = kr.stationarity_residual(kr.LatticeKernel2D(1.0), n_xi=60, n_w=21)
    assert res < 1e-4


def test_kernel_parity_relabeling():
    # k depends on labels only through |w|, |w'|, |w - w'|, so a global
    # sign flip of both labels leaves it unchanged (bitwise).
    k2 = kr.LatticeKernel2D(1.0)
    nodes = np.linspace(-0.99, 0.99, 301)
    for xi in (0.3, 0.8, 2.0):
        for w in (0.4, -0.4, 0.0):
            assert np.array_equal(k2.k(nodes, xi, w), k2.k(-nodes, xi, -w))
