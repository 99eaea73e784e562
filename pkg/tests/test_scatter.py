import numpy as np
import pytest
from scipy.integrate import quad

from lorentzgas import scatter as sc


def test_specular_angle_values():
    ang = sc.specular_angle()
    assert ang(np.array([0.0]))[0] == np.pi
    assert np.isclose(ang(np.array([0.5]))[0], 2 * np.pi / 3)
    assert ang(np.array([1 - 1e-12]))[0] < 1e-5
    with pytest.raises(sc.ScatterError):
        ang(np.array([1.0]))


def test_condition_validation():
    # condition (A) requires a strictly decreasing angle
    with pytest.raises(sc.ScatterError):
        sc.AngleFunction(theta=lambda w: np.pi * (0.5 + np.asarray(w)),
                         dtheta=lambda w: np.full_like(np.asarray(w), np.pi),
                         condition="A")


def test_scattering_matrix_closed_form_2d():
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    th = 2 * np.pi / 3
    S = m.scattering_matrix(np.array([0.5]))
    assert np.allclose(S, [[np.cos(th), -np.sin(th)],
                           [np.sin(th), np.cos(th)]], atol=1e-14)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_scattering_matrix_is_rotation(d, rng):
    m = sc.LorentzScatteringMap(d, sc.specular_angle())
    for _ in range(20):
        w = rng.standard_normal(d - 1)
        w *= rng.uniform(0.05, 0.95) / np.linalg.norm(w)
        S = m.scattering_matrix(w)
        assert np.allclose(S.T @ S, np.eye(d), atol=1e-12)
        assert np.isclose(np.linalg.det(S), 1.0, atol=1e-12)


def test_backscatter_limit():
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    v = np.array([1.0, 0.0])
    v_out, s = m.apply_scattering(v, np.array([0.0, 0.0]))
    assert np.allclose(v_out, -v)
    assert np.allclose(s, 0.0)
    # continuity: tiny w deflects by nearly pi
    v_eps, _ = m.apply_scattering(v, np.array([0.0, 1e-9]))
    assert np.allclose(v_eps, -v, atol=1e-8)


def test_apply_scattering_example_2d():
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    v_in = np.array([1.0, 0.0])
    v_out, s = m.apply_scattering(v_in, np.array([0.0, 0.5]))
    th = 2 * np.pi / 3
    assert np.allclose(v_out, [np.cos(th), np.sin(th)], atol=1e-14)
    assert np.isclose(np.linalg.norm(s), 0.5, atol=1e-14)
    assert abs(s @ v_out) < 1e-12


def test_exit_equals_impact_signed_2d(rng):
    # Angular momentum conservation: signed exit parameter == signed impact
    # parameter in the CCW convention.
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    for _ in range(50):
        phi = rng.uniform(0, 2 * np.pi)
        v = np.array([np.cos(phi), np.sin(phi)])
        w_signed = rng.uniform(-0.99, 0.99)
        perp_in = np.array([-v[1], v[0]])
        v_out, s = m.apply_scattering(v, w_signed * perp_in)
        perp_out = np.array([-v_out[1], v_out[0]])
        assert np.isclose(s @ perp_out, w_signed, atol=1e-12)
        assert np.isclose(np.linalg.norm(s), abs(w_signed), atol=1e-12)


def test_norm_preservation_d3(rng):
    m = sc.LorentzScatteringMap(3, sc.specular_angle())
    for _ in range(30):
        v = rng.standard_normal(3)
        v /= np.linalg.norm(v)
        w = rng.standard_normal(3)
        w -= (w @ v) * v
        w *= rng.uniform(0.05, 0.95) / np.linalg.norm(w)
        v_out, s = m.apply_scattering(v, w)
        assert np.isclose(np.linalg.norm(v_out), 1.0, atol=1e-12)
        assert np.isclose(np.linalg.norm(s), np.linalg.norm(w), atol=1e-12)
        assert abs(s @ v_out) < 1e-12


def test_invertibility_of_deflection(rng):
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    v = np.array([1.0, 0.0])
    ws = np.linspace(-0.999, 0.999, 1000)
    outs = m.deflect_2d(np.broadcast_to(v, (1000, 2)), ws)
    angles = np.arctan2(outs[:, 1], outs[:, 0])
    assert len(np.unique(np.round(angles, 12))) == 1000


def test_specular_involution(rng):
    # Reversing the outgoing ray retraces the collision: incoming -v_out at
    # the mirrored exit parameter emerges as -v_in.
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    for _ in range(20):
        phi = rng.uniform(0, 2 * np.pi)
        v = np.array([np.cos(phi), np.sin(phi)])
        w = rng.uniform(-0.95, 0.95)
        v_out = m.deflect_2d(v, w)
        back = m.deflect_2d(-v_out, -w)
        assert np.allclose(back, -v, atol=1e-12)


def test_sigma_2d_analytic_oracle():
    # Inverting theta = pi - 2 arcsin w: w = cos(theta/2), so
    # |dw/dtheta| = (1/2) sin(theta/2).
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    for w in (0.1, 0.5, 0.9):
        th = np.pi - 2 * np.arcsin(w)
        sig, clamped = m.differential_cross_section(np.array([w]))
        assert not clamped
        assert np.isclose(sig[0], 0.5 * np.sin(th / 2), atol=1e-13)


def test_sigma_totals():
    m2 = sc.LorentzScatteringMap(2, sc.specular_angle())
    tot2 = 2 * quad(lambda t: m2.sigma_of_theta(t), 1e-9, np.pi - 1e-9,
                    limit=200)[0]
    assert abs(tot2 - 2.0) < 1e-6
    m3 = sc.LorentzScatteringMap(3, sc.specular_angle())
    tot3 = 2 * np.pi * quad(lambda t: m3.sigma_of_theta(t) * np.sin(t),
                            1e-9, np.pi - 1e-9, limit=200)[0]
    assert abs(tot3 - np.pi) < 1e-6
    assert np.isclose(m2.sigma_bar, 2.0)
    assert np.isclose(m3.sigma_bar, np.pi)


def test_sigma_grazing_clamp():
    m = sc.LorentzScatteringMap(2, sc.specular_angle())
    _, clamped = m.differential_cross_section(np.array([1.0 - 1e-12]))
    assert clamped


def test_sigma_zero_derivative_error():
    ang = sc.specular_angle()
    broken = sc.AngleFunction.__new__(sc.AngleFunction)
    object.__setattr__(broken, "theta", ang.theta)
    object.__setattr__(broken, "dtheta", lambda w: np.zeros_like(w))
    object.__setattr__(broken, "condition", "A")
    m = sc.LorentzScatteringMap(2, broken)
    with pytest.raises(sc.ScatterError):
        m.differential_cross_section(np.array([0.3]))


def test_tabulated_angle_roundtrip():
    ws = np.linspace(0, 0.999, 400)
    ths = np.pi - 2 * np.arcsin(ws)
    tab = sc.tabulated_angle(ws, ths)
    m = sc.LorentzScatteringMap(2, tab)
    probe = np.array([0.123, 0.5, 0.87])
    assert np.allclose(tab(probe), np.pi - 2 * np.arcsin(probe), atol=2e-5)
    v_out, _ = m.apply_scattering(np.array([1.0, 0.0]), np.array([0.0, 0.5]))
    th = 2 * np.pi / 3
    assert np.allclose(v_out, [np.cos(th), np.sin(th)], atol=1e-4)


# --- kicks ------------------------------------------------------------------

def test_kick_apply_examples():
    kp = sc.linear_kick(1.0, 1)
    assert np.allclose(kp.apply(np.array([0.0]), np.array([0.3])), [-0.3])
    assert np.allclose(kp.apply(np.array([0.7]), np.array([0.0])), [0.7])
    with pytest.raises(sc.ScatterError):
        kp.apply(np.array([0.0]), np.array([0.6]))


def test_kick_jacobian_constant():
    kp = sc.linear_kick(2.0, 1)
    assert np.isclose(kp.cross_section_density(np.array([0.1])), 0.5)
    # finite-difference check of sigma(p) dp = dw for the linear map
    w = np.array([0.2])
    h = 1e-6
    dp = (kp.grad(w + h) - kp.grad(w))[0]
    assert np.isclose(abs(h / dp), kp.cross_section_density(0.0), rtol=1e-6)


def test_kick_shear_matrix():
    kp = sc.linear_kick(1.0, 1)
    S = kp.shear_matrix(np.array([0.3]))
    assert np.allclose(S, [[1.0, 0.3], [0.0, 1.0]])
    assert np.isclose(np.linalg.det(S), 1.0)


def test_kick_zero_kappa_rejected():
    with pytest.raises(sc.ScatterError):
        sc.linear_kick(0.0, 1)
