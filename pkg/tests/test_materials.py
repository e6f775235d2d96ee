import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thermocontact.materials import (AlphaThetaCoeff, Capacity,
                                     InterfaceMaterial, ModelError,
                                     NormalCompliance, Pwl, a1_partial,
                                     diff_quotient, diff_quotient_dz,
                                     gamma_C_prime, gamma_C_value)


class _Quad:
    """f(z) = a z^2 + b z + c with exact derivatives."""

    def __init__(self, a, b, c):
        self.a, self.b, self.c = a, b, c

    def __call__(self, z):
        return self.a * z * z + self.b * z + self.c

    def prime(self, z):
        return 2.0 * self.a * z + self.b

    def second(self, z):
        return 2.0 * self.a


def test_pwl_interp_and_clamp():
    p = Pwl([0.0, 1.0], [2.0, 4.0])
    assert p(0.5) == pytest.approx(3.0)
    assert p(-3.0) == 2.0     # clamped
    assert p(9.0) == 4.0
    assert p.prime(0.5) == pytest.approx(2.0)
    assert Pwl.constant(7.0)(123.4) == 7.0


def test_alpha_theta_coeff_factorises():
    c = AlphaThetaCoeff(Pwl.linear(0.0, 0.0, 1.0, 2.0), Pwl.constant(3.0))
    assert c(0.5, 77.0) == pytest.approx(3.0)
    c2 = AlphaThetaCoeff(Pwl.constant(0.4))
    assert c2(0.9, 1.0) == pytest.approx(0.4)


def test_normal_compliance_pinned_values():
    assert gamma_C_value(-0.1, 1000.0, 2.0) == pytest.approx(5.0)
    assert gamma_C_prime(-0.1, 1000.0, 2.0) == pytest.approx(-100.0)
    nc = NormalCompliance(1000.0, 2.0)
    assert nc.value(0.3) == 0.0
    assert nc.prime(0.3) == 0.0
    assert nc.second(-0.2) == pytest.approx(1000.0)
    with pytest.raises(ModelError):
        NormalCompliance(10.0, 1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5), st.floats(0.0, 1.0))
def test_normal_compliance_convex(x, y, lam):
    nc = NormalCompliance(250.0, 2.0)
    mid = lam * x + (1.0 - lam) * y
    assert nc.value(mid) <= lam * nc.value(x) + (1 - lam) * nc.value(y) + 1e-12


def test_diff_quotient_quadratic_midpoint_identity():
    f = _Quad(1.5, -0.3, 0.7)
    assert diff_quotient(f, 2.0, 0.5) == pytest.approx(f.prime(1.25), abs=1e-14)
    # coincident arguments take the midpoint-derivative branch
    assert diff_quotient(f, 0.8, 0.8) == pytest.approx(f.prime(0.8))


def test_diff_quotient_branch_continuity():
    # quartic: secant and midpoint derivative differ at O(gap^2); across the
    # branch switch the jump must be negligible
    class Quart:
        def __call__(self, z):
            return z ** 4

        def prime(self, z):
            return 4.0 * z ** 3

    f = Quart()
    z = 1.0
    for gap in (1e-8 * 0.99, 1e-8 * 1.01):
        a = diff_quotient(f, z + gap, z)
        b = f.prime(z + 0.5 * gap)
        assert abs(a - b) < 1e-7


def test_diff_quotient_dz_matches_fd():
    f = _Quad(2.0, 1.0, 0.0)
    z, zt = 1.3, 0.2
    h = 1e-7
    fd = (diff_quotient(f, z + h, zt) - diff_quotient(f, z - h, zt)) / (2 * h)
    an = diff_quotient_dz(f, z, zt, f.prime, f.second)
    assert an == pytest.approx(fd, rel=1e-6)


def test_a1_partial_branches():
    assert a1_partial(-2.0, 0.5, 4.0) == pytest.approx(-1.0)
    assert a1_partial(2.0, 0.5, 4.0) == pytest.approx(0.5)
    out = a1_partial(np.array([-1.0, 1.0]), 0.1, 10.0)
    assert np.allclose(out, [-0.1, 0.1])
    with pytest.raises(ModelError):
        a1_partial(1.0, 0.0, 1.0)


def test_capacity_content_and_inverse():
    cap = Capacity.linear(1.0, 1.0)      # c(theta) = 1 + theta
    assert cap.content(2.0) == pytest.approx(4.0)
    assert cap.inverse(4.0) == pytest.approx(2.0)
    th = np.array([0.0, 0.3, 1.7, 12.0])
    assert np.allclose(cap.inverse(cap.content(th)), th, atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.0, 50.0))
def test_capacity_roundtrip_property(theta):
    cap = Capacity(Pwl([0.0, 2.0, 5.0], [2.0, 1.0, 3.0]))
    assert cap.inverse(cap.content(theta)) == pytest.approx(theta, abs=1e-9)
    assert cap.c(theta) > 0.0


def test_transfer_coeffs_gap_degradation():
    im = InterfaceMaterial()
    k1, k2 = im.transfer_coeffs(np.array([0.0]), np.array([1.0]), np.array([1.0]))
    assert k1[0] == pytest.approx(im.k_transfer_1)
    # opening by one gap length halves the transfer; penetration does not help
    k1o, _ = im.transfer_coeffs(np.array([im.ell_gap]), np.array([1.0]), np.array([1.0]))
    assert k1o[0] == pytest.approx(0.5 * im.k_transfer_1)
    k1p, _ = im.transfer_coeffs(np.array([-0.3]), np.array([1.0]), np.array([1.0]))
    assert k1p[0] == pytest.approx(im.k_transfer_1)


def test_interface_material_validation():
    im = InterfaceMaterial(kappa_H=0.0)
    with pytest.raises(ModelError):
        im.validate()
    im = InterfaceMaterial(d_N=-0.1)
    with pytest.raises(ModelError):
        im.validate()
