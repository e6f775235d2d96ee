"""Constitutive functions and material parameter sets.

Bulk: isotropic Kelvin-Voigt rheology (elastic lam/mu, viscous lam_v/mu_v),
isotropic thermal expansion, heat capacity and conductivity as functions of
temperature.  Interface: damageable adhesive stiffness kappa_N/kappa_T(alpha),
unilateral normal-compliance penalty gamma_C, stored energies a0/b0(alpha),
rate coefficients for damage evolution, Coulomb friction coefficient,
interfacial yield stress, adhesive viscosities, hardening/gradient scales,
interface heat capacity/conductivity and bulk-to-adhesive transfer
coefficients.  Temperature/damage dependence of coefficients is entered as
piecewise-linear lookup tables clamped outside their range.

Also hosts the scalar numerics the time stepper builds on: the secant
difference quotient (with its exact-midpoint property for quadratics), the
damage rate-potential derivative, and heat content C(theta) with its inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

DELTA_SWITCH = 1e-8  # relative width of the derivative branch of the secant


class ModelError(ValueError):
    pass


# ---------------------------------------------------------------------------
# piecewise-linear tables
# ---------------------------------------------------------------------------

class Pwl:
    """Piecewise-linear function, clamped (constant) outside its range."""

    def __init__(self, xs, ys):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.ys.shape or self.xs.size < 1:
            raise ModelError("table needs matching 1-D x and y arrays")
        if self.xs.size > 1 and np.any(np.diff(self.xs) <= 0):
            raise ModelError("table x values must be strictly increasing")

    @classmethod
    def constant(cls, value):
        return cls([0.0], [value])

    @classmethod
    def linear(cls, x0, y0, x1, y1):
        return cls([x0, x1], [y0, y1])

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)

    def prime(self, x):
        """Right-sided slope; 0 outside the table range (clamped)."""
        x = np.asarray(x, dtype=float)
        if self.xs.size == 1:
            return np.zeros_like(x)
        slopes = np.diff(self.ys) / np.diff(self.xs)
        idx = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, slopes.size - 1)
        out = slopes[idx]
        out = np.where((x < self.xs[0]) | (x > self.xs[-1]), 0.0, out)
        return out if out.ndim else float(out)


class AlphaThetaCoeff:
    """Separable coefficient value(alpha, theta) = f_alpha(alpha)*f_theta(theta)."""

    def __init__(self, alpha_table: Pwl, theta_table: Pwl | None = None):
        self.alpha_table = alpha_table
        self.theta_table = theta_table or Pwl.constant(1.0)

    def __call__(self, alpha, theta):
        return self.alpha_table(alpha) * self.theta_table(theta)


# ---------------------------------------------------------------------------
# scalar numerics used by the scheme
# ---------------------------------------------------------------------------

def diff_quotient(f: Callable, z: float, z_tilde: float, fprime: Callable | None = None) -> float:
    """Secant slope (f(z)-f(zt))/(z-zt), or f'((z+zt)/2) when z ~ zt.

    For quadratic f this is exactly the derivative at the midpoint, which is
    what makes the discrete chain rule (and hence the energy balance) exact.
    """
    if fprime is None:
        fprime = f.prime
    gap = abs(z - z_tilde)
    if gap > DELTA_SWITCH * max(1.0, abs(z), abs(z_tilde)):
        return (f(z) - f(z_tilde)) / (z - z_tilde)
    return fprime(0.5 * (z + z_tilde))


def diff_quotient_dz(f: Callable, z: float, z_tilde: float,
                     fprime: Callable, fsecond: Callable) -> float:
    """Derivative of the secant with respect to its first argument."""
    gap = abs(z - z_tilde)
    if gap > DELTA_SWITCH * max(1.0, abs(z), abs(z_tilde)):
        h = z - z_tilde
        return (fprime(z) * h - (f(z) - f(z_tilde))) / (h * h)
    return 0.5 * fsecond(0.5 * (z + z_tilde))


def a1_partial(rate, eps_dam: float, eps_heal: float):
    """d/d(rate) of the damage rate potential 1/2*rate^2*(eps_dam | 1/eps_heal).

    eps_dam weighs damaging rates (rate <= 0), 1/eps_heal healing rates.
    """
    if eps_dam <= 0.0 or eps_heal <= 0.0:
        raise ModelError("eps_dam and eps_heal must be positive")
    rate = np.asarray(rate, dtype=float)
    out = np.where(rate <= 0.0, eps_dam * rate, rate / eps_heal)
    return out if out.ndim else float(out)


class Capacity:
    """Positive heat capacity c(theta) with exact primitive C and inverse.

    c is piecewise linear (clamped outside its table); the heat content
    C(theta) = int_0^theta c is then piecewise quadratic and strictly
    increasing, inverted segment-by-segment in closed form.
    """

    def __init__(self, table: Pwl):
        self.table = table
        if np.any(table.ys <= 0.0):
            raise ModelError("heat capacity must be positive")
        # breakpoints including 0 so the cumulative integral starts there
        xs = np.unique(np.concatenate([[0.0], table.xs[table.xs > 0.0]]))
        self._xs = xs
        vals = table(xs)
        cum = np.zeros_like(xs)
        for i in range(1, xs.size):
            cum[i] = cum[i - 1] + 0.5 * (vals[i - 1] + vals[i]) * (xs[i] - xs[i - 1])
        self._cum = cum
        self._vals = vals

    @classmethod
    def constant(cls, c):
        return cls(Pwl.constant(c))

    @classmethod
    def linear(cls, c0, c1, span=1e6):
        """c(theta) = c0 + c1*theta on [0, span], clamped beyond."""
        return cls(Pwl.linear(0.0, c0, span, c0 + c1 * span))

    def c(self, theta):
        return self.table(theta)

    def content(self, theta):
        theta_arr = np.asarray(theta, dtype=float)
        if np.any(theta_arr < 0.0):
            raise ModelError("heat content requested at negative temperature")
        idx = np.clip(np.searchsorted(self._xs, theta_arr, side="right") - 1,
                      0, self._xs.size - 1)
        x0 = self._xs[idx]
        out = self._cum[idx] + 0.5 * (self._vals[idx] + self.table(theta_arr)) * (theta_arr - x0)
        return out if out.ndim else float(out)

    def inverse(self, vartheta):
        vt = np.asarray(vartheta, dtype=float)
        if np.any(vt < 0.0):
            raise ModelError("heat-content inverse requested at negative content")
        scalar = vt.ndim == 0
        vt = np.atleast_1d(vt)
        out = np.empty_like(vt)
        for i, target in enumerate(vt):
            out[i] = self._invert_one(float(target))
        return float(out[0]) if scalar else out

    def _invert_one(self, target):
        # bracket, then monotone Newton (quadratic segments: converges fast)
        hi = max(self._xs[-1], 1.0)
        while self.content(hi) < target:
            hi *= 2.0
        lo = 0.0
        theta = min(hi, max(lo, target / max(self.c(0.0), 1e-300)))
        for _ in range(100):
            r = self.content(theta) - target
            if abs(r) <= 1e-14 * max(1.0, abs(target)):
                return theta
            if r > 0.0:
                hi = theta
            else:
                lo = theta
            step = r / self.c(theta)
            theta_new = theta - step
            if not (lo < theta_new < hi):
                theta_new = 0.5 * (lo + hi)
            theta = theta_new
        return theta


@dataclass(frozen=True)
class NormalCompliance:
    """Unilateral penetration penalty: (kappa_C/p)*(-jn)^p for jn < 0."""

    kappa_C: float
    p: float = 2.0

    def __post_init__(self):
        if self.p < 2.0:
            raise ModelError("normal-compliance exponent must be >= 2")

    def value(self, jn):
        jn = np.asarray(jn, dtype=float)
        pen = np.minimum(jn, 0.0)
        out = (self.kappa_C / self.p) * (-pen) ** self.p
        return out if out.ndim else float(out)

    def prime(self, jn):
        jn = np.asarray(jn, dtype=float)
        pen = np.minimum(jn, 0.0)
        out = -self.kappa_C * (-pen) ** (self.p - 1.0)
        return out if out.ndim else float(out)

    def second(self, jn):
        jn = np.asarray(jn, dtype=float)
        pen = np.minimum(jn, 0.0)
        out = self.kappa_C * (self.p - 1.0) * (-pen) ** (self.p - 2.0)
        out = np.where(jn >= 0.0, 0.0, out)
        return out if out.ndim else float(out)

    # aliases matching the secant helpers' calling convention
    __call__ = value


def gamma_C_value(jn, kappa_C: float, p: float = 2.0):
    return NormalCompliance(kappa_C, p).value(jn)


def gamma_C_prime(jn, kappa_C: float, p: float = 2.0):
    return NormalCompliance(kappa_C, p).prime(jn)


# ---------------------------------------------------------------------------
# material parameter sets
# ---------------------------------------------------------------------------

@dataclass
class BulkPoro:
    M_B: float = 0.0        # Biot modulus
    beta_B: float = 0.0     # Biot coefficient
    K_chem: float = 0.0     # stiffness of content deviation
    zeta_eq: float = 0.0
    kappa: float = 0.0      # capillarity (grad zeta_B) scale
    mobility: float = 0.0   # isotropic mobility


@dataclass
class InterfacePoro:
    M_A: float = 0.0
    beta_A: float = 0.0
    K_chem: float = 0.0
    zeta_eq: float = 0.0
    kappa3: float = 0.0
    mobility: float = 0.0
    m_transfer: float = 0.0  # bulk<->interface transfer mobility


@dataclass
class BulkMaterial:
    lam: float = 1.0
    mu: float = 1.0
    lam_v: float = 0.05      # viscous Lame parameters (Kelvin-Voigt)
    mu_v: float = 0.05
    rho: float = 1.0
    e_th: float = 0.0        # isotropic thermal expansion coefficient
    theta_R: float = 1.0     # reference temperature for thermal stress
    capacity: Capacity = field(default_factory=lambda: Capacity.constant(1.0))
    conductivity: Pwl = field(default_factory=lambda: Pwl.constant(1e-2))  # k_B(theta), isotropic
    poro: BulkPoro = field(default_factory=BulkPoro)

    @property
    def b_coeff(self) -> float:
        """B = C*E_th is b*Identity with b = (d*lam + 2*mu)*e_th, d = 2."""
        return (2.0 * self.lam + 2.0 * self.mu) * self.e_th

    def validate(self):
        if self.mu <= 0.0 or self.lam + self.mu <= 0.0:
            raise ModelError("elasticity tensor must be positive definite")
        if self.mu_v < 0.0 or self.lam_v + self.mu_v < 0.0:
            raise ModelError("viscosity tensor must be positive semi-definite")
        if self.rho < 0.0:
            raise ModelError("density must be non-negative")


@dataclass
class InterfaceMaterial:
    kappa_N: Pwl = field(default_factory=lambda: Pwl.linear(0.0, 0.0, 1.0, 50.0))
    kappa_T: Pwl = field(default_factory=lambda: Pwl.linear(0.0, 0.0, 1.0, 50.0))
    gamma_C: NormalCompliance = field(default_factory=lambda: NormalCompliance(1000.0, 2.0))
    a0: Pwl = field(default_factory=lambda: Pwl.linear(0.0, 0.0, 1.0, -0.1))   # -G_C*alpha
    b0: Pwl = field(default_factory=lambda: Pwl.constant(0.0))
    eps_dam: float = 1e-2
    eps_heal: float = 1e3
    frict: AlphaThetaCoeff = field(
        default_factory=lambda: AlphaThetaCoeff(Pwl.linear(0.0, 0.3, 1.0, 0.0)))
    sigma_y: AlphaThetaCoeff = field(
        default_factory=lambda: AlphaThetaCoeff(Pwl.constant(0.5)))
    d_N: float = 0.1
    d_T: float = 0.1
    kappa_H: float = 1.0
    kappa1: float = 1e-3
    kappa2: float = 1e-3
    capacity: Capacity = field(default_factory=lambda: Capacity.constant(1.0))
    conductivity: Pwl = field(default_factory=lambda: Pwl.constant(1e-2))  # K_A(theta)
    k_transfer_1: float = 1.0  # base bulk-to-adhesive transfer, body-1 side
    k_transfer_2: float = 1.0
    ell_gap: float = 0.1       # gap scale degrading transfer as interface opens
    transfer_alpha: Pwl = field(default_factory=lambda: Pwl.constant(1.0))
    transfer_theta: Pwl = field(default_factory=lambda: Pwl.constant(1.0))
    poro: InterfacePoro = field(default_factory=InterfacePoro)

    def transfer_coeffs(self, jn, alpha, theta_A):
        """(k1, k2) heat-transfer coefficients per interface node."""
        gap_factor = 1.0 / (1.0 + np.maximum(jn, 0.0) / self.ell_gap)
        shape = gap_factor * self.transfer_alpha(alpha) * self.transfer_theta(theta_A)
        k1 = self.k_transfer_1 * shape
        k2 = self.k_transfer_2 * shape
        if np.any(k1 < 0.0) or np.any(k2 < 0.0):
            raise ModelError("heat-transfer coefficient table produced a negative value")
        return k1, k2

    def validate(self):
        for name in ("kappa_H", "kappa1", "kappa2"):
            if getattr(self, name) <= 0.0:
                raise ModelError(f"{name} must be positive")
        if self.d_N < 0.0 or self.d_T < 0.0:
            raise ModelError("adhesive viscosities must be non-negative")
        if self.eps_dam <= 0.0 or self.eps_heal <= 0.0:
            raise ModelError("damage rate coefficients must be positive")


@dataclass
class RegularisationSet:
    eps_v: float = 1e-6
    eps_pi: float = 1e-6
    eps_alpha: float = 1e-6
    eps_e: float = 1e-6
    eps_h: float = 1e-6

    def validate(self):
        for name in ("eps_v", "eps_pi", "eps_alpha", "eps_e", "eps_h"):
            if getattr(self, name) <= 0.0:
                raise ModelError(f"{name} must be positive")

    def scaled(self, factor: float) -> "RegularisationSet":
        return RegularisationSet(*(getattr(self, n) * factor for n in
                                   ("eps_v", "eps_pi", "eps_alpha", "eps_e", "eps_h")))


@dataclass
class MaterialSet:
    bulk: BulkMaterial = field(default_factory=BulkMaterial)
    interface: InterfaceMaterial = field(default_factory=InterfaceMaterial)

    def validate(self):
        self.bulk.validate()
        self.interface.validate()
