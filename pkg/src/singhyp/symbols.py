"""Coefficient families, the excised principal symbol, its square root, the
auxiliary symbol H, and empirical symbol-estimate reports.

A family packages the principal symbol ``a(t, x, xi)`` (units of ``<xi>^2``)
with closed-form first derivatives, optional lower-order coefficients
``b0(t,x)`` (on ``d/dt``), ``b1(t,x)`` (on ``d/dx``, entering the symbol as
``i*b1*xi``) and ``b2(t,x)`` (zero order), the structure pair, the spectral
shift ``k`` and the blow-up exponents ``p, q, r``.

The excision replaces ``a`` by the elliptic reference ``omega^2 <xi>_k^2``
for ``t Phi(x) <xi>_k <= 1``, blending smoothly up to ``2``:

    ``atilde = cut(s) * omega^2 <xi>_k^2 + (1 - cut(s)) * a``,  ``s = t Phi <xi>_k``.

Its root ``tau = sqrt(atilde)`` and the symbol

    ``sigma(H) = -(i/2) * omega <xi>_k * (1 - cut(s/3)) / tau``

have disjoint time supports with ``a - atilde`` (cut(s/3) = 1 wherever
cut(s) > 0), which is what makes the first-order reduction exact for
multiplier families.

Estimate reports fit the minimal constants and time exponents of symbol-class
inequalities on sample lattices; blow-up orders are fitted on windowed
envelopes (per-window maxima) because the built-in oscillations make pointwise
log-fits ill-posed at cosine zeros.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .structure import (SingularityProfile, StructurePair, Zone, bracket, classify_zone,
                        constant_pair, make_profile, poly_pair)

__all__ = [
    "ExcisionCutoff",
    "smooth_cutoff",
    "CoefficientFamily",
    "example_coefficient",
    "theorem_coefficient",
    "free_wave",
    "reference_wave",
    "ExcisedCoefficient",
    "excise",
    "EllipticityError",
    "CharacteristicRoot",
    "char_root",
    "HSymbol",
    "h_symbol",
    "QuadratureError",
    "TimeQuadrature",
    "l1_defect",
    "SampleLattice",
    "graded_lattice",
    "ClassDescriptor",
    "FitEntry",
    "FitReport",
    "symbol_class_report",
    "RootReport",
    "root_estimate_report",
    "fit_blowup_exponents",
    "fit_power_law",
]


# --------------------------------------------------------------------------
# smooth excision cutoff
# --------------------------------------------------------------------------


def _psi(r):
    """exp(-1/r) for r > 0, identically 0 for r <= 0 (smooth glue)."""
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = np.exp(-1.0 / r[pos])
    return out


def _dpsi(r):
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    pos = r > 0
    out[pos] = np.exp(-1.0 / r[pos]) / (r[pos] * r[pos])
    return out


@dataclass(frozen=True)
class ExcisionCutoff:
    """Smooth cutoff with ``phi = 1`` on ``(-inf, 1]``, ``phi = 0`` on ``[2, inf)``,
    monotone non-increasing in between; ``dphi`` is its exact derivative."""

    phi: Callable
    dphi: Callable


def smooth_cutoff() -> ExcisionCutoff:
    """The bump-quotient cutoff ``psi(2-s) / (psi(2-s) + psi(s-1))``.

    Exactly 1 below s=1 and exactly 0 above s=2 (not just to rounding), since
    ``psi`` vanishes identically on the closed negative half-line.
    """

    def phi(s):
        s = np.asarray(s, dtype=float)
        a = _psi(2.0 - s)
        b = _psi(s - 1.0)
        den = a + b
        out = np.ones_like(s)
        mid = den > 0
        out[mid] = a[mid] / den[mid]
        out[s >= 2.0] = 0.0
        return out

    def dphi(s):
        s = np.asarray(s, dtype=float)
        a = _psi(2.0 - s)
        b = _psi(s - 1.0)
        da = _dpsi(2.0 - s)
        db = _dpsi(s - 1.0)
        den = (a + b) ** 2
        out = np.zeros_like(s)
        mid = (s > 1.0) & (s < 2.0)
        out[mid] = -(da[mid] * b[mid] + a[mid] * db[mid]) / den[mid]
        return out

    return ExcisionCutoff(phi=phi, dphi=dphi)


# --------------------------------------------------------------------------
# coefficient families
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CoefficientFamily:
    """Principal symbol with derivative oracles, lower-order terms and metadata.

    ``spectral_shift`` records whether ``a`` carries the ``<xi>_k^2`` mass floor
    (ellipticity measured against ``omega^2 <xi>_k^2``) or is homogeneous of the
    form ``c(t, x) xi^2`` (measured against ``omega^2 xi^2``).  ``separable``
    optionally holds ``(g(t), w(x), m(xi))`` factors with
    ``a = g(t) w(x) m(xi)``; the solver uses it for exact fast application.
    """

    a: Callable                 # (t, x, xi) -> real
    dt_a: Callable
    dx_a: Callable
    dxi_a: Callable
    pair: StructurePair
    k: float
    p: float
    q: float
    r: float
    T: float
    c0: float                   # ellipticity floor against the reference symbol
    spectral_shift: bool
    x_dependent: bool
    b0: Callable | None = None  # (t, x) -> real, coefficient of d/dt
    b1: Callable | None = None  # (t, x) -> real, symbol i*b1*xi
    b2: Callable | None = None  # (t, x) -> real, zero order
    separable: tuple | None = None
    profile: SingularityProfile | None = None
    osc_exponent: float | None = None  # b in the oscillation phase ~ t**-b, if any
    label: str = "family"

    def b_symbol(self, t, x, xi):
        """Lower-order symbol ``i b1(t,x) xi + b2(t,x)`` (0 where absent)."""
        out = np.zeros(np.broadcast(np.asarray(t), np.asarray(x), np.asarray(xi)).shape,
                       dtype=complex)
        if self.b1 is not None:
            out = out + 1j * np.asarray(self.b1(t, x)) * np.asarray(xi)
        if self.b2 is not None:
            out = out + np.asarray(self.b2(t, x))
        return out

    def has_lower_order(self) -> bool:
        return any(f is not None for f in (self.b0, self.b1, self.b2))


def example_coefficient(kappa1: float, kappa2: float, *, T: float = 1.0,
                        k: float = 1.0) -> CoefficientFamily:
    """The built-in oscillating family with infinitely many oscillations near t=0:

    ``a(t,x) = <x>**(2 kappa1) (2 + cos <x>**(1-kappa2)) * t**(-1/4) (2 + sin t**(-1/8))``

    as the coefficient of ``xi^2``, with ``omega = <x>**kappa1``,
    ``Phi = <x>**kappa2`` and blow-up exponents ``p = 1/4``, ``q = 11/8``.
    No validated profile exists for these exponents: the admissible sigma window
    ``[3, (q-p)/(q-1)) = [3, 3)`` is empty, so ``profile`` is None.
    """
    if not (0.0 <= kappa1 <= kappa2 <= 1.0):
        raise ValueError(f"need 0 <= kappa1 <= kappa2 <= 1, got ({kappa1}, {kappa2})")
    if not kappa2 > 0.0:
        raise ValueError("kappa2 must be positive")

    e2 = 2.0 * kappa1
    ex = 1.0 - kappa2

    def cx(x):
        b = np.hypot(1.0, x)
        return b ** e2 * (2.0 + np.cos(b ** ex))

    def dcx(x):
        b = np.hypot(1.0, x)
        dbk = lambda kk: kk * x * b ** (kk - 2.0)  # d/dx <x>**kk
        return dbk(e2) * (2.0 + np.cos(b ** ex)) - b ** e2 * np.sin(b ** ex) * dbk(ex)

    def ct(t):
        t = np.asarray(t, dtype=float)
        return t ** -0.25 * (2.0 + np.sin(t ** -0.125))

    def dct(t):
        t = np.asarray(t, dtype=float)
        return (-0.25 * t ** -1.25 * (2.0 + np.sin(t ** -0.125))
                - 0.125 * t ** -0.25 * np.cos(t ** -0.125) * t ** -1.125)

    return CoefficientFamily(
        a=lambda t, x, xi: cx(x) * ct(t) * np.asarray(xi) ** 2,
        dt_a=lambda t, x, xi: cx(x) * dct(t) * np.asarray(xi) ** 2,
        dx_a=lambda t, x, xi: dcx(x) * ct(t) * np.asarray(xi) ** 2,
        dxi_a=lambda t, x, xi: 2.0 * cx(x) * ct(t) * np.asarray(xi),
        pair=poly_pair(kappa1, kappa2),
        k=k, p=0.25, q=11.0 / 8.0, r=0.0, T=T,
        c0=1.0, spectral_shift=False, x_dependent=True,
        separable=(ct, cx, lambda xi: np.asarray(xi) ** 2),
        profile=None,
        osc_exponent=0.125,
        label=f"example11({kappa1},{kappa2})",
    )


def theorem_coefficient(p: float, q: float, *, amplitude: float = 0.5,
                        pair: StructurePair | None = None, r: float = 0.0,
                        sigma: float = 3.0, T: float = 1.0,
                        k: float = 1.0) -> CoefficientFamily:
    """A family satisfying the admissibility window, with sharp blow-up rates:

    ``a(t, x, xi) = omega(x)^2 <xi>_k^2 * g(t)``,
    ``g(t) = 2 t**-p + amplitude * sin(pi t**(1-q))``.

    ``|g| ~ 2 t**-p`` and ``|g'| ~ pi (q-1) amplitude t**-q`` (the ``t**-p-1``
    term is subdominant because ``p + 1 <= q``), so the fitted blow-up orders
    recover ``p`` and ``q``.  The phase ``pi t**(1-q)`` vanishes mod pi at
    ``t = 1``, so ``a(1, x, xi) = 2 omega^2 <xi>_k^2`` exactly.  Ellipticity
    floor ``2 min(1, T)**-p - amplitude`` (>= 3/2 with defaults).
    """
    profile = make_profile(p, q, r, sigma, T)
    if not (0.0 <= amplitude < 2.0):
        raise ValueError(f"amplitude must lie in [0, 2), got {amplitude}")
    pair = pair if pair is not None else constant_pair()

    floor = 2.0 * max(T, 1.0) ** (-p) - amplitude
    if floor <= 0:
        raise ValueError("amplitude too large for the ellipticity floor")

    def g(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * t ** (-p) + amplitude * np.sin(np.pi * t ** (1.0 - q))

    def dg(t):
        t = np.asarray(t, dtype=float)
        return (-2.0 * p * t ** (-p - 1.0)
                + amplitude * np.pi * (1.0 - q) * np.cos(np.pi * t ** (1.0 - q)) * t ** (-q))

    om, dom = pair.omega, pair.domega

    def w2(x):
        return np.asarray(om(x), dtype=float) ** 2

    def dw2(x):
        return 2.0 * np.asarray(om(x), dtype=float) * np.asarray(dom(x), dtype=float)

    def m(xi):
        return bracket(xi, k) ** 2

    return CoefficientFamily(
        a=lambda t, x, xi: g(t) * w2(x) * m(xi),
        dt_a=lambda t, x, xi: dg(t) * w2(x) * m(xi),
        dx_a=lambda t, x, xi: g(t) * dw2(x) * m(xi),
        dxi_a=lambda t, x, xi: g(t) * w2(x) * 2.0 * np.asarray(xi),
        pair=pair, k=k, p=p, q=q, r=r, T=T,
        c0=floor, spectral_shift=True, x_dependent=not pair.is_constant,
        separable=(g, w2, m),
        profile=profile,
        osc_exponent=(q - 1.0) if amplitude > 0 else None,
        label=f"theorem(p={p},q={q})",
    )


def free_wave(speed: float = 1.0, *, T: float = 1.0, k: float = 1.0) -> CoefficientFamily:
    """Constant-coefficient wave ``a = speed^2 xi^2`` (homogeneous, no shift)."""
    c2 = speed * speed
    zero = lambda t, x, xi: np.zeros(np.broadcast(np.asarray(t), np.asarray(x),
                                                  np.asarray(xi)).shape)
    return CoefficientFamily(
        a=lambda t, x, xi: c2 * np.asarray(xi) ** 2 + 0.0 * np.asarray(t) * np.asarray(x),
        dt_a=zero, dx_a=zero,
        dxi_a=lambda t, x, xi: 2.0 * c2 * np.asarray(xi) + 0.0 * np.asarray(t) * np.asarray(x),
        pair=constant_pair(), k=k, p=0.0, q=1.25, r=0.0, T=T,
        c0=c2, spectral_shift=False, x_dependent=False,
        separable=(lambda t: np.ones_like(np.asarray(t, dtype=float)),
                   lambda x: np.ones_like(np.asarray(x, dtype=float)),
                   lambda xi: c2 * np.asarray(xi) ** 2),
        profile=make_profile(0.0, 1.25, 0.0, 3.0, T),
        label=f"free-wave(c={speed})",
    )


def reference_wave(*, T: float = 1.0, k: float = 1.0) -> CoefficientFamily:
    """The excision reference itself, ``a = omega^2 <xi>_k^2`` with the constant pair.

    Excision leaves it unchanged, every correction block vanishes beyond the
    cutoff supports, and ``tau = <xi>_k`` exactly.
    """
    one = lambda t: np.ones_like(np.asarray(t, dtype=float))
    zero = lambda t, x, xi: np.zeros(np.broadcast(np.asarray(t), np.asarray(x),
                                                  np.asarray(xi)).shape)
    return CoefficientFamily(
        a=lambda t, x, xi: bracket(xi, k) ** 2 + 0.0 * np.asarray(t) * np.asarray(x),
        dt_a=zero, dx_a=zero,
        dxi_a=lambda t, x, xi: 2.0 * np.asarray(xi) + 0.0 * np.asarray(t) * np.asarray(x),
        pair=constant_pair(), k=k, p=0.0, q=1.25, r=0.0, T=T,
        c0=1.0, spectral_shift=True, x_dependent=False,
        separable=(one, lambda x: np.ones_like(np.asarray(x, dtype=float)),
                   lambda xi: bracket(xi, k) ** 2),
        profile=make_profile(0.0, 1.25, 0.0, 3.0, T),
        label="reference-wave",
    )


# --------------------------------------------------------------------------
# excision and the characteristic root
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExcisedCoefficient:
    """``atilde = cut(s) omega^2 <xi>_k^2 + (1 - cut(s)) a``, ``s = t Phi <xi>_k``.

    Quacks like a family (same evaluation interface), so it can be re-excised;
    re-excision is the identity wherever ``s`` is outside the blend ``(1, 2)``.
    """

    family: CoefficientFamily
    cutoff: ExcisionCutoff
    pair: StructurePair
    k: float

    def _parts(self, t, x, xi):
        t = np.asarray(t, dtype=float)
        br = bracket(xi, self.k)
        phi_x = np.asarray(self.pair.phi(x), dtype=float)
        s = t * phi_x * br
        ref = np.asarray(self.pair.omega(x), dtype=float) ** 2 * br ** 2
        return t, br, phi_x, s, ref

    @staticmethod
    def _blend(flat_mask, flat_value, expr_value):
        """Select the flat-region value where cut == 1 without letting a possibly
        undefined raw coefficient (e.g. oscillations at t = 0) leak NaNs through
        the zero factor."""
        return np.where(flat_mask, flat_value, expr_value)

    def a(self, t, x, xi):
        t, br, phi_x, s, ref = self._parts(t, x, xi)
        c = self.cutoff.phi(s)
        with np.errstate(all="ignore"):
            raw = c * ref + (1.0 - c) * self.family.a(t, x, xi)
        return self._blend(c >= 1.0, ref, raw)

    def dt_a(self, t, x, xi):
        t, br, phi_x, s, ref = self._parts(t, x, xi)
        c = self.cutoff.phi(s)
        dc = self.cutoff.dphi(s) * phi_x * br
        with np.errstate(all="ignore"):
            raw = dc * (ref - self.family.a(t, x, xi)) + (1.0 - c) * self.family.dt_a(t, x, xi)
        return self._blend(c >= 1.0, np.zeros_like(ref), raw)

    def dx_a(self, t, x, xi):
        t, br, phi_x, s, ref = self._parts(t, x, xi)
        c = self.cutoff.phi(s)
        dc = self.cutoff.dphi(s) * t * np.asarray(self.pair.dphi(x), dtype=float) * br
        om = np.asarray(self.pair.omega(x), dtype=float)
        dref = 2.0 * om * np.asarray(self.pair.domega(x), dtype=float) * br ** 2
        with np.errstate(all="ignore"):
            raw = (dc * (ref - self.family.a(t, x, xi)) + c * dref
                   + (1.0 - c) * self.family.dx_a(t, x, xi))
        return self._blend(c >= 1.0, dref + 0.0 * raw.real, raw)

    def dxi_a(self, t, x, xi):
        t, br, phi_x, s, ref = self._parts(t, x, xi)
        xi = np.asarray(xi, dtype=float)
        c = self.cutoff.phi(s)
        dbr = xi / br
        dc = self.cutoff.dphi(s) * t * phi_x * dbr
        om2 = np.asarray(self.pair.omega(x), dtype=float) ** 2
        with np.errstate(all="ignore"):
            raw = (dc * (ref - self.family.a(t, x, xi)) + c * om2 * 2.0 * xi
                   + (1.0 - c) * self.family.dxi_a(t, x, xi))
        return self._blend(c >= 1.0, om2 * 2.0 * xi + 0.0 * raw.real, raw)

    def defect(self, t, x, xi):
        """``a - atilde = cut(s) * (a - omega^2 <xi>_k^2)``; vanishes for s >= 2.

        Requires t > 0 when the raw coefficient is undefined at 0.
        """
        t, br, phi_x, s, ref = self._parts(t, x, xi)
        return self.cutoff.phi(s) * (self.family.a(t, x, xi) - ref)

    # family duck-typing
    @property
    def p(self):
        return self.family.p

    @property
    def q(self):
        return self.family.q

    @property
    def T(self):
        return self.family.T

    @property
    def spectral_shift(self):
        return self.family.spectral_shift

    @property
    def x_dependent(self):
        return self.family.x_dependent


def excise(family, cutoff: ExcisionCutoff | None = None,
           pair: StructurePair | None = None, k: float | None = None) -> ExcisedCoefficient:
    """Excise the principal symbol; defaults come from the family."""
    return ExcisedCoefficient(
        family=family,
        cutoff=cutoff if cutoff is not None else smooth_cutoff(),
        pair=pair if pair is not None else family.pair,
        k=k if k is not None else family.k,
    )


class EllipticityError(ValueError):
    """Raised when the excised symbol violates its ellipticity floor; carries a witness."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


def _default_root_lattice(T):
    t = np.concatenate([[0.0], np.geomspace(1e-6 * T, T, 31)])
    x = np.concatenate([[0.0], np.geomspace(0.5, 64.0, 8), -np.geomspace(0.5, 64.0, 8)])
    xi = np.concatenate([np.geomspace(0.5, 128.0, 9), -np.geomspace(0.5, 128.0, 9)])
    return t, x, xi


@dataclass(frozen=True)
class CharacteristicRoot:
    """``tau = sqrt(atilde)``, with closed-form first derivatives by the chain rule."""

    excised: ExcisedCoefficient
    floor: float  # fitted c with atilde >= c * omega^2 * ref(xi) on the lattice

    def value(self, t, x, xi):
        return np.sqrt(self.excised.a(t, x, xi))

    def _safe_div(self, num, tau):
        out = np.zeros(np.broadcast(np.asarray(num), np.asarray(tau)).shape)
        np.divide(np.asarray(num, dtype=float), 2.0 * np.asarray(tau, dtype=float),
                  out=out, where=np.asarray(tau) > 0.0)
        return out

    def dt(self, t, x, xi):
        return self._safe_div(self.excised.dt_a(t, x, xi), self.value(t, x, xi))

    def dx(self, t, x, xi):
        return self._safe_div(self.excised.dx_a(t, x, xi), self.value(t, x, xi))

    def dxi(self, t, x, xi):
        return self._safe_div(self.excised.dxi_a(t, x, xi), self.value(t, x, xi))


def char_root(excised: ExcisedCoefficient, lattice=None) -> CharacteristicRoot:
    """Validate ellipticity of ``atilde`` on a sample lattice and return the root.

    The reference is ``omega^2 <xi>_k^2`` for shifted families and
    ``omega^2 xi^2`` for homogeneous ones (whose symbols legitimately vanish at
    ``xi = 0``; those samples are excluded).  A non-positive or non-finite
    fitted floor raises :class:`EllipticityError` with the witnessing sample.
    """
    t, x, xi = lattice if lattice is not None else _default_root_lattice(excised.T)
    tt, xx, ww = np.meshgrid(t, x, xi, indexing="ij")
    vals = excised.a(tt, xx, ww)
    om2 = np.asarray(excised.pair.omega(xx), dtype=float) ** 2
    ref = om2 * (bracket(ww, excised.k) ** 2 if excised.spectral_shift else ww ** 2)
    mask = ref > 0
    ratio = np.full(vals.shape, np.inf)
    ratio[mask] = vals[mask] / ref[mask]
    i = int(np.argmin(ratio))
    floor = float(ratio.ravel()[i])
    if not np.isfinite(vals[mask]).all() or floor <= 0.0:
        witness = (float(tt.ravel()[i]), float(xx.ravel()[i]), float(ww.ravel()[i]), floor)
        raise EllipticityError(
            f"excised symbol violates ellipticity: atilde/ref = {floor:.3e} at "
            f"(t, x, xi) = {witness[:3]}", witness=witness)
    return CharacteristicRoot(excised=excised, floor=floor)


@dataclass(frozen=True)
class HSymbol:
    """``sigma(H) = -(i/2) omega <xi>_k (1 - cut(s/3)) / tau``.

    Vanishes identically for ``t Phi <xi>_k <= 3``; bounded by ``1/(2 sqrt(c))``
    where ``c`` is the root's floor.  Where ``tau = 0`` (only the xi = 0 mode of
    homogeneous families, outside the theory's ellipticity frame) the symbol is
    set to 0.
    """

    root: CharacteristicRoot
    cutoff: ExcisionCutoff
    pair: StructurePair
    k: float

    def _mask(self, t, x, xi):
        s = np.asarray(t, dtype=float) * np.asarray(self.pair.phi(x), dtype=float) \
            * bracket(xi, self.k)
        return 1.0 - self.cutoff.phi(s / 3.0), s

    def value(self, t, x, xi):
        mask, _ = self._mask(t, x, xi)
        tau = self.root.value(t, x, xi)
        num = np.asarray(self.pair.omega(x), dtype=float) * bracket(xi, self.k) * mask
        out = np.zeros(np.broadcast(np.asarray(num), np.asarray(tau)).shape)
        np.divide(num, tau, out=out, where=(tau > 0) & (mask > 0))
        return -0.5j * out

    def dt(self, t, x, xi):
        mask, s = self._mask(t, x, xi)
        tau = self.root.value(t, x, xi)
        dtau = self.root.dt(t, x, xi)
        dmask = -self.cutoff.dphi(s / 3.0) * np.asarray(self.pair.phi(x), dtype=float) \
            * bracket(xi, self.k) / 3.0
        num = np.asarray(self.pair.omega(x), dtype=float) * bracket(xi, self.k)
        good = tau > 0
        term = np.zeros(np.broadcast(np.asarray(num * dmask), np.asarray(tau)).shape)
        np.divide(num * dmask, tau, out=term, where=good)
        term2 = np.zeros_like(term)
        np.divide(num * mask * dtau, tau * tau, out=term2, where=good)
        return -0.5j * (term - term2)


def h_symbol(root: CharacteristicRoot, cutoff: ExcisionCutoff | None = None,
             pair: StructurePair | None = None, k: float | None = None) -> HSymbol:
    return HSymbol(
        root=root,
        cutoff=cutoff if cutoff is not None else root.excised.cutoff,
        pair=pair if pair is not None else root.excised.pair,
        k=k if k is not None else root.excised.k,
    )


# --------------------------------------------------------------------------
# L1 defect quadrature
# --------------------------------------------------------------------------


class QuadratureError(RuntimeError):
    """Raised when the defect quadrature fails its refinement check."""


@dataclass(frozen=True)
class TimeQuadrature:
    """Composite Gauss-Legendre rule on geometric panels of ``[eps_ratio*t_hi, t_hi]``.

    Geometric grading resolves both the integrable ``t**-p`` singularity and the
    bounded oscillations ``sin(pi t**(1-q))`` whose phase diverges at 0; the
    mass below the bottom panel is O(eps_ratio**(1-p)) relative.
    """

    panels: int = 1024
    eps_ratio: float = 1e-14
    rtol: float = 1e-6
    nodes: int = 5

    def integrate(self, f: Callable, t_hi: float) -> float:
        v1 = self._run(f, t_hi, self.panels)
        v2 = self._run(f, t_hi, 2 * self.panels)
        if abs(v2 - v1) > self.rtol * max(abs(v1), abs(v2), 1e-300):
            raise QuadratureError(
                f"defect quadrature did not converge: {v1!r} vs {v2!r} at "
                f"{self.panels}/{2 * self.panels} panels")
        return v2

    def _run(self, f, t_hi, panels):
        nodes, weights = np.polynomial.legendre.leggauss(self.nodes)
        edges = self.eps_ratio * t_hi * (1.0 / self.eps_ratio) ** np.linspace(0.0, 1.0, panels + 1)
        lo, hi = edges[:-1], edges[1:]
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        ts = mid[:, None] + half[:, None] * nodes[None, :]
        vals = f(ts)
        return float(np.sum(half[:, None] * weights[None, :] * vals))


def l1_defect(family: CoefficientFamily, excised: ExcisedCoefficient, x: float, xi: float,
              quadrature: TimeQuadrature | None = None) -> float:
    """``int_0^T |a - atilde| dt`` at fixed ``(x, xi)``.

    The integrand is supported in ``t <= 2/(Phi(x) <xi>_k)`` exactly (the cutoff
    argument reaches 2 there), which is within the splitting-point bound
    ``(2/(Phi <xi>_k))**(1/(q-p))``.
    """
    quad = quadrature if quadrature is not None else TimeQuadrature()
    support = 2.0 / (float(np.asarray(excised.pair.phi(x))) * float(bracket(xi, excised.k)))
    t_hi = min(family.T, support)
    return quad.integrate(lambda ts: np.abs(excised.defect(ts, x, xi)), t_hi)


# --------------------------------------------------------------------------
# estimate fitting
# --------------------------------------------------------------------------


def fit_power_law(t, y):
    """Least-squares slope of ``log y`` against ``log t``; returns (slope, rms residual).

    Rejects non-positive samples; raises if fewer than two remain.
    """
    t = np.asarray(t, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    keep = (t > 0) & (y > 0) & np.isfinite(y)
    if np.count_nonzero(keep) < 2:
        raise ValueError("need at least two positive samples for a power-law fit")
    lt, ly = np.log(t[keep]), np.log(y[keep])
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - ly) ** 2)))
    return float(coef[0]), resid


def _phase_window_edges(b: float, n_windows: int, turns_per_window: float = 1.25,
                        theta_top: float = 12.0 * math.pi):
    """Window edges equidistributed in an oscillation phase ``theta ~ t**-b``.

    Each window covers ``turns_per_window`` full turns, so per-window maxima of
    ``|cos(theta)| * t**-e`` track the envelope regardless of where the cosine
    peaks fall; edges run from phase ``theta_top`` (largest t) upward.
    """
    thetas = theta_top + 2.0 * math.pi * turns_per_window * np.arange(n_windows + 1)
    return (thetas / math.pi) ** (-1.0 / b)  # decreasing in theta


def _windowed_envelope(fn, edges, per_window):
    """Per-window argmax points of |fn|; returns (t_at_max, maxima).

    Attributing the maximum to its own abscissa (not the window center) keeps
    the fitted points on the envelope curve, avoiding center-attribution bias
    when window widths vary.
    """
    edges = np.sort(np.asarray(edges, dtype=float))
    ts_at_max, maxima = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ts = np.geomspace(a, b, per_window)
        vals = np.abs(fn(ts))
        i = int(np.argmax(vals))
        ts_at_max.append(float(ts[i]))
        maxima.append(float(vals[i]))
    return np.asarray(ts_at_max), np.asarray(maxima)


def fit_blowup_exponents(family: CoefficientFamily, *, n_windows: int = 14,
                         per_window: int = 128, probes=None):
    """Fitted blow-up orders of ``sup_{x,xi} |a|/(omega^2 <xi>_k^2)`` and of the
    same ratio for ``dt a``: returns ``(p_fit, q_fit)``.

    Windowed-envelope fitting on phase-equidistributed windows: the oscillatory
    factor's cosine zeros make raw pointwise log-fits unbounded below, while
    per-window maxima track the envelope.
    """
    if probes is None:
        probes = [(0.0, family.k), (1.0, 4.0 * family.k)]
    b = family.osc_exponent
    if b is None and family.q > 1.0:
        b = family.q - 1.0
    if b is not None and b > 0.0:
        edges = _phase_window_edges(b, n_windows)
    else:
        edges = np.geomspace(1e-8, 1e-2, n_windows + 1)

    def ratio(values_fn):
        def sup_ratio(ts):
            best = None
            for (xx, ww) in probes:
                om2 = np.asarray(family.pair.omega(xx), dtype=float) ** 2
                ref = om2 * bracket(ww, family.k) ** 2
                v = np.abs(values_fn(ts, xx, ww)) / ref
                best = v if best is None else np.maximum(best, v)
            return best
        return sup_ratio

    ta, env_a = _windowed_envelope(ratio(family.a), edges, per_window)
    tq, env_dt = _windowed_envelope(ratio(family.dt_a), edges, per_window)
    slope_a, _ = fit_power_law(ta, env_a)
    slope_dt, _ = fit_power_law(tq, env_dt)
    return -slope_a, -slope_dt


@dataclass(frozen=True)
class SampleLattice:
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray

    def mesh(self):
        return np.meshgrid(self.t, self.x, self.xi, indexing="ij")


def graded_lattice(T: float, *, nt: int = 32, nx: int = 33, nxi: int = 33,
                   x_max: float = 100.0, xi_max: float = 200.0,
                   t_min_ratio: float = 1e-5) -> SampleLattice:
    t = np.geomspace(t_min_ratio * T, T, nt)
    half = (nx - 1) // 2
    x = np.concatenate([[0.0], np.geomspace(0.5, x_max, half), -np.geomspace(0.5, x_max, half)])
    half_xi = nxi // 2
    xi = np.concatenate([np.geomspace(0.5, xi_max, half_xi), -np.geomspace(0.5, xi_max, half_xi)])
    return SampleLattice(t=np.sort(t), x=np.sort(x), xi=np.sort(xi))


@dataclass(frozen=True)
class ClassDescriptor:
    """Symbol-class envelope ``<xi>^(m1 - rho1|a| + rho2|b|) omega^m2 Phi^(-rt1|b| + rt2|a|)``."""

    m1: float
    m2: float
    rho: tuple = (1.0, 0.0)
    rho_tilde: tuple = (1.0, 0.0)

    def envelope(self, alpha: int, beta: int, x, xi, pair: StructurePair, k: float):
        e_xi = self.m1 - self.rho[0] * alpha + self.rho[1] * beta
        e_phi = -self.rho_tilde[0] * beta + self.rho_tilde[1] * alpha
        return (bracket(xi, k) ** e_xi
                * np.asarray(pair.omega(x), dtype=float) ** self.m2
                * np.asarray(pair.phi(x), dtype=float) ** e_phi)


@dataclass(frozen=True)
class FitEntry:
    zone: str
    alpha: int
    beta: int
    constant: float
    t_exponent: float
    residual: float
    n_samples: int
    witness: tuple | None = None


@dataclass(frozen=True)
class FitReport:
    entries: tuple
    meta: dict

    def entry(self, zone: str, alpha: int, beta: int) -> FitEntry:
        for e in self.entries:
            if (e.zone, e.alpha, e.beta) == (zone, alpha, beta):
                return e
        raise KeyError((zone, alpha, beta))

    def to_json(self) -> str:
        rows = [
            {
                "zone": e.zone, "alpha": e.alpha, "beta": e.beta,
                "constant": e.constant, "t_exponent": e.t_exponent,
                "residual": e.residual, "n_samples": e.n_samples,
                "witness": list(e.witness) if e.witness is not None else None,
            }
            for e in self.entries
        ]
        return json.dumps({"meta": self.meta, "entries": rows}, indent=2)


def _zone_masks(lattice: SampleLattice, profile, pair: StructurePair, k: float,
                zone_constant: float):
    tt, xx, ww = lattice.mesh()
    codes = classify_zone(tt, xx, ww, zone_constant, profile, pair, k)
    s = tt * np.asarray(pair.phi(xx), dtype=float) * bracket(ww, k)
    return {
        "all": np.ones_like(s, dtype=bool),
        "interior": codes == int(Zone.INTERIOR),
        "exterior": codes == int(Zone.EXTERIOR),
        "excision_flat": (codes == int(Zone.INTERIOR)) & (s <= 1.0),
        "exterior_pure": (codes == int(Zone.EXTERIOR)) & (s >= 2.0),
    }


def symbol_class_report(derivatives: Callable, descriptor: ClassDescriptor, profile,
                        pair: StructurePair, k: float, lattice: SampleLattice, *,
                        max_order: int = 2, zone_constant: float = 1.0,
                        zones=("all", "interior", "exterior", "excision_flat",
                               "exterior_pure")) -> FitReport:
    """Fit minimal class constants and time exponents on a lattice.

    ``derivatives(alpha, beta)`` returns the callable ``(t, x, xi)`` evaluating
    ``d_xi^alpha D_x^beta a`` (or None when unavailable; the pair is skipped).
    Per zone and multi-index, the fit is ``|deriv| <= C * envelope * t**-e``:
    ``e`` from a log-log least-squares slope, then ``C`` as the max of
    ``|deriv| * t**e / envelope`` over the zone's samples.  Unbounded fits are
    reported as ``inf`` with the witnessing sample.
    """
    tt, xx, ww = lattice.mesh()
    masks = _zone_masks(lattice, profile, pair, k, zone_constant)
    entries = []
    for alpha in range(max_order + 1):
        for beta in range(max_order + 1 - alpha):
            fn = derivatives(alpha, beta)
            if fn is None:
                continue
            vals = np.abs(np.asarray(fn(tt, xx, ww), dtype=complex))
            env = descriptor.envelope(alpha, beta, xx, ww, pair, k)
            ratio = vals / env
            for zone in zones:
                mask = masks[zone]
                n = int(np.count_nonzero(mask))
                if n < 2:
                    entries.append(FitEntry(zone, alpha, beta, 0.0, 0.0, 0.0, n))
                    continue
                rz = ratio[mask]
                tz = tt[mask]
                if not np.all(np.isfinite(rz)):
                    i = int(np.argmax(~np.isfinite(rz)))
                    entries.append(FitEntry(zone, alpha, beta, float("inf"), 0.0, 0.0, n,
                                            (float(tz[i]), float(xx[mask][i]),
                                             float(ww[mask][i]))))
                    continue
                pos = rz > 0
                if np.count_nonzero(pos) < max(2, n // 8):
                    # essentially zero on this zone
                    entries.append(FitEntry(zone, alpha, beta, float(np.max(rz, initial=0.0)),
                                            0.0, 0.0, n))
                    continue
                slope, resid = fit_power_law(tz[pos], rz[pos])
                expo = max(-slope, 0.0)  # report blow-up exponents only
                c = float(np.max(rz * tz ** expo))
                entries.append(FitEntry(zone, alpha, beta, c, expo, resid, n))
    return FitReport(entries=tuple(entries),
                     meta={"m1": descriptor.m1, "m2": descriptor.m2,
                           "zone_constant": zone_constant,
                           "nt": lattice.t.size, "nx": lattice.x.size,
                           "nxi": lattice.xi.size})


@dataclass(frozen=True)
class RootReport:
    """Root-specific estimate summary: interior/exterior time exponents of tau at
    order 0, and the maximum of |dt tau| (relative to omega <xi>_k) on the flat
    region where the excision forces it to vanish identically."""

    fit: FitReport
    interior_exponent: float
    exterior_exponent: float
    dt_tau_flat_max: float


def root_estimate_report(root: CharacteristicRoot, profile, *, lattice=None) -> RootReport:
    pair, k = root.excised.pair, root.excised.k
    T = root.excised.T
    lattice = lattice if lattice is not None else graded_lattice(T)

    def derivs(alpha, beta):
        table = {(0, 0): root.value, (1, 0): root.dxi, (0, 1): root.dx}
        return table.get((alpha, beta))

    fit = symbol_class_report(derivs, ClassDescriptor(m1=1.0, m2=1.0), profile, pair, k,
                              lattice, max_order=1)
    tt, xx, ww = lattice.mesh()
    masks = _zone_masks(lattice, profile, pair, k, 1.0)
    flat = masks["excision_flat"]
    scale = np.asarray(pair.omega(xx), dtype=float) * bracket(ww, k)
    dt_vals = np.abs(root.dt(tt, xx, ww)) / scale
    dt_flat = float(np.max(dt_vals[flat], initial=0.0))
    return RootReport(
        fit=fit,
        interior_exponent=fit.entry("interior", 0, 0).t_exponent,
        exterior_exponent=fit.entry("exterior_pure", 0, 0).t_exponent,
        dt_tau_flat_max=dt_flat,
    )
