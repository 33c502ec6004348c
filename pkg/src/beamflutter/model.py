"""Beam parameters, energy functionals, cantilever mode shapes, dispersion relation.

Everything in this module is defined by closed-form expressions: the
configuration record for the clamped-free extensible beam with piston-type
loading, the total/definite energy split, the in vacuo cantilever
eigenfunctions, and the Euler-Bernoulli/Rayleigh dispersion relation.
"""

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

BC_PHYSICAL = "physical"
BC_NAIVE_LINEAR = "naive-linear"

# cosh overflows usefulness well before float64 overflow; above this the
# mode-shape tail coefficients underflow and the shape is pure noise.
MAX_MODE_INDEX = 12


class BeamConfigError(ValueError):
    """Invalid beam parameters."""


@dataclass(frozen=True)
class BeamConfig:
    """Physical and model parameters of the damped extensible cantilever.

    The equation of motion (weak form, clamped at x=0, free at x=L) is

        (1 - alpha d_xx) w_tt + D w_xxxx + k0 w_t - k1 d_xx w_t
            + (b1 - b2 ||w_x||^2) w_xx = p0(x) - beta (w_t + U w_x)

    with the free-end condition carried by the variational formulation when
    ``bc_variant`` is "physical".  The "naive-linear" variant instead pairs
    the nonlocal term with the plain linear free-end conditions; it is
    non-physical (no energy balance) and exists for the boundary-condition
    experiment.

    ``theory_damping`` ties the strong damping to the inertia operator
    (damping matrix k0*(M + alpha*G)), the coupling used in the well-posedness
    theory; otherwise k0 and k1 act as fully independent coefficients.

    ``p0`` holds polynomial coefficients of the static pressure profile in
    ascending powers of x; empty means p0 = 0.
    """

    D: float = 1.0
    L: float = 1.0
    alpha: float = 0.0
    k0: float = 0.0
    k1: float = 0.0
    b1: float = 0.0
    b2: float = 0.0
    beta: float = 1.0
    U: float = 0.0
    p0: tuple = ()
    bc_variant: str = BC_PHYSICAL
    theory_damping: bool = False

    def __post_init__(self):
        if not (self.D > 0.0):
            raise BeamConfigError("flexural rigidity D must be > 0")
        if not (self.L > 0.0):
            raise BeamConfigError("beam length L must be > 0")
        for name in ("alpha", "k0", "k1", "b2", "beta", "U"):
            if getattr(self, name) < 0.0:
                raise BeamConfigError(f"{name} must be >= 0")
        if self.bc_variant not in (BC_PHYSICAL, BC_NAIVE_LINEAR):
            raise BeamConfigError(f"unknown bc_variant {self.bc_variant!r}")
        object.__setattr__(self, "p0", tuple(float(c) for c in self.p0))

    @property
    def k1_effective(self):
        """Strong-damping coefficient actually applied to the G-form."""
        return self.alpha * self.k0 if self.theory_damping else self.k1

    def with_(self, **kwargs):
        """Copy with selected fields replaced."""
        return replace(self, **kwargs)

    @property
    def p0_poly(self):
        return np.polynomial.Polynomial(self.p0 if self.p0 else (0.0,))


@dataclass(frozen=True)
class EnergyPair:
    """Total and definite energy of a state, with the individual summands.

    definite = kinetic + rotational + bending + quartic  (always >= 0)
    total    = definite - prestress, prestress = (b1/2) ||w_x||^2
    """

    total: float
    definite: float
    kinetic: float
    rotational: float
    bending: float
    quartic: float
    prestress: float


def total_energy(w, v, mats, cfg):
    """Energy pair of a semidiscrete state, evaluated with Gram matrices.

    Args:
        w, v: displacement and velocity coefficient vectors.
        mats: discretization matrices exposing ``M`` (L2 Gram), ``G``
            (first-derivative Gram) and ``Khat`` (second-derivative Gram).
        cfg:  BeamConfig supplying D, alpha, b1, b2.

    Reusing the assembled Gram matrices (rather than re-integrating) keeps
    the reported energies exactly consistent with the integrator's forces.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    n = mats.M.shape[0]
    if w.shape != (n,) or v.shape != (n,):
        raise ValueError(
            f"state dimensions {w.shape}/{v.shape} do not match discretization size {n}"
        )
    kinetic = 0.5 * float(v @ (mats.M @ v))
    rotational = 0.5 * cfg.alpha * float(v @ (mats.G @ v))
    g = float(w @ (mats.G @ w))
    bending = 0.5 * cfg.D * float(w @ (mats.Khat @ w))
    quartic = 0.25 * cfg.b2 * g * g
    prestress = 0.5 * cfg.b1 * g
    definite = kinetic + rotational + bending + quartic
    return EnergyPair(
        total=definite - prestress,
        definite=definite,
        kinetic=kinetic,
        rotational=rotational,
        bending=bending,
        quartic=quartic,
        prestress=prestress,
    )


def check_energy_comparison(e, cfg, rtol=1e-12):
    """True iff the total/definite energy comparison bounds hold.

    b1 = 0:  total == definite (exactly).
    b1 < 0:  total/2 - b1^2/(8 b2) <= definite <= total
    b1 > 0:  total <= definite <= 2 total + b1^2/b2

    A relative slack ``rtol`` absorbs roundoff in the marginal cases.
    """
    if cfg.b1 == 0.0:
        return e.total == e.definite
    if cfg.b2 <= 0.0:
        raise BeamConfigError("energy comparison requires b2 > 0 when b1 != 0")
    slack = rtol * max(1.0, abs(e.total), abs(e.definite))
    if cfg.b1 < 0.0:
        lower = 0.5 * e.total - cfg.b1 ** 2 / (8.0 * cfg.b2)
        return lower - slack <= e.definite <= e.total + slack
    upper = 2.0 * e.total + cfg.b1 ** 2 / cfg.b2
    return e.total - slack <= e.definite <= upper + slack


def dispersion_omega(k, alpha):
    """Traveling-wave frequency omega(k) = k^2 / sqrt(1 + alpha k^2).

    Positive root of omega^2 = k^4 / (1 + alpha k^2); alpha > 0 lowers the
    in vacuo frequencies (the destabilizing effect of rotational inertia).
    """
    if alpha < 0.0:
        raise ValueError("alpha must be >= 0")
    k = np.asarray(k, dtype=float)
    out = k * k / np.sqrt(1.0 + alpha * k * k)
    return float(out) if out.ndim == 0 else out


def _char_fn(z):
    # cos(z) cosh(z) + 1 = 0 rescaled by sech(z): same roots, bounded values.
    return math.cos(z) + 1.0 / math.cosh(z)


def _bisect(f, lo, hi, xtol=1e-12, max_iter=200):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise RuntimeError(f"root not bracketed on [{lo}, {hi}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if fmid == 0.0 or (hi - lo) <= xtol:
            return mid
        if flo * fmid < 0.0:
            hi = mid
        else:
            lo, flo = mid, fmid
    raise RuntimeError("bisection did not converge")


# Below this value of kappa*x the plain trig-minus-hyperbolic form is
# accurate to ~cosh(z)*eps absolute and exact at x = 0; above it the
# exponential-split form avoids the cosh/sinh cancellation.
_MODE_SPLIT_ARG = 10.0


@dataclass(frozen=True)
class CantileverMode:
    """In vacuo cantilever eigenfunction s_n with its wavenumber kappa_n.

    s_n(x) = [cos(kx) - cosh(kx)] - C_n [sin(kx) - sinh(kx)],  k = kappa_n.

    For kx > 10 the shape is evaluated in the cancellation-free split

        s_n(x) = cos(kx) - C_n sin(kx) - (1-C_n)/2 e^{kx} - (1+C_n)/2 e^{-kx}

    with 1 - C_n computed from O(1) quantities.  Clamped conditions at x = 0
    hold exactly; s''(L) = s'''(L) = 0 to the root tolerance.
    """

    n: int
    L: float
    kappa: float
    coeff: float  # C_n
    _one_minus_coeff: float = field(repr=False, default=0.0)

    def _naive(self, z, deriv):
        c, s = np.cos(z), np.sin(z)
        ch, sh = np.cosh(z), np.sinh(z)
        d = deriv % 4
        if d == 0:
            return (c - ch) - self.coeff * (s - sh)
        if d == 1:
            return (-s - sh) - self.coeff * (c - ch)
        if d == 2:
            return (-c - ch) - self.coeff * (-s - sh)
        return (s - sh) - self.coeff * (-c - ch)

    def _split(self, z, deriv):
        a, b = 1.0, -self.coeff  # cos, sin coefficients
        for _ in range(deriv % 4):
            a, b = b, -a  # d/dz maps a*cos + b*sin -> b*cos - a*sin
        p = -0.5 * self._one_minus_coeff
        q = -0.5 * (1.0 + self.coeff) * (-1.0 if deriv % 2 else 1.0)
        return a * np.cos(z) + b * np.sin(z) + p * np.exp(z) + q * np.exp(-z)

    def evaluate(self, x, deriv=0):
        """Value of the deriv-th spatial derivative at x (scalar or array)."""
        x = np.asarray(x, dtype=float)
        z = self.kappa * x
        small = z <= _MODE_SPLIT_ARG
        if np.all(small):
            out = self._naive(z, deriv)
        elif not np.any(small):
            out = self._split(z, deriv)
        else:
            out = np.where(small, self._naive(z, deriv), self._split(z, deriv))
        out = out * self.kappa ** deriv
        return float(out) if out.ndim == 0 else out

    __call__ = evaluate


def cantilever_mode(n, L=1.0):
    """n-th clamped-free Euler-Bernoulli mode: (kappa_n, C_n, shape).

    kappa_n solves cos(kappa L) cosh(kappa L) = -1 (bracketed bisection to
    1e-12 on kappa*L); C_n = [cos + cosh]/[sin + sinh] evaluated at kappa_n L.
    Returns a CantileverMode whose ``evaluate(x, deriv)`` gives derivatives
    up to any order.  n is capped at 12: beyond that the stabilized
    exponential split itself loses all significant digits.
    """
    if n < 1:
        raise ValueError("mode index must be >= 1")
    if n > MAX_MODE_INDEX:
        raise ValueError(f"mode index capped at {MAX_MODE_INDEX} (cosh growth)")
    if L <= 0.0:
        raise ValueError("L must be > 0")
    if n == 1:
        lo, hi = 0.1, math.pi
    else:
        lo, hi = (n - 1) * math.pi, n * math.pi
    z = _bisect(_char_fn, lo, hi, xtol=1e-12)
    # C_n and 1 - C_n from O(1) quantities: sinh - cosh = -exp(-z) exactly.
    denom = math.sin(z) + math.sinh(z)
    coeff = (math.cos(z) + math.cosh(z)) / denom
    one_minus = (math.sin(z) - math.cos(z) - math.exp(-z)) / denom
    return CantileverMode(n=n, L=L, kappa=z / L, coeff=coeff, _one_minus_coeff=one_minus)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


class _PolyProfile:
    """Polynomial profile with derivative evaluation, for initial data."""

    def __init__(self, coeffs):
        self.poly = np.polynomial.Polynomial(tuple(coeffs) if len(coeffs) else (0.0,))

    def evaluate(self, x, deriv=0):
        p = self.poly.deriv(deriv) if deriv else self.poly
        out = p(np.asarray(x, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    __call__ = evaluate

    @property
    def coeffs(self):
        return tuple(self.poly.coef)


_ZERO = _PolyProfile((0.0,))


@dataclass(frozen=True)
class InitialCondition:
    """Initial displacement/velocity profiles plus a parseable label.

    Profiles are callables f(x, deriv=0); the discretizations project them by
    Hermite interpolation (FEM) or L2 mode projection (modal).  The clamped
    conditions w(0) = w_x(0) = 0 hold exactly at the discrete level because
    the clamped node carries no degrees of freedom.
    """

    displacement: object
    velocity: object
    label: str

    @classmethod
    def equilibrium(cls):
        """Rest position with the small linear velocity w_t = 0.01 x."""
        return cls(_ZERO, _PolyProfile((0.0, 0.01)), "equilibrium")

    @classmethod
    def second_mode(cls, L=1.0):
        """Second cantilever mode as displacement, zero velocity."""
        return cls(cantilever_mode(2, L), _ZERO, "second-mode")

    @classmethod
    def polynomial_id(cls):
        """Quintic displacement -4x^5 + 15x^4 - 20x^3 + 10x^2, zero velocity."""
        return cls(_PolyProfile((0.0, 0.0, 10.0, -20.0, 15.0, -4.0)), _ZERO, "polynomial")

    @classmethod
    def linear_iv(cls, c=1.0):
        """Zero displacement, linear velocity w_t = c x."""
        label = "linear-iv" if c == 1.0 else f"linear-iv:{c:g}"
        return cls(_ZERO, _PolyProfile((0.0, float(c))), label)

    @classmethod
    def from_polynomials(cls, disp_coeffs, vel_coeffs, label=None):
        """Custom polynomial initial data (coefficients in ascending powers)."""
        disp = _PolyProfile(disp_coeffs)
        vel = _PolyProfile(vel_coeffs)
        if disp.evaluate(0.0) != 0.0 or disp.evaluate(0.0, 1) != 0.0:
            warnings.warn(
                "custom displacement violates w(0)=w_x(0)=0; "
                "the discrete interpolant enforces the clamp anyway"
            )
        if label is None:
            label = "custom:" + ",".join(f"{c:g}" for c in disp.coeffs) + ";" + ",".join(
                f"{c:g}" for c in vel.coeffs
            )
        return cls(disp, vel, label)

    @classmethod
    def from_label(cls, label, L=1.0):
        """Parse the labels produced above (used by config files)."""
        label = label.strip()
        if label == "equilibrium":
            return cls.equilibrium()
        if label == "second-mode":
            return cls.second_mode(L)
        if label == "polynomial":
            return cls.polynomial_id()
        if label == "linear-iv":
            return cls.linear_iv()
        if label.startswith("linear-iv:"):
            return cls.linear_iv(float(label.split(":", 1)[1]))
        if label.startswith("custom:"):
            body = label.split(":", 1)[1]
            disp_s, _, vel_s = body.partition(";")
            parse = lambda s: tuple(float(c) for c in s.split(",")) if s else (0.0,)
            return cls.from_polynomials(parse(disp_s), parse(vel_s), label)
        raise ValueError(f"unknown initial-condition label {label!r}")
