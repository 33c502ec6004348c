"""Hermite-cubic finite elements on the clamped-free beam.

The discretization conforms to H^2 with the clamped end built into the space
(value and slope DOFs at x = 0 removed), so the free-end condition — including
its nonlocal nonlinear part — is carried by the variational formulation alone.
All matrices are assembled by 4-point Gauss-Legendre quadrature per element,
exact for every polynomial integrand that appears (degree <= 6).

Dense storage throughout: at <= a few hundred DOFs the banded (bandwidth-7)
structure is not worth exploiting.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .model import BC_NAIVE_LINEAR, BC_PHYSICAL


class AssemblyError(RuntimeError):
    """A matrix that must be SPD failed to factorize."""


class NewtonError(RuntimeError):
    """Newton iteration failed to converge; carries the best iterate."""

    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


def _hermite_shapes(xi, h, deriv=0):
    """The four cubic Hermite shape functions on [0, 1] scaled to length h.

    DOF order: (value_left, slope_left, value_right, slope_right); slope DOFs
    carry the factor h so that coefficients are physical derivatives.
    Returns an array (..., 4) of the deriv-th x-derivatives.
    """
    xi = np.asarray(xi, dtype=float)
    if deriv == 0:
        vals = (
            1.0 - 3.0 * xi**2 + 2.0 * xi**3,
            h * xi * (1.0 - xi) ** 2,
            3.0 * xi**2 - 2.0 * xi**3,
            h * xi**2 * (xi - 1.0),
        )
        scale = 1.0
    elif deriv == 1:
        vals = (
            -6.0 * xi + 6.0 * xi**2,
            h * (1.0 - 4.0 * xi + 3.0 * xi**2),
            6.0 * xi - 6.0 * xi**2,
            h * (3.0 * xi**2 - 2.0 * xi),
        )
        scale = 1.0 / h
    elif deriv == 2:
        vals = (
            -6.0 + 12.0 * xi,
            h * (-4.0 + 6.0 * xi),
            6.0 - 12.0 * xi,
            h * (6.0 * xi - 2.0),
        )
        scale = 1.0 / h**2
    elif deriv == 3:
        ones = np.ones_like(xi)
        vals = (12.0 * ones, 6.0 * h * ones, -12.0 * ones, -6.0 * h * ones)
        scale = 1.0 / h**3
    else:
        raise ValueError("Hermite cubics have derivatives up to order 3")
    return np.stack(vals, axis=-1) * scale


@dataclass(frozen=True)
class FemSpace:
    """Uniform Hermite-cubic space with the clamped node removed.

    Two DOFs (value, slope) per free node; n_dof = 2 * n_elements.  Basis
    functions and their first two derivatives are evaluable anywhere, which
    is what interpolation, snapshots and quadrature cross-checks use.
    """

    n_elements: int
    L: float
    nodes: np.ndarray
    n_dof: int

    @property
    def h(self):
        return self.L / self.n_elements

    def element_dofs(self, e):
        """Global DOF indices of element e's 4 local DOFs (-1 = clamped)."""
        left = 2 * e - 2
        return np.array([left, left + 1, left + 2, left + 3])

    def interpolate(self, profile):
        """Hermite interpolant: value and slope of ``profile`` at free nodes."""
        coeffs = np.empty(self.n_dof)
        xk = self.nodes[1:]
        coeffs[0::2] = profile(xk, 0)
        coeffs[1::2] = profile(xk, 1)
        return coeffs

    def evaluate(self, coeffs, x, deriv=0):
        """Evaluate the FE field (or a derivative) at arbitrary points."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (self.n_dof,):
            raise ValueError("coefficient vector does not match space")
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        h = self.h
        e = np.clip((x / h).astype(int), 0, self.n_elements - 1)
        xi = x / h - e
        shapes = _hermite_shapes(xi, h, deriv)  # (npts, 4)
        full = np.concatenate([[0.0, 0.0], coeffs])  # prepend clamped DOFs
        idx = 2 * e[:, None] + np.arange(4)[None, :]
        out = np.sum(shapes * full[idx], axis=-1)
        return float(out[0]) if scalar else out


def build_space(n_elements, L=1.0):
    """Uniform mesh with ``n_elements`` Hermite-cubic elements on [0, L]."""
    if n_elements < 2:
        raise ValueError("need at least 2 elements")
    nodes = np.linspace(0.0, L, n_elements + 1)
    return FemSpace(n_elements=n_elements, L=L, nodes=nodes, n_dof=2 * n_elements)


def _assemble_pairing(space, dl, dr, n_gauss=4):
    """Global matrix of (d^dl phi_j, d^dr phi_i) by per-element quadrature."""
    xi_g, w_g = np.polynomial.legendre.leggauss(n_gauss)
    xi_g = 0.5 * (xi_g + 1.0)
    w_g = 0.5 * w_g * space.h
    h = space.h
    sl = _hermite_shapes(xi_g, h, dl)  # (n_gauss, 4)
    sr = _hermite_shapes(xi_g, h, dr)
    block = np.einsum("q,qi,qj->ij", w_g, sr, sl)  # rows test, cols trial
    A = np.zeros((space.n_dof, space.n_dof))
    for e in range(space.n_elements):
        dofs = space.element_dofs(e)
        keep = dofs >= 0
        A[np.ix_(dofs[keep], dofs[keep])] += block[np.ix_(keep, keep)]
    return A


def _assemble_load(space, poly, n_gauss=None):
    """Load vector (p, phi_i) for a polynomial pressure profile."""
    deg = len(poly.coef) - 1
    if n_gauss is None:
        n_gauss = max(4, (deg + 3) // 2 + 1)  # exact for degree deg + 3
    xi_g, w_g = np.polynomial.legendre.leggauss(n_gauss)
    xi_g = 0.5 * (xi_g + 1.0)
    w_g = 0.5 * w_g * space.h
    h = space.h
    shapes = _hermite_shapes(xi_g, h, 0)
    F = np.zeros(space.n_dof)
    for e in range(space.n_elements):
        xs = (e + xi_g) * h
        fe = (w_g * poly(xs)) @ shapes
        dofs = space.element_dofs(e)
        keep = dofs >= 0
        F[dofs[keep]] += fe[keep]
    return F


@dataclass(frozen=True)
class GramMatrices:
    """Config-independent pairings of the Hermite basis."""

    M: np.ndarray  # (phi_j,    phi_i)
    G: np.ndarray  # (phi_jx,   phi_ix)
    Khat: np.ndarray  # (phi_jxx,  phi_ixx)
    T: np.ndarray  # (phi_jx,   phi_i)
    Bint: np.ndarray  # (phi_jxx,  phi_i)


def assemble_gram(space):
    """All basis pairings; independent of the beam parameters."""
    return GramMatrices(
        M=_assemble_pairing(space, 0, 0),
        G=_assemble_pairing(space, 1, 1),
        Khat=_assemble_pairing(space, 2, 2),
        T=_assemble_pairing(space, 1, 0),
        Bint=_assemble_pairing(space, 2, 0),
    )


@dataclass(frozen=True)
class OperatorMatrices:
    """Assembled operators of the semidiscrete beam for one configuration.

    M_alpha = M + alpha*G is the inertia inner product; its Cholesky factor
    is cached here and reused by every right-hand-side evaluation.
    """

    M: np.ndarray
    G: np.ndarray
    Khat: np.ndarray
    T: np.ndarray
    Bint: np.ndarray
    load_p0: np.ndarray
    M_alpha: np.ndarray
    M_alpha_factor: tuple

    @property
    def n_dof(self):
        return self.M.shape[0]

    def solve_mass(self, b):
        """M_alpha^{-1} b via the cached factorization (reentrant)."""
        return cho_solve(self.M_alpha_factor, b)


def assemble(space, cfg):
    """Assemble every operator matrix for ``cfg`` and factor M_alpha."""
    gram = assemble_gram(space)
    load = _assemble_load(space, cfg.p0_poly)
    M_alpha = gram.M + cfg.alpha * gram.G
    try:
        factor = cho_factor(M_alpha)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - assembly bug guard
        raise AssemblyError(f"M_alpha failed Cholesky: {exc}") from exc
    return OperatorMatrices(
        M=gram.M,
        G=gram.G,
        Khat=gram.Khat,
        T=gram.T,
        Bint=gram.Bint,
        load_p0=load,
        M_alpha=M_alpha,
        M_alpha_factor=factor,
    )


def nonlinear_force(w, mats, cfg):
    """Restoring-force vector F_nl(w) of the extensible nonlinearity.

    The semidiscrete momentum balance reads

        M_alpha dv/dt = -D Khat w - F_nl(w) - (k0 M + k1 G) v
                        - beta (M v + U T w) + load_p0.

    physical:      F_nl = (b2 w'Gw - b1) G w        (gradient of the energy)
    naive-linear:  F_nl = (b2 w'Gw - b1) (-Bint) w  (interior pairing only)
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (mats.n_dof,):
        raise ValueError("coefficient vector does not match matrices")
    s = float(w @ (mats.G @ w))
    coef = cfg.b2 * s - cfg.b1
    if cfg.bc_variant == BC_PHYSICAL:
        return coef * (mats.G @ w)
    return -coef * (mats.Bint @ w)


def damping_matrix(mats, cfg):
    """k0 M + k1_eff G (theory coupling folds k1_eff = alpha k0)."""
    return cfg.k0 * mats.M + cfg.k1_effective * mats.G


def static_solve(F, lam, mu, cfg, space, tol=1e-10, max_iter=50):
    """Newton solve of the stationary nonlinear problem.

    Finds v minimizing  lam/2 ||v||_{H2*}^2 + mu/2 ||v_x||^2 + J(v) - F'v,
    where J(v) = D/2 ||v_xx||^2 + b2/4 ||v_x||^4 - b1/2 ||v_x||^2, i.e. the
    coefficient vector with

        (1+lam) D Khat v + (mu - b1 + b2 v'Gv) G v = F

    to residual norm <= tol.  Coercive for b1 <= 0 or b2 > 0 with moderate
    b1; warns when b1 > 0 and b2 = 0.
    """
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    F = np.asarray(F, dtype=float)
    if F.shape != (space.n_dof,):
        raise ValueError("load vector does not match space")
    if cfg.b1 > 0.0 and cfg.b2 == 0.0:
        warnings.warn("b1 > 0 with b2 = 0: functional may be non-coercive")
    gram = assemble_gram(space)
    K = (1.0 + lam) * cfg.D * gram.Khat
    G = gram.G

    def residual(v):
        s = float(v @ (G @ v))
        return K @ v + (mu - cfg.b1 + cfg.b2 * s) * (G @ v) - F

    v = np.zeros(space.n_dof)
    r = residual(v)
    best_v, best_norm = v.copy(), float(np.linalg.norm(r))
    for _ in range(max_iter):
        rnorm = float(np.linalg.norm(r))
        if rnorm < best_norm:
            best_v, best_norm = v.copy(), rnorm
        if rnorm <= tol:
            return v
        s = float(v @ (G @ v))
        Gv = G @ v
        J = K + (mu - cfg.b1 + cfg.b2 * s) * G + 2.0 * cfg.b2 * np.outer(Gv, Gv)
        step = np.linalg.solve(J, -r)
        # backtrack on the residual norm; plain Newton suffices away from
        # non-coercive corners but costs nothing to guard
        t = 1.0
        for _ in range(30):
            v_new = v + t * step
            r_new = residual(v_new)
            if np.linalg.norm(r_new) < rnorm:
                break
            t *= 0.5
        else:
            raise NewtonError(
                f"line search stalled at residual {rnorm:.3e}",
                best=best_v,
                residual=best_norm,
            )
        v, r = v_new, r_new
    raise NewtonError(
        f"no convergence after {max_iter} iterations (best residual {best_norm:.3e})",
        best=best_v,
        residual=best_norm,
    )


def static_functional(v, F, lam, mu, cfg, space):
    """Value of the stationary functional at v (for descent checks)."""
    gram = assemble_gram(space)
    s = float(v @ (gram.G @ v))
    return (
        0.5 * (1.0 + lam) * cfg.D * float(v @ (gram.Khat @ v))
        + 0.5 * (mu - cfg.b1) * s
        + 0.25 * cfg.b2 * s * s
        - float(F @ v)
    )


def dump_matrix(mat, path):
    """Write a dense matrix as plain text, row-major, one row per line.

    %.17g round-trips float64 exactly; intended for cross-validation against
    external tools.
    """
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w") as f:
        for row in mat:
            f.write(" ".join(f"{x:.17g}" for x in row))
            f.write("\n")
