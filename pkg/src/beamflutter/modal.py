"""Eigenfunction-Galerkin discretization: the independent oracle.

The basis is the L2-orthonormalized family of in vacuo cantilever modes of
the biharmonic operator with clamped-free conditions.  Projecting the weak
form onto n modes yields an ODE system whose principal part is diagonal and
whose nonlinearity is a cubic polynomial through the gram matrix
P[j,k] = (e_j', e_k'); it is used to cross-check the Hermite FEM.

The construction extends the zero-inertia Galerkin scheme to alpha > 0 with
the non-diagonal mass I + alpha P (the natural analog, used here only for
cross-checks).  Mode integrals are computed by composite Gauss quadrature
(64 panels x 8 points); closed forms for products of beam functions are
error-prone.
"""

from dataclasses import dataclass, field

import numpy as np

from .model import cantilever_mode

QUAD_PANELS = 64
QUAD_POINTS = 8


def _panel_rule(L, n_panels=QUAD_PANELS, n_points=QUAD_POINTS):
    xi, wt = np.polynomial.legendre.leggauss(n_points)
    h = L / n_panels
    starts = np.arange(n_panels) * h
    x = (starts[:, None] + 0.5 * h * (xi[None, :] + 1.0)).ravel()
    w = np.tile(0.5 * h * wt, n_panels)
    return x, w


@dataclass(frozen=True)
class ModalBasis:
    """L2-orthonormal cantilever modes with their pairing matrices.

    eigenvalues are lambda_k = D * kappa_k^4; gram_x is the positive-definite
    matrix P; transport is Q[k,j] = (e_j', e_k).
    """

    n_modes: int
    L: float
    D: float
    kappas: np.ndarray
    eigenvalues: np.ndarray
    norms: np.ndarray  # L2 norms of the raw shapes
    gram_x: np.ndarray
    transport: np.ndarray
    tip_values: np.ndarray
    _modes: tuple = field(repr=False, default=())
    _quad_x: np.ndarray = field(repr=False, default=None)
    _quad_w: np.ndarray = field(repr=False, default=None)

    def mode_values(self, x, k, deriv=0):
        """Normalized mode e_k (1-based) or a derivative at points x."""
        return self._modes[k - 1].evaluate(x, deriv) / self.norms[k - 1]

    def project(self, profile):
        """L2 projection coefficients (profile, e_k)."""
        fx = profile(self._quad_x, 0)
        return np.array(
            [
                float(np.sum(self._quad_w * fx * self.mode_values(self._quad_x, k)))
                for k in range(1, self.n_modes + 1)
            ]
        )

    def synthesize(self, eta, x, deriv=0):
        """Field value sum_k eta_k e_k(x) (or a derivative)."""
        out = 0.0
        for k in range(1, self.n_modes + 1):
            out = out + eta[k - 1] * self.mode_values(x, k, deriv)
        return out


def build_modal_basis(n_modes, L=1.0, D=1.0):
    """Construct the basis and its quadrature-evaluated pairing matrices."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    modes = tuple(cantilever_mode(k, L) for k in range(1, n_modes + 1))
    x, w = _panel_rule(L)
    raw = np.stack([m.evaluate(x) for m in modes])  # (n, npts)
    norms = np.sqrt(np.sum(w * raw * raw, axis=1))
    e = raw / norms[:, None]
    ex = np.stack([m.evaluate(x, 1) for m in modes]) / norms[:, None]
    gram_x = np.einsum("q,iq,jq->ij", w, ex, ex)
    gram_x = 0.5 * (gram_x + gram_x.T)  # symmetrize roundoff
    transport = np.einsum("q,jq,iq->ij", w, ex, e)  # (e_j', e_i)
    kappas = np.array([m.kappa for m in modes])
    tips = np.array([m.evaluate(L) for m in modes]) / norms
    return ModalBasis(
        n_modes=n_modes,
        L=L,
        D=D,
        kappas=kappas,
        eigenvalues=D * kappas**4,
        norms=norms,
        gram_x=gram_x,
        transport=transport,
        tip_values=tips,
        _modes=modes,
        _quad_x=x,
        _quad_w=w,
    )


@dataclass(frozen=True)
class ModalMatrices:
    """Pairing matrices in the shape the integrator consumes.

    M = I (orthonormal modes), G = P, Khat = diag(kappa^4) so that D*Khat is
    the diagonal stiffness, T = transport, plus the p0 load and the factored
    modal mass I + alpha P.
    """

    M: np.ndarray
    G: np.ndarray
    Khat: np.ndarray
    T: np.ndarray
    load_p0: np.ndarray
    mass: np.ndarray
    basis: ModalBasis

    def solve_mass(self, b):
        return np.linalg.solve(self.mass, b)


def modal_matrices(basis, cfg):
    """Assemble the modal operator matrices for a configuration."""
    if abs(basis.L - cfg.L) > 1e-12 * cfg.L:
        raise ValueError("basis length does not match cfg.L")
    if abs(basis.D - cfg.D) > 1e-12 * cfg.D:
        raise ValueError("basis was built for a different D")
    n = basis.n_modes
    eye = np.eye(n)
    load = basis.project(lambda x, d=0: cfg.p0_poly(x))
    return ModalMatrices(
        M=eye,
        G=basis.gram_x,
        Khat=np.diag(basis.kappas**4),
        T=basis.transport,
        load_p0=load,
        mass=eye + cfg.alpha * basis.gram_x,
        basis=basis,
    )


def modal_rhs(eta, eta_dot, basis, cfg):
    """Acceleration of the modal coefficients.

        (I + alpha P) eta'' = -Lambda eta - (b2 eta'P eta - b1) P eta
                              - (k0 + beta) eta' - k1_eff P eta'
                              - beta U Q eta + (p0, e_k)

    i.e. the weak form tested against each mode, with the flow term entering
    as -beta*U*(w_x, e_k).
    """
    eta = np.asarray(eta, dtype=float)
    eta_dot = np.asarray(eta_dot, dtype=float)
    if eta.shape != (basis.n_modes,) or eta_dot.shape != (basis.n_modes,):
        raise ValueError("coefficient vectors do not match basis size")
    mm = modal_matrices(basis, cfg)
    s = float(eta @ (mm.G @ eta))
    rhs = (
        -cfg.D * (mm.Khat @ eta)
        - (cfg.b2 * s - cfg.b1) * (mm.G @ eta)
        - (cfg.k0 + cfg.beta) * eta_dot
        - cfg.k1_effective * (mm.G @ eta_dot)
        - cfg.beta * cfg.U * (mm.T @ eta)
        + mm.load_p0
    )
    return mm.solve_mass(rhs)
