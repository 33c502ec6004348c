"""Time integration of the semidiscrete beam and trajectory diagnostics.

A ``SemidiscreteSystem`` bundles the reduced first-order form (inverse inertia
folded into the coefficient matrices) for either the Hermite FEM or the modal
Galerkin discretization; ``simulate`` drives the jitted RK4 kernel and records
a stride-decimated ``Trajectory`` with energies, tip series, and the running
dissipation/work integrals entering the energy identity.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import model
from .fem import FemSpace, assemble, build_space, damping_matrix
from ._kernels import rk4_trajectory

BLOWUP_THRESHOLD = 1e12
# RK4 covers |dt * omega| up to 2*sqrt(2) on the imaginary axis; keep margin.
DT_OMEGA_LIMIT = 2.6
DEFAULT_SAMPLES = 2000


class TimestepError(ValueError):
    """dt violates the stability guard for this discretization."""


@dataclass(frozen=True)
class StateVector:
    """Displacement/velocity coefficients at time t.

    ``finite`` is cleared by rk4_step when an overflowing (unstable linear)
    step produces non-finite values; callers terminate the run and record the
    blow-up time.
    """

    w: np.ndarray
    v: np.ndarray
    t: float = 0.0
    finite: bool = True


@dataclass(frozen=True)
class EnergyMatrices:
    """The three Gram matrices every energy evaluation needs."""

    M: np.ndarray
    G: np.ndarray
    Khat: np.ndarray


class SemidiscreteSystem:
    """First-order form  dw/dt = v,  M_alpha dv/dt = rhs(w, v).

    Precomputes M_alpha^{-1}-reduced coefficient matrices once so that each
    right-hand-side evaluation is a handful of dense matvecs.  Instances are
    immutable after construction and safe to share across workers.
    """

    def __init__(self, cfg, mats, solve_mass, stiff, damp, N, load, tip, label, space=None, basis=None):
        self.cfg = cfg
        self.mats = mats  # exposes M, G, Khat (+ T for fem/modal)
        self.label = label
        self.tip_disp = tip  # dot with w -> w(L)
        self.tip_vel = tip
        self.n_dof = mats.M.shape[0]
        self.space = space
        self.basis = basis
        self._omega_max = None

        Minv = solve_mass(np.eye(self.n_dof))
        self._stiff_reduced = Minv @ (cfg.D * np.asarray(mats.Khat))
        self.Aw = -Minv @ stiff
        self.Av = np.ascontiguousarray(-Minv @ damp)
        self.BN = np.ascontiguousarray(Minv @ N)
        self.c0 = Minv @ load
        self.load = np.ascontiguousarray(load, dtype=float)
        self.b1 = cfg.b1
        self.b2 = cfg.b2
        if cfg.b2 == 0.0 and cfg.b1 != 0.0:
            # prestress is linear here; fold it into the stiffness part
            self.Aw = self.Aw + cfg.b1 * self.BN
            self.b1 = 0.0
        self.Aw = np.ascontiguousarray(self.Aw)
        self.G = np.ascontiguousarray(mats.G)
        self.M = np.ascontiguousarray(mats.M)
        self.Khat = np.ascontiguousarray(mats.Khat)
        self.T = np.ascontiguousarray(getattr(mats, "T", np.zeros_like(self.M)))

    @classmethod
    def from_fem(cls, space, cfg):
        if abs(space.L - cfg.L) > 1e-12 * cfg.L:
            raise ValueError("space length does not match cfg.L")
        mats = assemble(space, cfg)
        stiff = cfg.D * mats.Khat + cfg.beta * cfg.U * mats.T
        damp = damping_matrix(mats, cfg) + cfg.beta * mats.M
        N = mats.G if cfg.bc_variant == model.BC_PHYSICAL else -mats.Bint
        tip = np.zeros(mats.n_dof)
        tip[-2] = 1.0  # value DOF at the free node
        return cls(
            cfg,
            mats,
            mats.solve_mass,
            stiff,
            damp,
            N,
            mats.load_p0,
            tip,
            f"fem:{space.n_elements}",
            space=space,
        )

    @classmethod
    def from_modal(cls, basis, cfg):
        from .modal import modal_matrices  # local import to avoid a cycle

        if cfg.bc_variant != model.BC_PHYSICAL:
            raise ValueError("the naive-linear variant is a FEM experiment only")
        mm = modal_matrices(basis, cfg)
        stiff = cfg.D * mm.Khat + cfg.beta * cfg.U * mm.T
        damp = cfg.k0 * mm.M + cfg.k1_effective * mm.G + cfg.beta * mm.M
        return cls(
            cfg,
            mm,
            mm.solve_mass,
            stiff,
            damp,
            mm.G,
            mm.load_p0,
            basis.tip_values.copy(),
            f"modal:{basis.n_modes}",
            basis=basis,
        )

    @classmethod
    def from_matrices(cls, mass, stiff, damp=None, N=None, G=None, load=None, cfg=None):
        """Build directly from matrices (test oscillators, cross-checks)."""
        n = mass.shape[0]
        cfg = cfg or model.BeamConfig(beta=0.0)
        damp = np.zeros((n, n)) if damp is None else damp
        G = np.eye(n) if G is None else G
        N = G if N is None else N
        load = np.zeros(n) if load is None else load
        mats = EnergyMatrices(M=np.asarray(mass, float), G=np.asarray(G, float), Khat=np.asarray(stiff, float) / cfg.D)
        inv = np.linalg.inv(mats.M)
        tip = np.zeros(n)
        tip[-1] = 1.0
        return cls(cfg, mats, lambda b: inv @ b, stiff, damp, N, load, tip, "custom")

    def rhs(self, w, v):
        """(dw/dt, dv/dt) at a state; reference implementation for tests."""
        acc = self.Aw @ w + self.Av @ v + self.c0
        if self.b2 != 0.0 or self.b1 != 0.0:
            s = w @ (self.G @ w)
            acc = acc - (self.b2 * s - self.b1) * (self.BN @ w)
        return v, acc

    def energy(self, w, v):
        return model.total_energy(w, v, self.mats, self.cfg)

    def project_ic(self, ic):
        """Initial coefficient vectors for an InitialCondition."""
        if self.space is not None:
            return (
                self.space.interpolate(ic.displacement),
                self.space.interpolate(ic.velocity),
            )
        if self.basis is not None:
            return self.basis.project(ic.displacement), self.basis.project(ic.velocity)
        raise ValueError("custom systems need explicit initial coefficients")

    def omega_max(self):
        """Largest undamped frequency, by power iteration on M_alpha^{-1} D Khat."""
        if self._omega_max is None:
            B = self._stiff_reduced
            x = np.ones(self.n_dof) / np.sqrt(self.n_dof)
            lam = 0.0
            for _ in range(200):
                y = B @ x
                lam_new = float(np.linalg.norm(y))
                if lam_new == 0.0:
                    break
                x = y / lam_new
                if abs(lam_new - lam) <= 1e-10 * lam_new:
                    lam = lam_new
                    break
                lam = lam_new
            self._omega_max = float(np.sqrt(lam))
        return self._omega_max


@dataclass
class Trajectory:
    """Stride-decimated history of one run plus derived scalar series.

    ``d_visc``/``d_rot`` are the running integrals of ||w_t||^2 and
    ||w_tx||^2; ``w_flow`` is the running work integral
    int (p0 - beta U w_x, w_t).  Energies are evaluated with the same Gram
    matrices the integrator used.
    """

    t: np.ndarray
    W: np.ndarray
    V: np.ndarray
    e_total: np.ndarray
    e_definite: np.ndarray
    w_tip: np.ndarray
    v_tip: np.ndarray
    d_visc: np.ndarray
    d_rot: np.ndarray
    w_flow: np.ndarray
    cfg: object
    dt: float
    stride: int
    blown_up: bool = False
    termination_time: float = None
    termination_reason: str = ""
    system_label: str = ""

    @property
    def n_samples(self):
        return len(self.t)

    def state(self, k):
        return StateVector(w=self.W[k], v=self.V[k], t=float(self.t[k]))

    def sample_energies(self, mats, cfg):
        """EnergyPair at every sample (consistency hook for tests)."""
        return [model.total_energy(self.W[k], self.V[k], mats, cfg) for k in range(self.n_samples)]


def rk4_step(state, dt, system):
    """One classical RK4 step of the semidiscrete system.

    Exact fixed point at the origin when p0 = 0; the production path in
    ``simulate`` runs the same scheme inside a jitted loop.
    """
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    w, v = state.w, state.v
    k1w, k1v = system.rhs(w, v)
    k2w, k2v = system.rhs(w + 0.5 * dt * k1w, v + 0.5 * dt * k1v)
    k3w, k3v = system.rhs(w + 0.5 * dt * k2w, v + 0.5 * dt * k2v)
    k4w, k4v = system.rhs(w + dt * k3w, v + dt * k3v)
    w_new = w + (dt / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    v_new = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    finite = bool(np.all(np.isfinite(w_new)) and np.all(np.isfinite(v_new)))
    return StateVector(w=w_new, v=v_new, t=state.t + dt, finite=finite)


def _resolve_system(cfg, discretization):
    if isinstance(discretization, SemidiscreteSystem):
        return discretization
    if isinstance(discretization, FemSpace):
        return SemidiscreteSystem.from_fem(discretization, cfg)
    if isinstance(discretization, (int, np.integer)):
        return SemidiscreteSystem.from_fem(build_space(int(discretization), cfg.L), cfg)
    from .modal import ModalBasis

    if isinstance(discretization, ModalBasis):
        return SemidiscreteSystem.from_modal(discretization, cfg)
    raise TypeError(f"cannot build a system from {discretization!r}")


def simulate(
    cfg,
    ic,
    T=20.0,
    dt=1e-4,
    stride=None,
    discretization=20,
    check_dt=True,
    blowup_threshold=BLOWUP_THRESHOLD,
):
    """Integrate the beam from t = 0 to T and record a Trajectory.

    Initial data is projected onto the discrete space (Hermite interpolation
    of value and slope for the FEM; L2 mode projection for the modal basis).
    The run terminates early, with the trajectory flagged, when the definite
    energy passes ``blowup_threshold`` or goes non-finite (supercritical
    linear runs).

    ``discretization`` may be an element count, a FemSpace, a ModalBasis, or
    a prebuilt SemidiscreteSystem (whose cfg must match).
    """
    if T <= 0.0:
        raise ValueError("T must be > 0")
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    system = _resolve_system(cfg, discretization)
    if system.cfg != cfg:
        raise ValueError("prebuilt system was assembled for a different config")
    if check_dt:
        w_max = system.omega_max()
        if dt * w_max > DT_OMEGA_LIMIT:
            raise TimestepError(
                f"dt*omega_max = {dt * w_max:.3f} exceeds {DT_OMEGA_LIMIT}"
                f" (need dt <= {DT_OMEGA_LIMIT / w_max:.2e})"
            )

    n_steps = max(1, int(round(T / dt)))
    if stride is None:
        stride = max(1, n_steps // DEFAULT_SAMPLES)
    stride = int(stride)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    # keep samples uniform: extend to a full final stride if needed
    if n_steps % stride:
        n_steps += stride - (n_steps % stride)
    n_samples = n_steps // stride + 1

    w0, v0 = system.project_ic(ic)
    W = np.empty((n_samples, system.n_dof))
    V = np.empty((n_samples, system.n_dof))
    dvisc = np.empty(n_samples)
    drot = np.empty(n_samples)
    wflow = np.empty(n_samples)

    n_written, blew_up = rk4_trajectory(
        np.ascontiguousarray(w0, dtype=float),
        np.ascontiguousarray(v0, dtype=float),
        float(dt),
        n_steps,
        stride,
        system.Aw,
        system.Av,
        system.BN,
        system.G,
        system.M,
        system.Khat,
        system.T,
        system.c0,
        system.load,
        float(system.b1),
        float(system.b2),
        float(cfg.beta * cfg.U),
        float(cfg.alpha),
        float(cfg.D),
        float(blowup_threshold),
        W,
        V,
        dvisc,
        drot,
        wflow,
    )

    W, V = W[:n_written], V[:n_written]
    dvisc, drot, wflow = dvisc[:n_written], drot[:n_written], wflow[:n_written]
    t = np.arange(n_written) * (stride * dt)

    kinetic = 0.5 * np.einsum("ij,ij->i", V @ system.M, V)
    rot = 0.5 * cfg.alpha * np.einsum("ij,ij->i", V @ system.G, V)
    bend = 0.5 * cfg.D * np.einsum("ij,ij->i", W @ system.Khat, W)
    g = np.einsum("ij,ij->i", W @ system.G, W)
    e_def = kinetic + rot + bend + 0.25 * cfg.b2 * g * g
    e_tot = e_def - 0.5 * cfg.b1 * g

    traj = Trajectory(
        t=t,
        W=W,
        V=V,
        e_total=e_tot,
        e_definite=e_def,
        w_tip=W @ system.tip_disp,
        v_tip=V @ system.tip_vel,
        d_visc=dvisc,
        d_rot=drot,
        w_flow=wflow,
        cfg=cfg,
        dt=dt,
        stride=stride,
        blown_up=bool(blew_up),
        system_label=system.label,
    )
    if blew_up:
        traj.termination_time = float(t[-1])
        traj.termination_reason = (
            "definite energy passed the blow-up threshold"
            if np.isfinite(e_def[-1])
            else "state went non-finite"
        )
    return traj


def energy_identity_residual(traj, cfg=None):
    """Normalized defect of the energy identity along the trajectory.

        r(t) = [ E(t) + (k0+beta) int ||w_t||^2 + k1_eff int ||w_tx||^2
                 - E(0) - int (p0 - beta U w_x, w_t) ] / max(1, E(0))

    For the physical variant the identity is exact for the semidiscrete
    system, so r measures only the RK4/trapezoid error; the naive-linear
    variant has no such identity and r grows.
    """
    cfg = cfg or traj.cfg
    dissipation = (cfg.k0 + cfg.beta) * traj.d_visc + cfg.k1_effective * traj.d_rot
    r = traj.e_total + dissipation - traj.e_total[0] - traj.w_flow
    return r / max(1.0, abs(traj.e_total[0]))


TRAJECTORY_COLUMNS = (
    "t",
    "E_total",
    "E_definite",
    "w_tip",
    "v_tip",
    "D_visc",
    "D_rot",
    "W_flow",
    "residual",
)


def write_trajectory_csv(traj, path_or_file):
    """Trajectory CSV: one row per sample, floats formatted %.12g."""
    residual = energy_identity_residual(traj)
    rows = zip(
        traj.t,
        traj.e_total,
        traj.e_definite,
        traj.w_tip,
        traj.v_tip,
        traj.d_visc,
        traj.d_rot,
        traj.w_flow,
        residual,
    )
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    f = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(f)
        writer.writerow(TRAJECTORY_COLUMNS)
        for row in rows:
            writer.writerow([f"{x:.12g}" for x in row])
    finally:
        if own:
            f.close()


def trajectory_csv_text(traj):
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()
