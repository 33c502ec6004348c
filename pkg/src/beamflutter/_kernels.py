"""Jitted RK4 time-stepping kernels.

The semidiscrete system is reduced ahead of time to

    dw/dt = v
    dv/dt = Aw @ w + Av @ v + c0 - (b2 * (w'Gw) - b1) * (BN @ w)

where Aw, Av, BN already contain the inverse inertia operator.  For b2 = 0
the nonlinear branch is compiled away (b1 is folded into Aw by the caller).

The kernels write stride-decimated state samples and accumulate the
dissipation/work integrands with the per-step trapezoid rule, so the energy
identity diagnostic is limited only by the integrator's own order.  No
fastmath: runs must be bitwise reproducible and exactly odd in the state.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _accel_linear(w, v, Aw, Av, c0):
    return Aw @ w + Av @ v + c0


@njit(cache=True)
def _accel_cubic(w, v, Aw, Av, BN, G, c0, b1, b2):
    s = w @ (G @ w)
    return Aw @ w + Av @ v + c0 - (b2 * s - b1) * (BN @ w)


@njit(cache=True)
def rk4_trajectory(
    w,
    v,
    dt,
    n_steps,
    stride,
    Aw,
    Av,
    BN,
    G,
    M,
    Khat,
    T,
    c0,
    load,
    b1,
    b2,
    beta_U,
    alpha,
    D,
    blowup_threshold,
    W_out,
    V_out,
    dvisc_out,
    drot_out,
    wflow_out,
):
    """Integrate n_steps of classical RK4, sampling every ``stride`` steps.

    Output arrays must hold n_steps // stride + 1 samples.  Returns
    (n_samples_written, blew_up); on blow-up the offending sample is kept so
    the caller can report the termination time.
    """
    cubic = b2 != 0.0
    half = 0.5 * dt
    sixth = dt / 6.0

    f_visc = v @ (M @ v)
    f_rot = v @ (G @ v)
    f_work = load @ v - beta_U * (v @ (T @ w))
    dvisc = 0.0
    drot = 0.0
    wflow = 0.0

    W_out[0] = w
    V_out[0] = v
    dvisc_out[0] = 0.0
    drot_out[0] = 0.0
    wflow_out[0] = 0.0
    k_sample = 1

    for step in range(1, n_steps + 1):
        if cubic:
            a1 = _accel_cubic(w, v, Aw, Av, BN, G, c0, b1, b2)
            w2 = w + half * v
            v2 = v + half * a1
            a2 = _accel_cubic(w2, v2, Aw, Av, BN, G, c0, b1, b2)
            w3 = w + half * v2
            v3 = v + half * a2
            a3 = _accel_cubic(w3, v3, Aw, Av, BN, G, c0, b1, b2)
            w4 = w + dt * v3
            v4 = v + dt * a3
            a4 = _accel_cubic(w4, v4, Aw, Av, BN, G, c0, b1, b2)
        else:
            a1 = _accel_linear(w, v, Aw, Av, c0)
            w2 = w + half * v
            v2 = v + half * a1
            a2 = _accel_linear(w2, v2, Aw, Av, c0)
            w3 = w + half * v2
            v3 = v + half * a2
            a3 = _accel_linear(w3, v3, Aw, Av, c0)
            w4 = w + dt * v3
            v4 = v + dt * a3
            a4 = _accel_linear(w4, v4, Aw, Av, c0)
        w = w + sixth * (v + 2.0 * v2 + 2.0 * v3 + v4)
        v = v + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4)

        f_visc_new = v @ (M @ v)
        f_rot_new = v @ (G @ v)
        f_work_new = load @ v - beta_U * (v @ (T @ w))
        dvisc += half * (f_visc + f_visc_new)
        drot += half * (f_rot + f_rot_new)
        wflow += half * (f_work + f_work_new)
        f_visc, f_rot, f_work = f_visc_new, f_rot_new, f_work_new

        if step % stride == 0:
            W_out[k_sample] = w
            V_out[k_sample] = v
            dvisc_out[k_sample] = dvisc
            drot_out[k_sample] = drot
            wflow_out[k_sample] = wflow
            k_sample += 1
            g = w @ (G @ w)
            e_def = (
                0.5 * f_visc_new
                + 0.5 * alpha * f_rot_new
                + 0.5 * D * (w @ (Khat @ w))
                + 0.25 * b2 * g * g
            )
            if not (e_def < blowup_threshold):
                return k_sample, True
    return k_sample, False
