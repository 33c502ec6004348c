"""Stability classification, critical-velocity search, and LCO metrics.

The stability rule is the empirical energy-ratio test: with the energy max
E_max(ta, tb) = max over the window of the total energy, a run over [0, 40]
is unstable iff r = E_max(20, 40) / E_max(0, 20) exceeds 1.  Critical flow
velocities are located by bisection on that predicate with the nonlinearity
disabled (flutter onset is a linear phenomenon; the restoring force only
bounds the post-onset dynamics).  For nonlinear classification outside
U_crit searches a dead band is applied (unstable iff r > 1.05) because
plateaued runs hover near r = 1.
"""

import itertools
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import find_peaks

from .fem import assemble_gram, build_space
from .integrate import simulate
from .model import InitialCondition, cantilever_mode

STABLE = "stable"
UNSTABLE = "unstable"
NONLINEAR_DEADBAND = 1.05
CLASSIFY_HORIZON = 40.0
WINDOW_SPLIT = 20.0

SWEEP_AXES = ("U", "alpha", "k0", "k1", "b2", "alpha_k1")


class BracketError(RuntimeError):
    """Bisection bracket could not be validated."""


@dataclass(frozen=True)
class StabilityReport:
    """Classification of one run by the energy-ratio rule."""

    r: float
    verdict: str
    growth_slope: float
    blow_up_time: float = None
    e_max_first: float = np.nan
    e_max_second: float = np.nan
    threshold: float = 1.0

    @property
    def unstable(self):
        return self.verdict == UNSTABLE


@dataclass(frozen=True)
class LcoMetrics:
    """Amplitude/period/transient description of a limit cycle.

    ``detected`` is False for runs whose terminal amplitude is below 1e-8
    (decayed to equilibrium); the remaining fields are then nan.
    """

    amplitude: float
    period: float
    transient_time: float
    mode2_correlation: float
    detected: bool = True
    n_cycles: int = 0


@dataclass(frozen=True)
class UcritResult:
    """Outcome of a critical-velocity (or critical-damping) search."""

    value: float
    bracket: tuple
    n_probes: int


def energy_max(traj, t_a, t_b):
    """Max of the sampled total energy on [t_a, t_b]."""
    mask = (traj.t >= t_a) & (traj.t <= t_b)
    if not np.any(mask):
        raise ValueError(f"window [{t_a}, {t_b}] contains no samples")
    return float(np.max(traj.e_total[mask]))


def fit_log_energy(traj, window=None):
    """Least-squares slope and R^2 of log E(t); default window = last half.

    The envelope-fitting method is a choice, not a given: the slope is
    exposed for margin-of-stability comparisons without claiming to match
    any particular fitting protocol.
    """
    if window is None:
        mid = 0.5 * (traj.t[0] + traj.t[-1])
        mask = traj.t >= mid
    else:
        mask = (traj.t >= window[0]) & (traj.t <= window[1])
    mask &= traj.e_total > 0.0
    t = traj.t[mask]
    if t.size < 3:
        return np.nan, np.nan
    y = np.log(traj.e_total[mask])
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    fit = A @ coef
    ss_res = float(np.sum((y - fit) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return float(coef[0]), r2


def _ratio_and_windows(traj):
    try:
        e1 = energy_max(traj, 0.0, WINDOW_SPLIT)
    except ValueError:
        e1 = np.nan
    try:
        e2 = energy_max(traj, WINDOW_SPLIT, 2.0 * WINDOW_SPLIT)
    except ValueError:
        e2 = np.nan
    if np.isnan(e2) and traj.blown_up:
        r = np.inf
    elif np.isnan(e1) or np.isnan(e2) or e1 == 0.0:
        r = np.nan
    else:
        r = e2 / e1
    return r, e1, e2


def classify(cfg, ic=None, dt=1e-4, discretization=20, threshold=None, stride=None):
    """Stable/unstable verdict of a T = 40 run via the r > threshold rule.

    threshold defaults to 1 for linear runs (b2 = 0, the U_crit protocol)
    and to the 1.05 dead band for nonlinear runs.  Blow-up before T = 40 is
    unstable with the termination time recorded.
    """
    ic = ic or InitialCondition.equilibrium()
    if threshold is None:
        threshold = 1.0 if cfg.b2 == 0.0 else NONLINEAR_DEADBAND
    traj = simulate(
        cfg, ic, T=CLASSIFY_HORIZON, dt=dt, stride=stride, discretization=discretization
    )
    r, e1, e2 = _ratio_and_windows(traj)
    slope, _ = fit_log_energy(traj)
    unstable = traj.blown_up or (not np.isnan(r) and r > threshold)
    return StabilityReport(
        r=r,
        verdict=UNSTABLE if unstable else STABLE,
        growth_slope=slope,
        blow_up_time=traj.termination_time if traj.blown_up else None,
        e_max_first=e1,
        e_max_second=e2,
        threshold=threshold,
    )


def _bisect_on_verdict(
    probe,
    lo,
    hi,
    unstable_high,
    tol=None,
    rel_tol=None,
    max_expand=4,
    expand_factor=2.0,
):
    """Shared bracketed bisection on a stable/unstable predicate.

    ``unstable_high`` states which end of the bracket is the unstable one
    (True for flow velocity, False for damping coefficients).  Exactly one of
    tol (absolute width) and rel_tol (width ratio, log bisection) applies.
    """
    n_probes = 0

    def is_unstable(x):
        nonlocal n_probes
        n_probes += 1
        return probe(x).unstable

    stable_end, unstable_end = (lo, hi) if unstable_high else (hi, lo)
    for _ in range(max_expand + 1):
        if not is_unstable(stable_end):
            break
        stable_end = stable_end / expand_factor if unstable_high else stable_end * expand_factor
    else:
        raise BracketError("no stable endpoint found within the expansion cap")
    for _ in range(max_expand + 1):
        if is_unstable(unstable_end):
            break
        unstable_end = unstable_end * expand_factor if unstable_high else unstable_end / expand_factor
    else:
        raise BracketError("no unstable endpoint found within the expansion cap")

    lo, hi = (stable_end, unstable_end) if unstable_high else (unstable_end, stable_end)

    def width_ok():
        if tol is not None:
            return abs(hi - lo) <= tol
        return max(hi, lo) / min(hi, lo) <= rel_tol

    while not width_ok():
        mid = 0.5 * (lo + hi) if tol is not None else float(np.sqrt(lo * hi))
        if is_unstable(mid) == unstable_high:
            hi = mid
        else:
            lo = mid
    mid = 0.5 * (lo + hi) if tol is not None else float(np.sqrt(lo * hi))
    return mid, (lo, hi), n_probes


def find_ucrit(
    alpha,
    cfg_base=None,
    bracket=(100.0, 200.0),
    tol=0.25,
    ic=None,
    dt=1e-4,
    discretization=20,
    max_expand=4,
):
    """Critical flow velocity U_crit(alpha) by bisection of the r > 1 rule.

    Probes always run the linear model (b2 forced to 0): the flutter point is
    determined by how the transport term perturbs the in vacuo spectrum, and
    the nonlinearity only bounds the supercritical dynamics.  The bracket is
    validated (stable below, unstable above) and expanded geometrically up to
    ``max_expand`` times per side before giving up.
    """
    from .model import BeamConfig

    cfg_base = cfg_base or BeamConfig()
    cfg = replace(cfg_base, alpha=float(alpha), b2=0.0)
    ic = ic or InitialCondition.equilibrium()

    def probe(U):
        return classify(replace(cfg, U=float(U)), ic, dt=dt, discretization=discretization)

    value, brk, n = _bisect_on_verdict(
        probe, bracket[0], bracket[1], unstable_high=True, tol=tol, max_expand=max_expand
    )
    return UcritResult(value=value, bracket=brk, n_probes=n)


def find_critical_damping(
    param,
    cfg_base,
    bracket,
    rel_tol=1.25,
    ic=None,
    dt=1e-4,
    discretization=20,
    max_expand=4,
):
    """Damping coefficient at which a supercritical run restabilizes.

    ``param`` is "k0" or "k1"; small damping leaves the run unstable, large
    damping stabilizes it, so the bisection runs in log space until the
    bracket ratio is below ``rel_tol``.
    """
    if param not in ("k0", "k1"):
        raise ValueError("param must be 'k0' or 'k1'")
    ic = ic or InitialCondition.equilibrium()

    def probe(x):
        return classify(replace(cfg_base, **{param: float(x)}), ic, dt=dt, discretization=discretization)

    value, brk, n = _bisect_on_verdict(
        probe,
        bracket[0],
        bracket[1],
        unstable_high=False,
        rel_tol=rel_tol,
        max_expand=max_expand,
    )
    return UcritResult(value=value, bracket=brk, n_probes=n)


# ---------------------------------------------------------------------------
# limit cycles
# ---------------------------------------------------------------------------

NO_LCO_AMPLITUDE = 1e-8
MIN_SAMPLES_PER_PERIOD = 20
MIN_CYCLES_AFTER_TRANSIENT = 5
AMPLITUDE_BAND = 0.05


def lco_extract(traj, space=None):
    """Limit-cycle metrics from the tip-displacement series.

    Peaks are local maxima with prominence >= 1% of the max amplitude.  The
    transient ends at the first peak from which all later peak heights stay
    within 5% of the final amplitude (median of the last five); if that never
    happens the last quarter of the run is used, with a warning.  The
    mode-2 correlation is the M-weighted normalized inner product between the
    deflection snapshot at the last tip maximum and the second cantilever
    mode (oriented tip-positive); it needs ``space`` (the trajectory's FEM
    space) and is nan otherwise.
    """
    y = traj.w_tip
    t = traj.t
    tail = max(1, y.size // 10)
    if np.max(np.abs(y[-tail:])) < NO_LCO_AMPLITUDE:
        return LcoMetrics(0.0, np.nan, np.nan, np.nan, detected=False)

    scale = float(np.max(np.abs(y)))
    peaks, _ = find_peaks(y, prominence=0.01 * scale)
    if peaks.size < MIN_CYCLES_AFTER_TRANSIENT + 1:
        raise ValueError(
            f"only {peaks.size} tip maxima found; need at least "
            f"{MIN_CYCLES_AFTER_TRANSIENT + 1} oscillations"
        )
    sample_dt = float(t[1] - t[0])
    crude_period = float(np.mean(np.diff(t[peaks])))
    if crude_period / sample_dt < MIN_SAMPLES_PER_PERIOD:
        raise ValueError(
            f"{crude_period / sample_dt:.1f} samples per period; decimation too "
            f"coarse for LCO extraction (need >= {MIN_SAMPLES_PER_PERIOD})"
        )

    heights = y[peaks]
    final_amp = float(np.median(heights[-5:]))
    within = np.abs(heights - final_amp) <= AMPLITUDE_BAND * abs(final_amp)
    start_idx = None
    for i in range(heights.size):
        if np.all(within[i:]):
            start_idx = i
            break
    if start_idx is None:
        warnings.warn("LCO amplitude never settled; using the last 25% of the run")
        t_cut = t[0] + 0.75 * (t[-1] - t[0])
        start_idx = int(np.searchsorted(t[peaks], t_cut))
        start_idx = min(start_idx, heights.size - 2)
    transient_time = float(t[peaks[start_idx]])

    window_peaks = peaks[start_idx:]
    n_cycles = window_peaks.size - 1
    if n_cycles < MIN_CYCLES_AFTER_TRANSIENT:
        raise ValueError(
            f"only {n_cycles} full cycles beyond the transient; need "
            f">= {MIN_CYCLES_AFTER_TRANSIENT}"
        )
    period = float(np.mean(np.diff(t[window_peaks])))
    window = slice(window_peaks[0], None)
    amplitude = 0.5 * float(np.max(y[window]) - np.min(y[window]))

    corr = np.nan
    if space is not None:
        M = assemble_gram(space).M
        s2 = space.interpolate(cantilever_mode(2, space.L))
        if s2[-2] < 0.0:
            s2 = -s2
        snap = traj.W[window_peaks[-1]]
        denom = np.sqrt(float(snap @ (M @ snap)) * float(s2 @ (M @ s2)))
        if denom > 0.0:
            corr = float(snap @ (M @ s2)) / denom
    return LcoMetrics(
        amplitude=amplitude,
        period=period,
        transient_time=transient_time,
        mode2_correlation=corr,
        detected=True,
        n_cycles=n_cycles,
    )


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------


def _cell_config(cfg_base, coords):
    kwargs = {}
    for axis, value in coords.items():
        if axis == "alpha_k1":
            kwargs["alpha"] = float(value)
            kwargs["k1"] = float(value)
        else:
            kwargs[axis] = float(value)
    return replace(cfg_base, **kwargs)


def _evaluate_cell(args):
    cfg_base, coords, ic_label, T, dt, n_elements, stride, blowup_threshold = args
    row = dict(coords)
    try:
        cfg = _cell_config(cfg_base, coords)
        ic = InitialCondition.from_label(ic_label, cfg.L)
        space = build_space(n_elements, cfg.L)
        traj = simulate(
            cfg,
            ic,
            T=T,
            dt=dt,
            stride=stride,
            discretization=space,
            blowup_threshold=blowup_threshold,
        )
        r, e1, e2 = _ratio_and_windows(traj)
        slope, _ = fit_log_energy(traj)
        threshold = 1.0 if cfg.b2 == 0.0 else NONLINEAR_DEADBAND
        unstable = traj.blown_up or (not np.isnan(r) and r > threshold)
        row.update(
            r=r,
            verdict=UNSTABLE if unstable else STABLE,
            growth_slope=slope,
            E_max_0_20=e1,
            E_max_20_40=e2,
            lco_amplitude=np.nan,
            lco_period=np.nan,
            error="",
        )
        if cfg.b2 > 0.0 and not traj.blown_up:
            try:
                m = lco_extract(traj, space)
                if m.detected:
                    row["lco_amplitude"] = m.amplitude
                    row["lco_period"] = m.period
            except ValueError:
                pass
    except Exception as exc:  # cell failures never abort the sweep
        row.update(
            r=np.nan,
            verdict="error",
            growth_slope=np.nan,
            E_max_0_20=np.nan,
            E_max_20_40=np.nan,
            lco_amplitude=np.nan,
            lco_period=np.nan,
            error=str(exc),
        )
    return row


SWEEP_VALUE_COLUMNS = (
    "r",
    "verdict",
    "growth_slope",
    "E_max_0_20",
    "E_max_20_40",
    "lco_amplitude",
    "lco_period",
)


@dataclass
class SweepResult:
    axes: tuple
    rows: list

    def column(self, name):
        return np.array([row[name] for row in self.rows])

    def write_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        f = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            f.write(",".join(self.axes + SWEEP_VALUE_COLUMNS) + "\n")
            for row in self.rows:
                cells = [f"{row[a]:.12g}" for a in self.axes]
                for c in SWEEP_VALUE_COLUMNS:
                    val = row[c]
                    if isinstance(val, str):
                        cells.append(val)
                    elif val is None or (isinstance(val, float) and np.isnan(val)):
                        cells.append("")
                    else:
                        cells.append(f"{val:.12g}")
                f.write(",".join(cells) + "\n")
        finally:
            if own:
                f.close()


def sweep(
    grid,
    cfg_base,
    ic=None,
    T=CLASSIFY_HORIZON,
    dt=1e-4,
    discretization=20,
    stride=None,
    jobs=1,
    blowup_threshold=1e12,
):
    """Classify every cell of a parameter grid.

    ``grid`` maps axis names (among U, alpha, k0, k1, b2, alpha_k1 — the last
    locks alpha = k1) to value sequences.  The Cartesian product is evaluated
    cell by cell (in parallel for jobs > 1); failures are recorded in the
    row, never raised.  Rows come out sorted lexicographically by grid
    coordinates.
    """
    axes = tuple(sorted(grid))
    for axis in axes:
        if axis not in SWEEP_AXES:
            raise ValueError(f"unknown sweep axis {axis!r} (use {SWEEP_AXES})")
    if "alpha_k1" in axes and ("alpha" in axes or "k1" in axes):
        raise ValueError("alpha_k1 is exclusive with alpha and k1 axes")
    values = [sorted(float(v) for v in grid[a]) for a in axes]
    ic = ic or InitialCondition.equilibrium()
    if not isinstance(discretization, (int, np.integer)):
        raise TypeError("sweep wants an element count for its discretization")
    tasks = [
        (
            cfg_base,
            dict(zip(axes, combo)),
            ic.label,
            T,
            dt,
            int(discretization),
            stride,
            blowup_threshold,
        )
        for combo in itertools.product(*values)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_evaluate_cell, tasks))
    else:
        rows = [_evaluate_cell(task) for task in tasks]
    return SweepResult(axes=axes, rows=rows)
