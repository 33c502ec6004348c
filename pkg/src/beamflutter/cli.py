"""Batch front-end: flat-file scenario configs, presets, CSV emission.

Config files are flat ``key = value`` text with ``#`` comments; every run
writes a manifest echoing the fully-resolved configuration (all defaults made
explicit) so that re-running the manifest reproduces the outputs byte for
byte.  Presets emit the parameter sets of the published figure experiments.

Exit codes: 0 success (including scientific blow-up), 1 usage, 2 config,
3 runtime failure.
"""

import argparse
import os
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import analysis, integrate, model
from .analysis import find_ucrit, sweep
from .integrate import simulate, write_trajectory_csv

ENV_OUTDIR = "BEAMFLUTTER_OUTDIR"

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class ConfigError(ValueError):
    """Malformed or inconsistent scenario configuration."""


MODES = ("simulate", "sweep", "ucrit", "dispersion")
OUTPUT_KINDS = ("trajectory", "energies", "tip")


@dataclass(frozen=True)
class ScenarioConfig:
    """Fully-resolved description of one batch run.

    Defaults follow the published protocol: D = L = 1, beta = 1, p0 = 0,
    b1 = 0, mesh of 20 elements, dt = 1e-4, T = 20, initial data w = 0,
    w_t = 0.01 x.
    """

    mode: str = "simulate"
    label: str = "run"
    # beam parameters
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
    bc: str = model.BC_PHYSICAL
    theory_damping: bool = False
    # discretization / run protocol
    ic: str = "equilibrium"
    n_elements: int = 20
    dt: float = 1e-4
    T: float = 20.0
    stride: int = 0  # 0 = automatic (about 2000 samples)
    outputs: tuple = ("trajectory",)
    jobs: int = 1
    # sweep axes (sweep mode)
    sweep_U: tuple = ()
    sweep_alpha: tuple = ()
    sweep_k0: tuple = ()
    sweep_k1: tuple = ()
    sweep_b2: tuple = ()
    sweep_alpha_k1: tuple = ()
    # critical-velocity search (ucrit mode)
    ucrit_alphas: tuple = ()
    ucrit_bracket_lo: float = 0.0  # 0 = per-alpha heuristic
    ucrit_bracket_hi: float = 0.0
    ucrit_tol: float = 0.25
    # dispersion table (dispersion mode)
    disp_alphas: tuple = (0.0,)
    disp_kmax: float = 20.0
    disp_n: int = 201
    # early-termination energy threshold (raise for uncapped linear sweeps)
    blowup_threshold: float = 1e12

    def beam_config(self, **overrides):
        kwargs = dict(
            D=self.D,
            L=self.L,
            alpha=self.alpha,
            k0=self.k0,
            k1=self.k1,
            b1=self.b1,
            b2=self.b2,
            beta=self.beta,
            U=self.U,
            p0=self.p0,
            bc_variant=self.bc,
            theory_damping=self.theory_damping,
        )
        kwargs.update(overrides)
        try:
            return model.BeamConfig(**kwargs)
        except model.BeamConfigError as exc:
            raise ConfigError(str(exc)) from exc

    def initial_condition(self):
        try:
            return model.InitialCondition.from_label(self.ic, self.L)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sweep_grid(self):
        grid = {}
        for axis in analysis.SWEEP_AXES:
            values = getattr(self, f"sweep_{axis}")
            if values:
                grid[axis] = values
        return grid


_TUPLE_KEYS = {
    "p0",
    "outputs",
    "sweep_U",
    "sweep_alpha",
    "sweep_k0",
    "sweep_k1",
    "sweep_b2",
    "sweep_alpha_k1",
    "ucrit_alphas",
    "disp_alphas",
}
_STR_KEYS = {"mode", "label", "bc", "ic"}
_BOOL_KEYS = {"theory_damping"}
_INT_KEYS = {"n_elements", "stride", "jobs", "disp_n"}


def _parse_value(key, raw):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _TUPLE_KEYS:
        if not raw:
            return ()
        items = [s.strip() for s in raw.split(",") if s.strip()]
        if key == "outputs":
            bad = [s for s in items if s not in OUTPUT_KINDS]
            if bad:
                raise ConfigError(f"outputs: unknown kinds {bad} (use {OUTPUT_KINDS})")
            return tuple(items)
        try:
            return tuple(float(s) for s in items)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}") from exc
    try:
        if key in _INT_KEYS:
            return int(raw)
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from exc


def parse_config(text, source="<config>"):
    """Parse the flat key = value format (":" also accepted)."""
    valid = {f.name for f in fields(ScenarioConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" in body:
            key, _, raw = body.partition("=")
        elif ":" in body:
            key, _, raw = body.partition(":")
        else:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key = key.strip()
        if key not in valid:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _parse_value(key, raw)
    sc = ScenarioConfig(**values)
    if sc.mode not in MODES:
        raise ConfigError(f"{source}: unknown mode {sc.mode!r} (use one of {MODES})")
    if sc.mode == "sweep" and not sc.sweep_grid():
        raise ConfigError(f"{source}: sweep mode needs at least one sweep_<axis> key")
    sc.beam_config()  # surfaces invalid parameter combinations early
    sc.initial_condition()
    return sc


def load_config(path):
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def _format_value(key, value):
    if key in _STR_KEYS:
        return value
    if key in _BOOL_KEYS:
        return "true" if value else "false"
    if key in _TUPLE_KEYS:
        return ",".join(str(v) for v in value)
    return repr(value) if isinstance(value, float) else str(value)


def render_config(sc, result_lines=()):
    """Manifest text: every field explicit, plus result comment lines."""
    lines = ["# beamflutter manifest (re-runnable config; all defaults explicit)"]
    for f in fields(ScenarioConfig):
        lines.append(f"{f.name} = {_format_value(f.name, getattr(sc, f.name))}")
    for r in result_lines:
        lines.append(f"# result: {r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# output emission
# ---------------------------------------------------------------------------


def _write(path, text):
    with open(path, "w") as f:
        f.write(text)


def _gnuplot_script(csv_name, columns, logscale, title):
    lines = [
        'set datafile separator ","',
        f'set title "{title}"',
        "set key autotitle columnhead",
        'set xlabel "t"',
    ]
    if logscale:
        lines.append("set logscale y")
    plots = ", ".join(f'"{csv_name}" using 1:{c} with lines' for c in columns)
    lines.append(f"plot {plots}")
    return "\n".join(lines) + "\n"


def _emit_series_csv(path, header, rows):
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for row in rows:
            f.write(",".join(f"{x:.12g}" for x in row) + "\n")


def _run_simulate(sc, outdir):
    cfg = sc.beam_config()
    traj = simulate(
        cfg,
        sc.initial_condition(),
        T=sc.T,
        dt=sc.dt,
        stride=sc.stride or None,
        discretization=sc.n_elements,
        blowup_threshold=sc.blowup_threshold,
    )
    written = []
    base = os.path.join(outdir, sc.label)
    if "trajectory" in sc.outputs:
        path = base + "_trajectory.csv"
        write_trajectory_csv(traj, path)
        _write(
            base + "_trajectory.gp",
            _gnuplot_script(os.path.basename(path), (2, 3), True, sc.label),
        )
        written.append(path)
    if "energies" in sc.outputs:
        path = base + "_energies.csv"
        _emit_series_csv(path, ("t", "E_total", "E_definite"), zip(traj.t, traj.e_total, traj.e_definite))
        _write(base + "_energies.gp", _gnuplot_script(os.path.basename(path), (2, 3), True, sc.label))
        written.append(path)
    if "tip" in sc.outputs:
        path = base + "_tip.csv"
        _emit_series_csv(path, ("t", "w_tip", "v_tip"), zip(traj.t, traj.w_tip, traj.v_tip))
        _write(base + "_tip.gp", _gnuplot_script(os.path.basename(path), (2, 3), False, sc.label))
        written.append(path)
    slope, r2 = analysis.fit_log_energy(traj)
    results = [
        f"completed t = {traj.t[-1]:.12g}",
        f"growth_slope = {slope:.12g}, fit_r2 = {r2:.12g}",
    ]
    if traj.blown_up:
        results.insert(
            0,
            f"blow_up = true, termination_time = {traj.termination_time:.12g}, "
            f"reason = {traj.termination_reason}",
        )
    return written, results


def _run_sweep(sc, outdir):
    result = sweep(
        sc.sweep_grid(),
        sc.beam_config(),
        ic=sc.initial_condition(),
        T=sc.T,
        dt=sc.dt,
        discretization=sc.n_elements,
        stride=sc.stride or None,
        jobs=sc.jobs,
        blowup_threshold=sc.blowup_threshold,
    )
    path = os.path.join(outdir, sc.label + "_sweep.csv")
    result.write_csv(path)
    n_err = sum(1 for row in result.rows if row["verdict"] == "error")
    return [path], [f"cells = {len(result.rows)}, failures = {n_err}"]


def default_ucrit_bracket(alpha):
    """Bracket heuristic covering the studied range of the flutter boundary."""
    if alpha < 5e-4:
        return (110.0, 160.0)
    if alpha < 5e-2:
        return (40.0, 150.0)
    return (10.0, 60.0)


def _run_ucrit(sc, outdir):
    alphas = sc.ucrit_alphas or (sc.alpha,)
    rows = []
    for a in alphas:
        if sc.ucrit_bracket_lo or sc.ucrit_bracket_hi:
            bracket = (sc.ucrit_bracket_lo, sc.ucrit_bracket_hi)
        else:
            bracket = default_ucrit_bracket(a)
        res = find_ucrit(
            a,
            cfg_base=sc.beam_config(alpha=a, b2=0.0),
            bracket=bracket,
            tol=sc.ucrit_tol,
            ic=sc.initial_condition(),
            dt=sc.dt,
            discretization=sc.n_elements,
        )
        rows.append((a, res.value, res.bracket[0], res.bracket[1], res.n_probes))
    path = os.path.join(outdir, sc.label + "_ucrit.csv")
    _emit_series_csv(path, ("alpha", "U_crit", "bracket_lo", "bracket_hi", "n_probes"), rows)
    results = [f"alpha = {a:.12g}: U_crit = {u:.12g} ({int(n)} probes)" for a, u, _, _, n in rows]
    return [path], results


def _run_dispersion(sc, outdir):
    k = np.linspace(0.0, sc.disp_kmax, sc.disp_n)
    header = ["k"] + [f"omega_alpha_{a:g}" for a in sc.disp_alphas]
    cols = [k] + [model.dispersion_omega(k, a) for a in sc.disp_alphas]
    path = os.path.join(outdir, sc.label + "_dispersion.csv")
    _emit_series_csv(path, header, zip(*cols))
    return [path], [f"k grid: {sc.disp_n} points up to {sc.disp_kmax:g}"]


_RUNNERS = {
    "simulate": _run_simulate,
    "sweep": _run_sweep,
    "ucrit": _run_ucrit,
    "dispersion": _run_dispersion,
}


def run(config_path, outdir=None):
    """Execute a config file; returns the list of files written."""
    sc = load_config(config_path)
    outdir = outdir or os.environ.get(ENV_OUTDIR) or "."
    os.makedirs(outdir, exist_ok=True)
    written, results = _RUNNERS[sc.mode](sc, outdir)
    manifest = os.path.join(outdir, sc.label + "_manifest.txt")
    _write(manifest, render_config(sc, results))
    written.append(manifest)
    return written


# ---------------------------------------------------------------------------
# presets: parameter sets of the published figure experiments
# ---------------------------------------------------------------------------

# reference critical velocities quoted in the figure captions
UCRIT_ALPHA0 = 135.97
UCRIT_ALPHA_1E3 = 129.68
UCRIT_ALPHA1 = 22.09

# captions say "varying U" without listing the grid; these factors span onset
U_FACTORS = (0.8, 0.9, 0.95, 1.0, 1.05, 1.1, 1.2)
_LOG_GRID = tuple(float(f"{v:.6g}") for v in np.logspace(-4, 4, 9))
_B2_GRID = (0.1, 1.0, 10.0, 100.0)


def _slug(value):
    return f"{value:g}".replace(".", "p").replace("+", "").replace("-", "m")


def _u_grid(ucrit):
    return tuple(round(f * ucrit, 2) for f in U_FACTORS)


def _runs(name, common, axis_key, values, outputs=("energies",)):
    return [
        ScenarioConfig(
            label=f"{name}_{axis_key}_{_slug(v)}", outputs=outputs, **common, **{axis_key: v}
        )
        for v in values
    ]


def _locked_alpha_k1_runs(name, values, b2, outputs=("energies",)):
    return [
        ScenarioConfig(
            label=f"{name}_ak1_{_slug(v)}",
            outputs=outputs,
            alpha=v,
            k1=v,
            b2=b2,
            U=150.0,
        )
        for v in values
    ]


def preset(name, c=None):
    """Scenario set for one figure experiment (fig0..fig20, naive_bc, dispersion)."""
    if name == "fig0":
        return [
            ScenarioConfig(
                mode="ucrit",
                label="fig0",
                ucrit_alphas=(0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0),
            )
        ]
    if name == "fig1":
        return _runs("fig1", dict(b2=0.0), "U", _u_grid(UCRIT_ALPHA0))
    if name == "fig2":
        return _runs("fig2", dict(b2=1.0), "U", _u_grid(UCRIT_ALPHA0))
    if name == "fig3":
        return _runs("fig3", dict(b2=1.0, U=150.0), "alpha", (0.0, 1e-3, 1e-2, 1e-1, 1.0))
    if name == "fig4":
        return _runs(
            "fig4", dict(b2=1.0, U=150.0), "alpha", (0.0, 1e-3, 1e-2, 1e-1, 1.0), outputs=("tip",)
        )
    if name == "fig5":
        return _runs("fig5", dict(alpha=1e-3, b2=0.0, U=150.0), "k1", (0.5, 1.0, 2.0, 4.0, 8.0))
    if name == "fig6":
        return _runs("fig6", dict(alpha=1e-3, b2=0.0, U=150.0), "k0", (1.0, 2.0, 5.0, 10.0, 20.0))
    if name == "fig7":
        return _locked_alpha_k1_runs("fig7", _LOG_GRID, b2=0.0)
    if name == "fig8":
        return [
            ScenarioConfig(
                mode="sweep",
                label="fig8",
                b2=0.0,
                U=150.0,
                T=20.0,
                blowup_threshold=1e30,
                sweep_alpha_k1=tuple(float(f"{v:.6g}") for v in np.logspace(-4, 4, 33)),
            )
        ]
    if name == "fig9":
        return _locked_alpha_k1_runs("fig9", (1.4, 1.5, 1.6), b2=0.0, outputs=("tip",))
    if name == "fig10":
        return _runs("fig10", dict(b2=0.0, U=150.0), "alpha", _LOG_GRID)
    if name == "fig11":
        return _runs("fig11", dict(U=150.0), "b2", _B2_GRID)
    if name == "fig12":
        return _runs("fig12", dict(alpha=1e-3, U=150.0), "b2", _B2_GRID)
    if name == "fig13":
        return _runs("fig13", dict(alpha=1.0, b2=0.0), "U", _u_grid(UCRIT_ALPHA1))
    if name == "fig14":
        return _runs("fig14", dict(alpha=1.0, b2=1.0), "U", _u_grid(UCRIT_ALPHA1))
    if name == "fig15":
        return _locked_alpha_k1_runs("fig15", _LOG_GRID, b2=1.0)
    if name == "fig16":
        return _runs("fig16", dict(alpha=1e-3, b2=0.0), "U", _u_grid(UCRIT_ALPHA_1E3))
    if name == "fig17":
        return _runs("fig17", dict(alpha=1e-3, b2=1.0), "U", _u_grid(UCRIT_ALPHA_1E3))
    if name == "fig18":
        return _runs("fig18", dict(alpha=1.0, U=50.0), "b2", _B2_GRID)
    if name == "fig19":
        return _runs(
            "fig19", dict(b2=1.0, U=150.0), "k0", (0.0, 1.0, 2.0, 5.0, 10.0), outputs=("tip",)
        )
    if name == "fig20":
        return _runs(
            "fig20",
            dict(alpha=1e-3, b2=1.0, U=150.0),
            "k1",
            (0.0, 0.5, 1.0, 2.0, 4.0),
            outputs=("tip",),
        )
    if name == "naive_bc":
        cs = (12.0, 13.0) if c is None else (float(c),)
        return [
            ScenarioConfig(
                label=f"naive_bc_c{_slug(cv)}",
                bc=model.BC_NAIVE_LINEAR,
                b2=1.0,
                beta=0.0,
                ic=f"linear-iv:{cv:g}",
            )
            for cv in cs
        ]
    if name == "dispersion":
        return [
            ScenarioConfig(
                mode="dispersion",
                label="dispersion",
                disp_alphas=(0.0, 0.01, 0.1, 1.0),
                disp_kmax=20.0,
            )
        ]
    raise ConfigError(f"unknown preset {name!r}")


PRESET_NAMES = tuple(f"fig{i}" for i in range(21)) + ("naive_bc", "dispersion")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits 2; usage errors are 1
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(EXIT_USAGE)


def _build_parser():
    p = _Parser(prog="beamflutter", description=__doc__)
    p.add_argument("--outdir", default=None, help=f"output directory (or ${ENV_OUTDIR})")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run one trajectory from a config file")
    s.add_argument("config")

    s = sub.add_parser("sweep", help="run a parameter sweep from a config file")
    s.add_argument("config")
    s.add_argument("--jobs", type=int, default=None, help="parallel sweep workers")

    s = sub.add_parser("ucrit", help="bisect the critical flow velocity")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--bracket", type=float, nargs=2, metavar=("LO", "HI"))
    s.add_argument("--tol", type=float, default=0.25)
    s.add_argument("--n-elements", type=int, default=20)
    s.add_argument("--dt", type=float, default=1e-4)
    s.add_argument("--label", default="ucrit")

    s = sub.add_parser("preset", help="emit (and optionally run) a figure preset")
    s.add_argument("name", choices=PRESET_NAMES)
    s.add_argument("--emit-only", action="store_true", help="write configs, do not run")
    s.add_argument("--c", type=float, default=None, help="naive_bc velocity slope")
    s.add_argument("--jobs", type=int, default=None)

    s = sub.add_parser("dispersion", help="tabulate the dispersion relation")
    s.add_argument("--alpha", type=float, required=True)
    s.add_argument("--kmax", type=float, required=True)
    s.add_argument("--n", type=int, default=201)
    s.add_argument("--label", default="dispersion")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    outdir = args.outdir or os.environ.get(ENV_OUTDIR) or "."
    try:
        os.makedirs(outdir, exist_ok=True)
        if args.command in ("simulate", "sweep"):
            sc = load_config(args.config)
            if args.command == "sweep" and sc.mode != "sweep":
                raise ConfigError(f"{args.config}: expected mode = sweep, got {sc.mode}")
            if getattr(args, "jobs", None):
                sc = replace(sc, jobs=args.jobs)
            written, results = _RUNNERS[sc.mode](sc, outdir)
            manifest = os.path.join(outdir, sc.label + "_manifest.txt")
            _write(manifest, render_config(sc, results))
            written.append(manifest)
            for path in written:
                print(path)
            return EXIT_OK
        if args.command == "ucrit":
            sc = ScenarioConfig(
                mode="ucrit",
                label=args.label,
                alpha=args.alpha,
                ucrit_alphas=(args.alpha,),
                ucrit_bracket_lo=args.bracket[0] if args.bracket else 0.0,
                ucrit_bracket_hi=args.bracket[1] if args.bracket else 0.0,
                ucrit_tol=args.tol,
                n_elements=args.n_elements,
                dt=args.dt,
            )
            written, results = _run_ucrit(sc, outdir)
            manifest = os.path.join(outdir, sc.label + "_manifest.txt")
            _write(manifest, render_config(sc, results))
            for line in results:
                print(line)
            print(written[0])
            return EXIT_OK
        if args.command == "dispersion":
            sc = ScenarioConfig(
                mode="dispersion",
                label=args.label,
                disp_alphas=(args.alpha,),
                disp_kmax=args.kmax,
                disp_n=args.n,
            )
            written, _ = _run_dispersion(sc, outdir)
            print(written[0])
            return EXIT_OK
        if args.command == "preset":
            scenarios = preset(args.name, c=args.c)
            paths = []
            for sc in scenarios:
                if getattr(args, "jobs", None):
                    sc = replace(sc, jobs=args.jobs)
                cfg_path = os.path.join(outdir, sc.label + ".cfg")
                _write(cfg_path, render_config(sc))
                paths.append(cfg_path)
                if not args.emit_only:
                    paths.extend(run(cfg_path, outdir=outdir))
            for path in paths:
                print(path)
            return EXIT_OK
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"beamflutter: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except integrate.TimestepError as exc:
        print(f"beamflutter: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"beamflutter: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
