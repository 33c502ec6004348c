"""Config parsing, manifests, presets, CLI subcommands and exit codes."""

import os

import numpy as np
import pytest

import beamflutter as bf
from beamflutter.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_USAGE,
    ConfigError,
    ScenarioConfig,
    load_config,
    main,
    parse_config,
    preset,
    render_config,
    run,
)


def test_parse_minimal_config_fills_defaults():
    sc = parse_config("U: 150\nb2: 1")
    assert sc.U == 150.0 and sc.b2 == 1.0
    assert sc.D == 1.0 and sc.L == 1.0 and sc.beta == 1.0
    assert sc.n_elements == 20 and sc.dt == 1e-4 and sc.T == 20.0
    assert sc.ic == "equilibrium" and sc.p0 == ()
    assert sc.mode == "simulate"


def test_parse_comments_equals_form_and_errors():
    sc = parse_config("# a comment\nU = 10  # inline\n\nk0 = 0.5\n")
    assert sc.U == 10.0 and sc.k0 == 0.5
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("wibble = 3")
    with pytest.raises(ConfigError, match="expected 'key = value'"):
        parse_config("just some words")
    with pytest.raises(ConfigError, match="cannot parse"):
        parse_config("U = fast")
    with pytest.raises(ConfigError, match="boolean"):
        parse_config("theory_damping = maybe")
    with pytest.raises(ConfigError):
        parse_config("mode = dance")
    with pytest.raises(ConfigError):
        parse_config("b2 = -1")  # invalid beam parameter surfaces at parse
    with pytest.raises(ConfigError):
        parse_config("mode = sweep")  # sweep without axes
    with pytest.raises(ConfigError):
        parse_config("outputs = trajectory,holograms")


def test_manifest_roundtrip_identity():
    sc = parse_config("U = 150\nb2 = 1\nic = linear-iv:13\np0 = 0.5,0,1\nT = 3.5")
    text = render_config(sc)
    assert parse_config(text) == sc
    # result comments are ignored by the parser
    assert parse_config(render_config(sc, ["blow_up = true"])) == sc


def test_run_writes_outputs_and_manifest(tmp_path):
    cfg_path = tmp_path / "short.cfg"
    cfg_path.write_text("label = short\nU = 150\nb2 = 1\nT = 0.2\noutputs = trajectory,energies,tip\n")
    written = run(cfg_path, outdir=tmp_path)
    names = {os.path.basename(p) for p in written}
    assert names == {
        "short_trajectory.csv",
        "short_energies.csv",
        "short_tip.csv",
        "short_manifest.txt",
    }
    assert (tmp_path / "short_trajectory.gp").exists()
    manifest = (tmp_path / "short_manifest.txt").read_text()
    assert "U = 150.0" in manifest and "# result: completed t = 0.2" in manifest


def test_run_byte_identical_reproduction(tmp_path):
    cfg_path = tmp_path / "a.cfg"
    cfg_path.write_text("label = a\nU = 150\nb2 = 1\nT = 0.2\n")
    run(cfg_path, outdir=tmp_path / "out1")
    # re-running the manifest reproduces the trajectory byte for byte
    manifest = tmp_path / "out1" / "a_manifest.txt"
    run(manifest, outdir=tmp_path / "out2")
    csv1 = (tmp_path / "out1" / "a_trajectory.csv").read_bytes()
    csv2 = (tmp_path / "out2" / "a_trajectory.csv").read_bytes()
    assert csv1 == csv2
    m2 = (tmp_path / "out2" / "a_manifest.txt").read_bytes()
    assert m2 == manifest.read_bytes()


def test_default_sample_count(tmp_path):
    # the default protocol decimates to about 2000 rows regardless of dt
    cfg_path = tmp_path / "full.cfg"
    cfg_path.write_text("label = full\nU = 150\nb2 = 1\n")
    run(cfg_path, outdir=tmp_path)
    rows = (tmp_path / "full_trajectory.csv").read_text().strip().splitlines()
    assert abs(len(rows) - 1 - 2000) <= 1


def test_preset_fig2_matches_caption():
    scs = preset("fig2")
    assert all(s.b2 == 1.0 and s.alpha == 0.0 and s.k0 == 0.0 and s.k1 == 0.0 for s in scs)
    us = [s.U for s in scs]
    assert len(us) == 7 and min(us) < 135.97 < max(us)
    assert all(s.T == 20.0 and s.n_elements == 20 and s.dt == 1e-4 for s in scs)
    assert all(s.ic == "equilibrium" for s in scs)


def test_preset_fig14_matches_caption():
    scs = preset("fig14")
    assert all(s.alpha == 1.0 and s.b2 == 1.0 and s.k0 == 0.0 and s.k1 == 0.0 for s in scs)
    us = [s.U for s in scs]
    assert min(us) < 22.09 < max(us)


def test_preset_fig11_matches_caption():
    scs = preset("fig11")
    assert all(s.U == 150.0 and s.alpha == 0.0 and s.k1 == 0.0 for s in scs)
    assert [s.b2 for s in scs] == [0.1, 1.0, 10.0, 100.0]


def test_preset_fig0_is_ucrit_sweep():
    (sc,) = preset("fig0")
    assert sc.mode == "ucrit"
    assert sc.ucrit_alphas == (0.0, 1e-4, 1e-3, 1e-2, 1e-1, 1.0)


def test_preset_fig8_is_locked_sweep():
    (sc,) = preset("fig8")
    assert sc.mode == "sweep"
    assert len(sc.sweep_alpha_k1) == 33
    assert sc.T == 20.0 and sc.b2 == 0.0 and sc.U == 150.0


def test_preset_naive_bc():
    scs = preset("naive_bc")
    assert [s.ic for s in scs] == ["linear-iv:12", "linear-iv:13"]
    assert all(s.bc == bf.BC_NAIVE_LINEAR and s.beta == 0.0 and s.b2 == 1.0 for s in scs)
    (only,) = preset("naive_bc", c=13)
    assert only.ic == "linear-iv:13"


def test_preset_unknown_name():
    with pytest.raises(ConfigError):
        preset("fig99")


def test_preset_configs_all_parse():
    for name in ("fig1", "fig5", "fig7", "fig9", "fig13", "fig18", "fig19", "fig20", "dispersion"):
        for sc in preset(name):
            assert parse_config(render_config(sc)) == sc


def test_cli_emit_only_preset(tmp_path):
    code = main(["--outdir", str(tmp_path), "preset", "fig2", "--emit-only"])
    assert code == EXIT_OK
    cfgs = sorted(p.name for p in tmp_path.glob("fig2_*.cfg"))
    assert len(cfgs) == 7
    sc = load_config(tmp_path / cfgs[0])
    assert sc.b2 == 1.0


@pytest.mark.slow
def test_cli_naive_bc_c13_records_growth(tmp_path):
    code = main(["--outdir", str(tmp_path), "preset", "naive_bc", "--c", "13"])
    assert code == EXIT_OK
    manifest = (tmp_path / "naive_bc_c13_manifest.txt").read_text()
    slope_line = [l for l in manifest.splitlines() if "growth_slope" in l][0]
    slope = float(slope_line.split("growth_slope =")[1].split(",")[0])
    assert slope > 0.0


def test_cli_dispersion(tmp_path):
    code = main(
        ["--outdir", str(tmp_path), "dispersion", "--alpha", "1.0", "--kmax", "2.0", "--n", "5"]
    )
    assert code == EXIT_OK
    lines = (tmp_path / "dispersion_dispersion.csv").read_text().strip().splitlines()
    assert lines[0] == "k,omega_alpha_1"
    ks = np.array([float(l.split(",")[0]) for l in lines[1:]])
    oms = np.array([float(l.split(",")[1]) for l in lines[1:]])
    assert np.allclose(oms, bf.dispersion_omega(ks, 1.0))


@pytest.mark.slow
def test_cli_ucrit_coarse(tmp_path):
    code = main(
        [
            "--outdir",
            str(tmp_path),
            "ucrit",
            "--alpha",
            "0",
            "--bracket",
            "100",
            "170",
            "--tol",
            "4",
            "--n-elements",
            "8",
            "--dt",
            "2e-4",
        ]
    )
    assert code == EXIT_OK
    lines = (tmp_path / "ucrit_ucrit.csv").read_text().strip().splitlines()
    assert lines[0] == "alpha,U_crit,bracket_lo,bracket_hi,n_probes"
    alpha, ucrit, lo, hi, probes = (float(x) for x in lines[1].split(","))
    assert lo < ucrit < hi and probes <= 12


def test_cli_exit_codes(tmp_path):
    # usage: bad flags / unknown subcommand exit 1 via SystemExit
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["ucrit"])  # missing required --alpha
    assert exc.value.code == EXIT_USAGE
    # config errors exit 2
    assert main(["--outdir", str(tmp_path), "simulate", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    bad = tmp_path / "bad.cfg"
    bad.write_text("U = -5\n")
    assert main(["--outdir", str(tmp_path), "simulate", str(bad)]) == EXIT_CONFIG
    not_sweep = tmp_path / "notsweep.cfg"
    not_sweep.write_text("U = 10\nT = 0.1\n")
    assert main(["--outdir", str(tmp_path), "sweep", str(not_sweep)]) == EXIT_CONFIG


def test_blowup_is_a_valid_result(tmp_path):
    cfg_path = tmp_path / "boom.cfg"
    cfg_path.write_text("label = boom\nU = 150\nb2 = 0\nT = 30\n")
    code = main(["--outdir", str(tmp_path), "simulate", str(cfg_path)])
    assert code == EXIT_OK
    manifest = (tmp_path / "boom_manifest.txt").read_text()
    assert "blow_up = true" in manifest


def test_env_outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("BEAMFLUTTER_OUTDIR", str(tmp_path))
    cfg_path = tmp_path / "envy.cfg"
    cfg_path.write_text("label = envy\nT = 0.1\n")
    assert main(["simulate", str(cfg_path)]) == EXIT_OK
    assert (tmp_path / "envy_manifest.txt").exists()


def test_scenario_beam_config_bridge():
    sc = ScenarioConfig(U=5.0, alpha=0.1, theory_damping=True, p0=(1.0, 2.0))
    cfg = sc.beam_config()
    assert cfg.U == 5.0 and cfg.alpha == 0.1 and cfg.theory_damping
    assert cfg.p0 == (1.0, 2.0)
    assert sc.initial_condition().label == "equilibrium"
