"""Config parsing with line-anchored errors, runners, byte-stable outputs."""

from __future__ import annotations

import json
import shutil
import subprocess
import sys
from pathlib import Path

import pytest

from tamedsde.cli import KINDS, ConfigError, load_config, main, run

from conftest import SEED

REPO = Path(__file__).resolve().parent.parent


def write_config(tmp_path: Path, payload, name: str = "exp.json") -> str:
    path = tmp_path / name
    if isinstance(payload, str):
        path.write_text(payload)
    else:
        path.write_text(json.dumps(payload, indent=2) + "\n")
    return str(path)


def line_of(path: str, needle: str) -> int:
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if needle in line:
            return lineno
    raise AssertionError(f"{needle!r} not found in {path}")


def converge_payload(**overrides):
    payload = {
        "kind": "converge",
        "model": "ginzburg-landau-unstable",
        "schemes": ["semi-tamed-milstein", "semi-tamed-euler"],
        "stepsizes": [0.25, 0.125, 0.0625],
        "paths": 600,
        "seed": SEED,
    }
    payload.update(overrides)
    return payload


# ------------------------------------------------------------------
# load_config
# ------------------------------------------------------------------

def test_load_converge_config(tmp_path):
    path = write_config(tmp_path, converge_payload(reference_steps=128))
    cfg = load_config(path)
    assert cfg.kind == "converge"
    assert cfg.model == "ginzburg-landau-unstable"
    assert cfg.schemes == ["semi-tamed-milstein", "semi-tamed-euler"]
    assert cfg.stepsizes == [0.25, 0.125, 0.0625]
    assert cfg.paths == 600
    assert cfg.seed == SEED
    assert cfg.reference_steps == 128
    assert cfg.reference_scheme == "semi-tamed-milstein"
    assert cfg.output_dir is None
    assert cfg.gnuplot is False


def test_stepsize_range_descending(tmp_path):
    path = write_config(tmp_path, converge_payload(stepsizes="2^-2..2^-4"))
    cfg = load_config(path)
    assert cfg.stepsizes == [0.25, 0.125, 0.0625]


def test_stepsize_range_ascending(tmp_path):
    path = write_config(tmp_path, converge_payload(stepsizes="2^-4 .. 2^-2"))
    cfg = load_config(path)
    assert cfg.stepsizes == [0.0625, 0.125, 0.25]


def test_bad_range_string(tmp_path):
    path = write_config(tmp_path, converge_payload(stepsizes="h/2..h/8"))
    with pytest.raises(ConfigError, match="cannot parse stepsize range"):
        load_config(path)


def test_invalid_json_reports_line(tmp_path):
    path = write_config(tmp_path, '{\n  "kind": "check",\n  model: 3\n}\n')
    with pytest.raises(ConfigError, match=rf"{path}:3: invalid JSON"):
        load_config(path)


def test_non_object_document(tmp_path):
    path = write_config(tmp_path, "[1, 2, 3]\n")
    with pytest.raises(ConfigError, match="must be a JSON object"):
        load_config(path)


def test_missing_kind(tmp_path):
    path = write_config(tmp_path, {"model": "ginzburg-landau-stable"})
    with pytest.raises(ConfigError, match='missing required key "kind"'):
        load_config(path)


def test_unknown_kind_lists_valid(tmp_path):
    path = write_config(tmp_path, {"kind": "frobnicate"})
    with pytest.raises(ConfigError) as err:
        load_config(path)
    for kind in KINDS:
        assert kind in str(err.value)


def test_unknown_key_is_line_anchored(tmp_path):
    path = write_config(tmp_path, converge_payload(bogus=3))
    lineno = line_of(path, '"bogus"')
    with pytest.raises(ConfigError, match=rf"{path}:{lineno}: unknown key 'bogus'"):
        load_config(path)


def test_missing_required_key(tmp_path):
    payload = converge_payload()
    del payload["paths"]
    path = write_config(tmp_path, payload)
    with pytest.raises(ConfigError, match="requires key 'paths'"):
        load_config(path)


def test_unknown_model_lists_names(tmp_path):
    path = write_config(tmp_path, converge_payload(model="heston"))
    with pytest.raises(ConfigError, match="ginzburg-landau-stable"):
        load_config(path)


def test_unknown_scheme_rejected(tmp_path):
    path = write_config(tmp_path, converge_payload(schemes=["runge-kutta"]))
    lineno = line_of(path, '"schemes"')
    with pytest.raises(ConfigError, match=rf"{path}:{lineno}.*unknown scheme"):
        load_config(path)


def test_boolean_is_not_a_number(tmp_path):
    path = write_config(tmp_path, converge_payload(paths=True))
    with pytest.raises(ConfigError, match="paths must be a number"):
        load_config(path)


def test_fractional_paths_rejected(tmp_path):
    path = write_config(tmp_path, converge_payload(paths=10.5))
    with pytest.raises(ConfigError, match="paths must be an integer"):
        load_config(path)


def test_negative_stepsize_rejected(tmp_path):
    path = write_config(tmp_path, converge_payload(stepsizes=[0.25, -0.125]))
    with pytest.raises(ConfigError, match="positive reals"):
        load_config(path)


def test_empty_stepsizes_rejected(tmp_path):
    path = write_config(tmp_path, converge_payload(stepsizes=[]))
    with pytest.raises(ConfigError, match="nonempty"):
        load_config(path)


def test_param_block_unknown_key_anchored(tmp_path):
    payload = {
        "kind": "threshold",
        "stability_params": {
            "rho": 2.0,
            "theta": 1.0,
            "lip_K": 2.0,
            "beta": 2.0,
            "v": 1.0,
            "v_bar": 1.0,
            "alpha": 5.0,
            "m": 1,
            "zeta": 9.0,
        },
    }
    path = write_config(tmp_path, payload)
    lineno = line_of(path, '"zeta"')
    with pytest.raises(ConfigError, match=rf"{path}:{lineno}.*'zeta'"):
        load_config(path)


def test_param_block_missing_keys(tmp_path):
    payload = {"kind": "threshold", "stability_params": {"rho": 2.0}}
    path = write_config(tmp_path, payload)
    with pytest.raises(ConfigError, match="missing keys: alpha, beta"):
        load_config(path)


def test_param_block_invalid_values(tmp_path):
    payload = {
        "kind": "threshold",
        "stability_params": {
            "rho": -1.0,
            "theta": 1.0,
            "lip_K": 2.0,
            "beta": 2.0,
            "v": 1.0,
            "v_bar": 1.0,
            "alpha": 5.0,
            "m": 1,
        },
    }
    path = write_config(tmp_path, payload)
    with pytest.raises(ConfigError, match="invalid stability_params.*rho"):
        load_config(path)


def test_sample_bounds_ordering(tmp_path):
    payload = {
        "kind": "check",
        "model": "ginzburg-landau-stable",
        "sample_low": 1.0,
        "sample_high": -1.0,
    }
    path = write_config(tmp_path, payload)
    with pytest.raises(ConfigError, match="sample_high must exceed sample_low"):
        load_config(path)


def test_gnuplot_must_be_boolean(tmp_path):
    path = write_config(tmp_path, converge_payload(gnuplot="yes"))
    with pytest.raises(ConfigError, match="gnuplot must be a boolean"):
        load_config(path)


def test_shipped_configs_parse():
    configs = sorted((REPO / "configs").glob("*.json"))
    assert configs
    for config in configs:
        cfg = load_config(str(config))
        assert cfg.kind in KINDS


# ------------------------------------------------------------------
# run(): converge
# ------------------------------------------------------------------

def test_converge_outputs(tmp_path):
    path = write_config(
        tmp_path,
        converge_payload(
            reference_steps=128,
            output_dir=str(tmp_path / "out"),
            gnuplot=True,
        ),
    )
    written = run(load_config(path))
    names = [Path(p).name for p in written]
    assert names == ["convergence.csv", "fit.txt", "convergence.gp"]

    csv_lines = (tmp_path / "out" / "convergence.csv").read_text().splitlines()
    assert csv_lines[0] == "scheme,h,rms_error,stderr,excluded_paths"
    assert len(csv_lines) == 1 + 2 * 3
    first = csv_lines[1].split(",")
    assert first[0] == "semi-tamed-milstein"
    assert first[1] == "0.25"
    assert float(first[2]) > 0
    assert float(first[3]) > 0
    assert first[4] == "0"
    # scheme blocks follow config order; stepsizes descend within a block
    assert [row.split(",")[0] for row in csv_lines[1:]] == (
        ["semi-tamed-milstein"] * 3 + ["semi-tamed-euler"] * 3
    )
    assert [row.split(",")[1] for row in csv_lines[1:4]] == ["0.25", "0.125", "0.0625"]

    fit_lines = (tmp_path / "out" / "fit.txt").read_text().splitlines()
    assert fit_lines[0].startswith("# least-squares fit")
    assert fit_lines[1].startswith("scheme=semi-tamed-milstein C=")
    assert " r=" in fit_lines[1] and " residual=" in fit_lines[1]

    gp = (tmp_path / "out" / "convergence.gp").read_text()
    assert "set logscale xy" in gp
    assert "convergence.csv" in gp


def test_converge_byte_determinism_across_threads(tmp_path):
    base = converge_payload(reference_steps=128)
    path1 = write_config(tmp_path, {**base, "output_dir": str(tmp_path / "a")}, "a.json")
    path2 = write_config(tmp_path, {**base, "output_dir": str(tmp_path / "b")}, "b.json")
    assert main(["converge", "--config", path1]) == 0
    assert main(["converge", "--config", path2, "--threads", "4"]) == 0
    for name in ("convergence.csv", "fit.txt"):
        a = (tmp_path / "a" / name).read_bytes()
        b = (tmp_path / "b" / name).read_bytes()
        assert a == b, name


def test_converge_seed_changes_output(tmp_path):
    base = converge_payload(reference_steps=128, stepsizes=[0.25, 0.125], paths=64)
    path = write_config(tmp_path, {**base, "output_dir": str(tmp_path / "a")})
    assert main(["converge", "--config", path]) == 0
    assert main(["converge", "--config", path, "--out", str(tmp_path / "b"), "--seed", "7"]) == 0
    a = (tmp_path / "a" / "convergence.csv").read_bytes()
    b = (tmp_path / "b" / "convergence.csv").read_bytes()
    assert a != b


def test_converge_rejects_nonnested_reference(tmp_path):
    path = write_config(
        tmp_path,
        converge_payload(reference_steps=100, output_dir=str(tmp_path / "out")),
    )
    with pytest.raises(ConfigError, match="nest"):
        run(load_config(path))


def test_converge_rejects_nondividing_stepsize(tmp_path):
    path = write_config(
        tmp_path,
        converge_payload(stepsizes=[0.3], output_dir=str(tmp_path / "out")),
    )
    with pytest.raises(ConfigError, match="divide"):
        run(load_config(path))


# ------------------------------------------------------------------
# run(): stability
# ------------------------------------------------------------------

def test_stability_outputs(tmp_path):
    payload = {
        "kind": "stability",
        "model": "ginzburg-landau-stable",
        "schemes": ["semi-tamed-euler"],
        "stepsizes": [0.25],
        "paths": 64,
        "seed": SEED,
        "output_dir": str(tmp_path / "out"),
        "gnuplot": True,
    }
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    assert [Path(p).name for p in written] == ["stability.csv", "stability.gp"]
    lines = (tmp_path / "out" / "stability.csv").read_text().splitlines()
    assert lines[0] == "scheme,h,t,mean_square,blown_up_count"
    assert len(lines) == 1 + 21  # T=5 at h=1/4
    first = lines[1].split(",")
    assert first == ["semi-tamed-euler", "0.25", "0.0", "1.0", "0"]
    last = lines[-1].split(",")
    assert last[2] == "5.0"
    assert float(last[3]) < 1e-3
    assert last[4] == "0"


def test_stability_truncates_after_total_loss(tmp_path):
    # all EM paths eventually blow up on the doubled-horizon unstable model
    # at a long horizon; rows must stop at the last surviving gridpoint
    payload = {
        "kind": "stability",
        "model": "ginzburg-landau-unstable",
        "schemes": ["em"],
        "stepsizes": [0.25],
        "paths": 16,
        "seed": SEED,
        "horizon": 64.0,
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    run(load_config(path))
    lines = (tmp_path / "out" / "stability.csv").read_text().splitlines()
    assert 1 < len(lines) < 1 + 257  # header + fewer than all 257 gridpoints
    for row in lines[1:]:
        cells = row.split(",")
        # inf is legitimate here (alive paths whose square overflows);
        # nan must never reach a numeric column
        assert cells[3] != "nan"
        float(cells[3])


# ------------------------------------------------------------------
# run(): simulate
# ------------------------------------------------------------------

def test_simulate_outputs(tmp_path):
    payload = {
        "kind": "simulate",
        "model": "ginzburg-landau-stable",
        "schemes": ["semi-tamed-milstein"],
        "stepsizes": [0.25],
        "paths": 2,
        "seed": SEED,
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    assert [Path(p).name for p in written] == [
        "trajectory_semi-tamed-milstein_h0.25_p0.csv",
        "trajectory_semi-tamed-milstein_h0.25_p1.csv",
    ]
    lines = Path(written[0]).read_text().splitlines()
    assert lines[0] == "t,x_1"
    assert len(lines) == 1 + 21
    assert lines[1].split(",") == ["0.0", "1.0"]
    times = [float(row.split(",")[0]) for row in lines[1:]]
    assert times == pytest.approx([0.25 * k for k in range(21)])


def test_simulate_truncates_blown_path(tmp_path, capsys):
    payload = {
        "kind": "simulate",
        "model": "ginzburg-landau-unstable",
        "schemes": ["em"],
        "stepsizes": [0.25],
        "paths": 1,
        "seed": SEED,
        "horizon": 2.0,
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    assert len(written) == 1
    lines = Path(written[0]).read_text().splitlines()
    # path 0 at this seed overflows before the final gridpoint
    assert len(lines) < 1 + 9
    for row in lines[1:]:
        for cell in row.split(","):
            assert cell not in ("nan", "inf", "-inf")
    err = capsys.readouterr().err
    assert "blew up" in err


# ------------------------------------------------------------------
# run(): threshold and check
# ------------------------------------------------------------------

def threshold_payload(**overrides):
    payload = {
        "kind": "threshold",
        "stability_params": {
            "rho": 2.0,
            "theta": 1.4142135623730951,
            "lip_K": 2.0,
            "beta": 2.0,
            "v": 1.0,
            "v_bar": 1.0,
            "alpha": 5.0,
            "m": 1,
        },
        "stepsizes": [0.0625, 0.25],
    }
    payload.update(overrides)
    return payload


def test_threshold_output(tmp_path):
    path = write_config(tmp_path, threshold_payload(output_dir=str(tmp_path / "out")))
    written = run(load_config(path))
    lines = Path(written[0]).read_text().splitlines()
    assert lines[0] == "h1=0.25"
    assert lines[1] == "h2=0.6666666666666665"
    assert lines[2] == "h_star=0.25"
    assert lines[3] == "# gamma_h per requested stepsize"
    assert lines[4] == "h=0.0625 gamma_h=1.8124999999999996"
    assert lines[5] == "h=0.25 gamma_h=n/a (outside (0, h_star))"


def test_threshold_without_stepsizes(tmp_path):
    payload = threshold_payload(output_dir=str(tmp_path / "out"))
    del payload["stepsizes"]
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    lines = Path(written[0]).read_text().splitlines()
    assert len(lines) == 3


def test_threshold_infinite_branches(tmp_path):
    payload = threshold_payload(output_dir=str(tmp_path / "out"))
    payload["stability_params"].update(lip_K=0.0, beta=0.0)
    del payload["stepsizes"]
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    lines = Path(written[0]).read_text().splitlines()
    # K = 0 keeps only the second h1 branch; beta = 0 blanks h2
    assert lines[0] == "h1=2.0"
    assert lines[1] == "h2=inf"
    assert lines[2] == "h_star=2.0"


def test_check_output_stable(tmp_path):
    payload = {
        "kind": "check",
        "model": "ginzburg-landau-stable",
        "gamma": 2.0,
        "sample_low": -3.0,
        "sample_high": 3.0,
        "sample_count": 101,
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    text = Path(written[0]).read_text()
    assert "model=ginzburg-landau-stable" in text
    assert "samples=101 over [-3.0, 3.0]" in text
    assert "commutativity: passed=True max_violation=0.0" in text
    assert "dissipativity: passed=True gamma=2.0" in text


def test_check_output_unstable_fails_dissipativity(tmp_path):
    payload = {
        "kind": "check",
        "model": "ginzburg-landau-unstable",
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    written = run(load_config(path))
    text = Path(written[0]).read_text()
    assert "commutativity: passed=True" in text
    assert "dissipativity: passed=False" in text


# ------------------------------------------------------------------
# main(): exit codes and overrides
# ------------------------------------------------------------------

def test_main_success_prints_written_files(tmp_path, capsys):
    path = write_config(tmp_path, threshold_payload(output_dir=str(tmp_path / "out")))
    assert main(["threshold", "--config", path]) == 0
    out = capsys.readouterr().out
    assert str(tmp_path / "out" / "threshold.txt") in out


def test_main_config_error_is_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, converge_payload(model="heston"))
    assert main(["converge", "--config", path]) == 2
    assert "error:" in capsys.readouterr().err


def test_main_kind_mismatch_is_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, threshold_payload(output_dir=str(tmp_path / "out")))
    assert main(["check", "--config", path]) == 2
    assert "does not match" in capsys.readouterr().err


def test_main_missing_output_dir_is_exit_2(tmp_path, capsys):
    path = write_config(tmp_path, threshold_payload())
    assert main(["threshold", "--config", path]) == 2
    assert "no output directory" in capsys.readouterr().err


def test_main_unreadable_config_is_exit_2(tmp_path, capsys):
    assert main(["check", "--config", str(tmp_path / "missing.json")]) == 2
    assert "cannot read config" in capsys.readouterr().err


def test_main_runtime_failure_is_exit_3(tmp_path, capsys):
    blocker = tmp_path / "blocker"
    blocker.write_text("not a directory\n")
    path = write_config(tmp_path, threshold_payload(output_dir=str(blocker / "out")))
    assert main(["threshold", "--config", path]) == 3
    assert "error:" in capsys.readouterr().err


def test_main_rejects_bad_overrides(tmp_path, capsys):
    path = write_config(tmp_path, threshold_payload(output_dir=str(tmp_path / "out")))
    assert main(["threshold", "--config", path, "--seed", "-1"]) == 2
    assert main(["threshold", "--config", path, "--paths", "0"]) == 2
    assert main(["threshold", "--config", path, "--threads", "0"]) == 2
    capsys.readouterr()


def test_main_paths_override(tmp_path, capsys):
    payload = {
        "kind": "simulate",
        "model": "ginzburg-landau-stable",
        "schemes": ["semi-tamed-euler"],
        "stepsizes": [0.25],
        "paths": 1,
        "seed": SEED,
        "output_dir": str(tmp_path / "out"),
    }
    path = write_config(tmp_path, payload)
    assert main(["simulate", "--config", path, "--paths", "3"]) == 0
    out_lines = capsys.readouterr().out.splitlines()
    assert len(out_lines) == 3


def test_main_list_models(capsys):
    assert main(["list-models"]) == 0
    out = capsys.readouterr().out
    assert "ginzburg-landau-stable  (d=1, m=1, T=5.0)" in out
    assert "ginzburg-landau-unstable  (d=1, m=1, T=1.0)" in out


def test_console_script_and_module_entry(tmp_path):
    exe = shutil.which("tamedsde")
    assert exe is not None, "console script not on PATH"
    proc = subprocess.run([exe, "list-models"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "ginzburg-landau-unstable" in proc.stdout
    module = subprocess.run(
        [sys.executable, "-m", "tamedsde.cli", "list-models"],
        capture_output=True,
        text=True,
    )
    assert module.returncode == 0
    assert module.stdout == proc.stdout
