import json
import re
from pathlib import Path

import jsonschema
import pytest

from spiralbw import cli, io
from spiralbw.config import PRESETS, preset_text

BROKEN = sorted((Path(__file__).parent / "data" / "broken").glob("*.toml"))

PRESET_COMMAND = {
    "fig2-gaussian": "spectrum",
    "fig2-twisted": "spectrum",
    "fig3-multiplex": "multiplex",
    "fig3-decay": "decay",
    "fig4-highl": "tomography",
    "eq2-highl": "chsh",
    "psi-2-0": "tomography",
    "psi-1-2": "tomography",
    "witness-5d": "witness",
}


def run(*argv):
    return cli.main([str(a) for a in argv])


def outputs(directory: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def small_config(tmp_path, preset, **run_keys):
    """Preset text with extra [run] keys, written to a file."""
    text = preset_text(preset)
    for k in run_keys:
        text = re.sub(rf"(?m)^{k} = .*\n", "", text)
    extra = "".join(f"{k} = {json.dumps(v)}\n" for k, v in run_keys.items())
    if "[run]" in text:
        text = text.replace("[run]\n", "[run]\n" + extra, 1)
    else:
        text += "\n[run]\n" + extra
    path = tmp_path / f"{preset}.toml"
    path.write_text(text)
    return path


def test_every_preset_has_a_command():
    assert set(PRESETS) == set(PRESET_COMMAND)


@pytest.mark.parametrize("preset", PRESETS)
def test_presets_run_and_validate(preset, tmp_path, capsys):
    command = PRESET_COMMAND[preset]
    assert run(command, "--preset", preset, "--out", tmp_path) == 0
    report = json.loads((tmp_path / f"{command}.json").read_text())
    jsonschema.validate(report, io.load_schema(command))
    assert capsys.readouterr().out.strip()


@pytest.mark.parametrize("path", BROKEN, ids=lambda p: p.stem)
def test_broken_configs_exit_2_with_line(path, tmp_path, capsys):
    expected = int(re.search(r"expect-line: (\d+)", path.read_text()).group(1))
    assert run("spectrum", "--config", path, "--out", tmp_path) == 2
    err = capsys.readouterr().err
    assert err.startswith("config error: ")
    assert f"line {expected}:" in err
    assert not any(tmp_path.iterdir()), "nothing may be written before validation passes"


def test_unknown_preset_exit_2(tmp_path, capsys):
    assert run("tomography", "--preset", "nope", "--out", tmp_path) == 2
    assert "unknown preset" in capsys.readouterr().err


def test_missing_config_file_exit_2(tmp_path):
    assert run("chsh", "--config", tmp_path / "absent.toml") == 2


def test_command_mismatch_exit_2(tmp_path, capsys):
    assert run("chsh", "--preset", "witness-5d", "--out", tmp_path) == 2
    assert "'witness'" in capsys.readouterr().err


@pytest.mark.parametrize("flag, value", [("--seed", -1), ("--threads", 0)])
def test_bad_overrides_exit_2(flag, value, tmp_path):
    assert run("chsh", "--preset", "eq2-highl", "--out", tmp_path, flag, value) == 2


def test_argparse_requires_a_source():
    with pytest.raises(SystemExit) as exc:
        run("chsh")
    assert exc.value.code == 2


def test_numeric_failure_exit_3(tmp_path, capsys):
    # a valid config whose retrieval probability is zero leaves nothing to fit
    cfg = tmp_path / "dark.toml"
    cfg.write_text('command = "decay"\n[decay]\nprobability = 0.0\n')
    assert run("decay", "--config", cfg, "--out", tmp_path / "o", "--infinite-counts") == 3
    assert capsys.readouterr().err.startswith("numeric error: ")


def test_chsh_infinite_is_tsirelson(tmp_path):
    cfg = tmp_path / "ideal.toml"
    cfg.write_text('command = "chsh"\n[run]\nstate = "eq2-highl"\n')
    assert run("chsh", "--config", cfg, "--out", tmp_path, "--infinite-counts") == 0
    report = json.loads((tmp_path / "chsh.json").read_text())
    assert abs(report["S"] - 2 * 2**0.5) < 1e-9
    assert report["sigma"] == 0.0


def test_witness_preset_certifies_five(tmp_path):
    assert run("witness", "--preset", "witness-5d", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "witness.json").read_text())
    assert report["W"] == pytest.approx(30.0, abs=1e-9)
    assert report["certified_dimension"] == 5


def test_decay_noiseless_recovers_tau(tmp_path):
    assert run("decay", "--preset", "fig3-decay", "--out", tmp_path, "--infinite-counts") == 0
    report = json.loads((tmp_path / "decay.json").read_text())
    assert report["tau_ns"] == pytest.approx(1655.0, rel=0.01)


def test_spectrum_twisted_is_broader(tmp_path):
    assert run("spectrum", "--preset", "fig2-twisted", "--out", tmp_path) == 0
    report = json.loads((tmp_path / "spectrum.json").read_text())
    assert report["fit"]["w"] > report["baseline_w"]
    assert report["width_ratio"] == pytest.approx(report["fit"]["w"] / report["baseline_w"])


def test_spectrum_csv_layout(tmp_path):
    assert run("spectrum", "--preset", "fig2-gaussian", "--out", tmp_path) == 0
    lines = (tmp_path / "spectrum.csv").read_text().splitlines()
    assert lines[0] == "l,weight"
    assert len(lines) == 1 + 101


def test_multiplex_table(tmp_path):
    assert run("multiplex", "--preset", "fig3-multiplex", "--out", tmp_path) == 0
    rows = [ln.split(",") for ln in (tmp_path / "multiplex.csv").read_text().splitlines()]
    assert rows[0] == ["delta_l", "c_same", "c_diff", "contrast"]
    contrasts = [float(r[3]) for r in rows[1:]]
    assert contrasts[0] == 0.0
    assert all(b > a for a, b in zip(contrasts[1:], contrasts[2:]))


def test_tomography_high_counts_reaches_unit_fidelity(tmp_path):
    cfg = small_config(tmp_path, "psi-2-0", replicas=4)
    cfg.write_text(cfg.read_text().replace("background_rate = 0.0101", "background_rate = 0.0").replace(
        "signal_rate_scale = 0.148", "signal_rate_scale = 1000.0"))
    assert run("tomography", "--config", cfg, "--out", tmp_path / "o") == 0
    report = json.loads((tmp_path / "o" / "tomography.json").read_text())
    assert report["fidelity"] >= 0.99
    rho = io.read_density(tmp_path / "o" / "tomography_rho.txt")
    assert rho.is_physical()


@pytest.mark.parametrize(
    "preset, command, extra",
    [
        ("psi-2-0", "tomography", {"replicas": 12}),
        ("eq2-highl", "chsh", {}),
        ("witness-5d", "witness", {}),
        ("fig3-decay", "decay", {}),
        ("fig2-twisted", "spectrum", {}),
    ],
)
def test_outputs_bitwise_identical_across_runs_and_threads(preset, command, extra, tmp_path):
    cfg = small_config(tmp_path, preset, **extra)
    dirs = []
    for i, threads in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        assert run(command, "--config", cfg, "--out", out, "--threads", threads) == 0
        dirs.append(outputs(out))
    assert dirs[0] == dirs[1] == dirs[2]


def test_chsh_infinite_with_background_stays_below_tsirelson(tmp_path):
    assert run("chsh", "--preset", "eq2-highl", "--out", tmp_path, "--infinite-counts") == 0
    report = json.loads((tmp_path / "chsh.json").read_text())
    assert 2.0 < report["S"] < 2 * 2**0.5 - 0.1


def test_seed_override_changes_sampled_output(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("chsh", "--preset", "eq2-highl", "--out", a, "--seed", 1) == 0
    assert run("chsh", "--preset", "eq2-highl", "--out", b, "--seed", 2) == 0
    assert outputs(a) != outputs(b)


def test_prefix_names_outputs(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text('command = "witness"\n[output]\nprefix = "five"\n')
    assert run("witness", "--config", cfg, "--out", tmp_path / "o") == 0
    assert (tmp_path / "o" / "five.json").exists()
