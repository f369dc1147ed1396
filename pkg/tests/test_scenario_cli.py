import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import tomli

from qcubesat.cli import main
from qcubesat.errors import OutputError, ScenarioError
from qcubesat.mission import MissionConfig
from qcubesat.results import Column, ResultBundle
from qcubesat.scenario import SCHEMA, default_scenario, parse_scenario, reference_scenario, validate_document

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

SHORT = """
[orbit]
duration_days = 3.0
[pointing]
window_s = 1.0
search_days = 3.0
[quantum]
entangled_s = 0.1
event_csv_max_rows = 50
[deorbit]
altitudes_km = [400.0]
solar_activities = ["High"]
[mission]
months = 1
"""


def _write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def _wrong_type(spec):
    if spec.type is str or spec.choices is not None:
        return 12345
    return "not-a-number"


# --- parsing --------------------------------------------------------------------


def test_reference_round_trip(tmp_path):
    sc = parse_scenario(_write(tmp_path, reference_scenario()))
    assert sc.defaults_applied == ()
    assert sc.values == default_scenario().values
    for section, keys in SCHEMA.items():
        for k, spec in keys.items():
            assert sc[section][k] == spec.default


def test_shipped_reference_matches_generator():
    assert (SCENARIOS / "reference.toml").read_text() == reference_scenario()


@pytest.mark.parametrize("path", sorted(SCENARIOS.glob("*.toml")), ids=lambda p: p.name)
def test_shipped_scenarios_parse(path):
    sc = parse_scenario(path)
    assert isinstance(sc.mission(), MissionConfig)


def test_every_key_has_unit_or_is_dimensionless():
    units = ("_km", "_deg", "_m", "_m2", "_kg", "_s", "_hz", "_urad", "_px", "_e", "_nm", "_ns", "_ps", "_w", "_wh",
             "_bps", "_gb", "_per_s", "_utc", "_per_sqrt_s", "_days", "_years")
    dimensionless = {"version", "name", "solar_activity", "drag_coefficient", "require_eclipse", "source_kind",
                     "optics_efficiency", "roi_mode", "signal_photons_per_frame", "tilt_rejection",
                     "series_decimation", "payload", "mean_photons_signal", "mean_photons_decoy", "signal_fraction",
                     "decoy_fraction", "vacuum_fraction", "heralding_efficiency", "visibility",
                     "detector_efficiency", "misalignment", "event_csv_max_rows", "solar_activities", "months",
                     "weather_clear_probability", "station_count", "contacts_per_day", "depth_of_discharge_limit"}
    for keys in SCHEMA.values():
        for k in keys:
            assert k in dimensionless or k.endswith(units), k


def test_altitude_out_of_range_rejected(tmp_path):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(_write(tmp_path, "[orbit]\naltitude_km = 900.0\n"))
    assert e.value.key == "orbit.altitude_km"
    assert "[300, 500]" in str(e.value)


def test_missing_keys_take_defaults(tmp_path):
    sc = parse_scenario(_write(tmp_path, "[orbit]\naltitude_km = 420.0\n"))
    assert sc["orbit"]["altitude_km"] == 420.0
    assert "orbit.altitude_km" not in sc.defaults_applied
    assert "orbit.inclination_deg" in sc.defaults_applied
    assert sc["orbit"]["inclination_deg"] == 51.6


@pytest.mark.parametrize(
    "text, key",
    [
        ("[orbit]\naltitude = 400.0\n", "orbit.altitude"),
        ("[telemetry]\nrate = 1\n", "telemetry"),
        ("[quantum]\nsignal_fraction = 0.9\n", "quantum.signal_fraction"),
        ("[quantum]\nmean_photons_decoy = 0.7\n", "quantum.mean_photons_decoy"),
        ("[station]\nmin_track_elevation_deg = 40.0\n", "station.min_track_elevation_deg"),
        ("[orbit]\nstart_utc = \"yesterday\"\n", "orbit.start_utc"),
        ("[link]\nsource_kind = \"GaussianWaist\"\nsource_diameter_m = 0.2\n", "link"),
        ("[orbit]\naltitude_km = nan\n", "orbit.altitude_km"),
        ("[mission]\nmonths = true\n", "mission.months"),
    ],
)
def test_invalid_documents_name_the_key(tmp_path, text, key):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(_write(tmp_path, text))
    assert e.value.key == key
    assert key in str(e.value)


def test_malformed_toml(tmp_path):
    with pytest.raises(ScenarioError) as e:
        parse_scenario(_write(tmp_path, "[orbit\naltitude_km = 1"))
    assert e.value.key is None
    with pytest.raises(ScenarioError):
        parse_scenario(tmp_path / "missing.toml")


def test_every_single_key_corruption_is_rejected():
    doc = tomli.loads(reference_scenario())
    for section, keys in SCHEMA.items():
        for k, spec in keys.items():
            bad = {s: dict(v) for s, v in doc.items()}
            bad[section][k] = _wrong_type(spec)
            with pytest.raises(ScenarioError) as e:
                validate_document(bad)
            assert e.value.key == f"{section}.{k}"


# --- result bundles -------------------------------------------------------------


def test_empty_table_is_header_only(tmp_path):
    b = ResultBundle(tmp_path / "out")
    path = b.write_table("t.csv", [Column("a"), Column("b", ".3f")], [])
    assert path.read_text() == "a,b\n"


def test_fixed_float_formatting(tmp_path):
    b = ResultBundle(tmp_path)
    path = b.write_table("t.csv", [Column("x", ".3f"), Column("flag"), Column("gap")], [(1 / 3, True, None),
                                                                                        (float("nan"), False, "s")])
    assert path.read_text() == "x,flag,gap\n0.333,1,\nnan,0,s\n"


def test_row_width_checked(tmp_path):
    with pytest.raises(ValueError):
        ResultBundle(tmp_path).write_table("t.csv", [Column("a")], [(1, 2)])


def test_unwritable_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OutputError):
        ResultBundle(blocker / "sub")


# --- command line ---------------------------------------------------------------


@pytest.fixture(scope="module")
def short_scenario(tmp_path_factory):
    return _write(tmp_path_factory.mktemp("scn"), SHORT)


def test_passes_csv_schema(short_scenario, tmp_path, capsys):
    assert main(["passes", "--scenario", str(short_scenario), "--out", str(tmp_path)]) == 0
    with open(tmp_path / "passes.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert rows
    assert list(rows[0]) == ["rise_utc", "culmination_utc", "set_utc", "rise_s", "set_s", "duration_s",
                             "max_elevation_deg", "eclipse_throughout"]
    for r in rows:
        assert float(r["rise_s"]) < float(r["set_s"])
        assert float(r["max_elevation_deg"]) >= 30.0
        assert r["eclipse_throughout"] == "1"
    assert "passes:" in capsys.readouterr().out


def test_manifest_written_last_with_defaults(short_scenario, tmp_path):
    assert main(["linkbudget", "--scenario", str(short_scenario), "--out", str(tmp_path), "--seed", "5"]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["command"] == "linkbudget" and m["seed"] == 5
    assert "orbit.inclination_deg" in m["defaults_applied"]
    assert "orbit.duration_days" not in m["defaults_applied"]
    assert set(m["files"]) == {"linkbudget.csv", "summary.txt"}
    assert len(m["inputs_sha256"]) == 64


@pytest.mark.parametrize("command", ["pointing", "qkd", "deorbit", "mission"])
def test_subcommands_succeed(short_scenario, tmp_path, command):
    assert main([command, "--scenario", str(short_scenario), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "manifest.json").exists()


def test_config_error_exit_code(tmp_path, capsys):
    bad = _write(tmp_path, "[orbit]\naltitude_km = 900.0\n")
    assert main(["deorbit", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "orbit.altitude_km" in capsys.readouterr().err
    assert main(["deorbit", "--scenario", str(bad), "--out", str(tmp_path / "o"), "--seed", "-1"]) == 2


def test_runtime_error_exit_code(short_scenario, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["deorbit", "--scenario", str(short_scenario), "--out", str(blocker / "o")]) == 3


def test_lock_loss_exit_code(tmp_path):
    text = SHORT.replace("[pointing]", "[pointing]\ncoarse_sigma_urad = 90000.0")
    sc = _write(tmp_path, text)
    assert main(["qkd", "--scenario", str(sc), "--out", str(tmp_path / "o")]) == 3


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as e:
        main(["passes"])
    assert e.value.code == 2


def test_reference_command(tmp_path):
    out = tmp_path / "ref.toml"
    assert main(["reference", "--out", str(out)]) == 0
    assert out.read_text() == reference_scenario()


def test_console_script_runs(short_scenario, tmp_path):
    r = subprocess.run(
        [sys.executable, "-m", "qcubesat.cli", "deorbit", "--scenario", str(short_scenario), "--out", str(tmp_path)],
        capture_output=True,
        text=True,
    )
    assert r.returncode == 0, r.stderr
    assert "400 km High" in r.stdout


def test_same_seed_same_bytes(short_scenario, tmp_path):
    for d in ("a", "b"):
        assert main(["qkd", "--scenario", str(short_scenario), "--out", str(tmp_path / d), "--seed", "3"]) == 0
    for f in (tmp_path / "a").iterdir():
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes(), f.name
