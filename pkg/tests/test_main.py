import json

import numpy as np
import pytest

from exceptions.exceptions import OutputWriteException
from main import EXIT_CONFIG, EXIT_FAILURE, EXIT_IO, EXIT_NUMERIC, EXIT_OK, exit_code, main
from schemas.config import parse_config
from services.report_generator import ReportGenerator
from services.runner import MANIFEST_NAME, run
from services.serialization import file_checksum, read_correlation_csv

GEOMETRY = """
[geometry]
wavelength = 780e-9
dist_reference = 0.910
dist_object = 0.910
"""

HBT = GEOMETRY + """
[run]
seed = 99

[source]
shape = "rectangle"
width = 0.36e-3
height = 0.16e-3
emitter_pitch = 0.02e-3

[scan]
origin_x = -1.5e-3
pitch = 0.25e-3
nx = 13

[hbt]
ensemble_size = 300
"""

ANALYTIC = GEOMETRY + """
[analytic]
source_extent = 0.36e-3
delta_limit = true

[mask]
diameter = 2e-3
separation = 5e-3
origin_x = -4.0e-3
origin_y = -1.2e-3
pitch = 0.2e-3
nx = 41
ny = 13
"""


@pytest.fixture
def write_config(tmp_path):
    def write(text, name="run.toml"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write


def _outputs(directory):
    return sorted(p.name for p in directory.iterdir())


def test_analytic_command_writes_images_and_manifest(tmp_path, write_config):
    out = tmp_path / "analytic"
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(out)]) == EXIT_OK

    names = _outputs(out)
    for stem in ("analytic_boson", "analytic_fermion", "analytic_classical", "delta_limit_fermion"):
        assert {f"{stem}.csv", f"{stem}.pgm", f"{stem}.json"} <= set(names)
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest["command"] == "analytic"
    assert set(manifest["checksums"]) == set(names) - {MANIFEST_NAME}
    assert manifest["checksums"]["analytic_fermion.csv"] == file_checksum(out / "analytic_fermion.csv")

    fermion = read_correlation_csv(out / "analytic_fermion.csv")
    classical = read_correlation_csv(out / "analytic_classical.csv")
    assert np.all(fermion.values <= classical.values + 1e-15)


def test_report_is_written_on_request(tmp_path, write_config):
    out = tmp_path / "report"
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(out), "--report"]) == EXIT_OK
    assert (out / "report.pdf").read_bytes().startswith(b"%PDF")
    assert "report.pdf" in json.loads((out / MANIFEST_NAME).read_text())["checksums"]


def test_hbt_outputs_do_not_depend_on_the_worker_count(tmp_path, write_config):
    config = str(write_config(HBT))
    for workers in ("1", "8"):
        assert main(["hbt-scan", "--config", config, "--workers", workers,
                     "--out", str(tmp_path / f"w{workers}")]) == EXIT_OK

    for name in ("hbt_boson.csv", "hbt_fermion.csv", "hbt_classical.csv"):
        assert (tmp_path / "w1" / name).read_bytes() == (tmp_path / "w8" / name).read_bytes()
    manifest = json.loads((tmp_path / "w8" / MANIFEST_NAME).read_text())
    assert manifest["workers"] == 8
    assert manifest["seed"] == 99


def test_seed_override_changes_the_ensemble(tmp_path, write_config):
    config = str(write_config(HBT))
    main(["hbt-scan", "--config", config, "--workers", "1", "--out", str(tmp_path / "a")])
    main(["hbt-scan", "--config", config, "--workers", "1", "--seed", "5", "--out", str(tmp_path / "b")])
    first = read_correlation_csv(tmp_path / "a" / "hbt_boson.csv")
    second = read_correlation_csv(tmp_path / "b" / "hbt_boson.csv")
    assert second.seed == 5
    assert not np.array_equal(first.values, second.values)


def test_fit_and_section_read_previous_outputs(tmp_path, write_config):
    out = tmp_path / "analytic"
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(out)]) == EXIT_OK

    fit = write_config(f'[fit]\ninput = "{out / "analytic_fermion.csv"}"\nmodel = "gaussian_dips"\n'
                       'n_components = 2\n', "fit.toml")
    assert main(["fit", "--config", str(fit), "--out", str(tmp_path / "fit")]) == EXIT_OK
    summary = json.loads((tmp_path / "fit" / "fit_summary.json").read_text())
    assert summary["model"] == "gaussian_dips"
    assert summary["converged"]
    assert summary["separation_m"] == pytest.approx(5e-3, abs=0.3e-3)

    section = write_config(f'[section]\ninput = "{out / "analytic_fermion.csv"}"\nsamples = 41\n', "section.toml")
    assert main(["section", "--config", str(section), "--out", str(tmp_path / "section")]) == EXIT_OK
    assert {"section_x.csv", "section_y.csv", "section_diagonal.csv",
            "section_summary.json"} <= set(_outputs(tmp_path / "section"))


def test_invalid_configuration_exits_with_code_2(tmp_path, write_config):
    bad = write_config(ANALYTIC.replace("wavelength = 780e-9", "wavelength = -1.0"))
    assert main(["analytic", "--config", str(bad), "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["analytic", "--config", str(tmp_path / "missing.toml")]) == EXIT_CONFIG
    assert not (tmp_path / "x").exists()


def test_bad_worker_environment_exits_with_code_2(tmp_path, write_config, monkeypatch):
    monkeypatch.setenv("GHOSTSIM_WORKERS", "many")
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(tmp_path / "x")]) == EXIT_CONFIG


def test_section_off_the_grid_exits_with_code_3(tmp_path, write_config):
    out = tmp_path / "analytic"
    main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(out)])
    section = write_config(f'[section]\ninput = "{out / "analytic_fermion.csv"}"\n'
                           'start_x = 0.0\nstart_y = 0.0\nend_x = 0.05\nend_y = 0.0\n', "section.toml")
    assert main(["section", "--config", str(section), "--out", str(tmp_path / "section")]) == EXIT_NUMERIC
    assert _outputs(tmp_path / "section") == []


def test_unwritable_output_exits_with_code_4(tmp_path, write_config):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(blocker / "out")]) == EXIT_IO


def test_failed_sidecar_leaves_no_image_behind(tmp_path, write_config):
    out = tmp_path / "analytic"
    (out / "analytic_fermion.json").mkdir(parents=True)
    assert main(["analytic", "--config", str(write_config(ANALYTIC)), "--out", str(out)]) == EXIT_IO
    assert _outputs(out) == ["analytic_fermion.json"]
    assert (out / "analytic_fermion.json").is_dir()


def test_missing_input_exits_with_code_4(tmp_path, write_config):
    fit = write_config(f'[fit]\ninput = "{tmp_path / "absent.csv"}"\nmodel = "sinc2_dip"\n', "fit.toml")
    assert main(["fit", "--config", str(fit), "--out", str(tmp_path / "fit")]) == EXIT_IO


def test_unexpected_errors_map_to_code_1():
    assert exit_code(RuntimeError("boom")) == EXIT_FAILURE


class BrokenReportGenerator(ReportGenerator):
    def generate(self, manifest, summary, path):
        raise OutputWriteException(str(path), "disk full")


def test_failed_runs_remove_their_outputs(tmp_path):
    config = parse_config(ANALYTIC, command="analytic", overrides={"output_dir": str(tmp_path / "out"),
                                                                    "report": True})
    with pytest.raises(OutputWriteException):
        run(config, BrokenReportGenerator())
    assert _outputs(tmp_path / "out") == []
