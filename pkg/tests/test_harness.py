import json
import math

import numpy as np
import pytest

from ergodic_mi.harness.cli import main, resolve_threads
from ergodic_mi.harness.config import ConfigError, ExperimentConfig, db_to_linear, load_config
from ergodic_mi.harness.experiments import (
    block_length_ladder,
    rmt_l_grid,
    run_convergence,
    run_dos_histogram,
    run_experiment,
    run_high_snr,
    run_rmt_compare,
    run_sweep,
)
from ergodic_mi.harness.rows import (
    CSV_HEADER,
    ResultRow,
    format_estimator,
    parse_estimator,
    read_csv,
    rows_to_csv,
)
from ergodic_mi.rmt import mp_closed_form

ZERO_MODEL = {"variant": "iid-gaussian", "R": 2, "T": 2, "variance": 0.0}


def make_config(**overrides):
    data = {"experiment": "sweep", "model": {"variant": "iid-gaussian", "R": 2, "T": 2},
            "snr_grid_db": [6.0], "n_steps": 400, "burn_in": 50, "replications": 2, "seed": 1}
    data.update(overrides)
    return ExperimentConfig.from_dict(data)


def by_name(rows, name):
    return [r for r in rows if r.base_estimator == name]


# -- configuration ------------------------------------------------------------


@pytest.mark.parametrize("overrides, path", [
    ({"bogus": 1}, "bogus"),
    ({"experiment": "plot"}, "experiment"),
    ({"snr_grid_db": []}, "snr_grid_db"),
    ({"snr_grid_db": [0.0, "x"]}, "snr_grid_db[1]"),
    ({"n_steps": 50}, "n_steps"),
    ({"burn_in": -1}, "burn_in"),
    ({"replications": 0}, "replications"),
    ({"units": "bans"}, "units"),
    ({"spec_version": "7"}, "spec_version"),
    ({"model": {"variant": "iid-gaussian", "colour": 1}}, "model.colour"),
    ({"model": {"variant": "ar1-multipath", "alpha": 1.5}}, "model.alpha"),
])
def test_config_errors_name_the_field(overrides, path):
    with pytest.raises(ConfigError) as info:
        make_config(**overrides)
    assert info.value.path == path


def test_config_requires_experiment():
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict({"model": {}})
    assert info.value.path == "experiment"


def test_config_file_round_trip(tmp_path):
    config = make_config(snr_grid_db=[0.0, 10.0], output="x.csv")
    path = tmp_path / "c.json"
    path.write_text(json.dumps(config.to_dict()))
    assert load_config(path) == config
    assert config.rho_grid == pytest.approx([1.0, 10.0])


def test_config_invalid_json(tmp_path):
    path = tmp_path / "c.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(path)


def test_db_conversion():
    assert db_to_linear(0.0) == 1.0
    assert db_to_linear(6.0) == pytest.approx(3.981071705534973)


# -- rows and CSV -------------------------------------------------------------


def test_row_invariants():
    with pytest.raises(ValueError):
        ResultRow("sweep", 0.0, "recursive", math.nan, 0.0, 1, 0)
    with pytest.raises(ValueError):
        ResultRow("sweep", 0.0, "recursive", 1.0, -1.0, 1, 0)


def test_estimator_tags_round_trip():
    text = format_estimator("ring", L=4, M=63)
    assert text == "ring@L=4;M=63"
    assert parse_estimator(text) == ("ring", {"L": "4", "M": "63"})
    assert parse_estimator("recursive") == ("recursive", {})


def test_csv_format_and_round_trip(tmp_path):
    rows = [ResultRow("sweep", 6.0, "recursive", 1.0 / 3.0, 0.001, 1800, 0),
            ResultRow("dos-histogram", math.nan, "dos_mass@lo=0;hi=1", 0.25, 0.0, 8, -1,
                      information=False)]
    text = rows_to_csv(rows)
    lines = text.split("\n")
    assert lines[0] == ",".join(CSV_HEADER)
    assert "\r" not in text and text.endswith("\n")
    assert lines[1] == "sweep,6,recursive,0.333333333333,0.001,1800,0,0"
    back = read_csv(text)
    assert back[0].value == pytest.approx(1 / 3, rel=1e-12)
    assert back[1].information is False
    path = tmp_path / "r.csv"
    path.write_text(text)
    assert rows_to_csv(read_csv(str(path))) == text


def test_bits_only_touch_information_rows():
    rows = [ResultRow("sweep", 0.0, "recursive", math.log(2.0), math.log(2.0), 1, 0),
            ResultRow("dos-histogram", math.nan, "dos_mass", 0.5, 0.0, 1, -1, information=False)]
    back = read_csv(rows_to_csv(rows, units="bits"))
    assert back[0].value == pytest.approx(1.0, rel=1e-12)
    assert back[0].std_error == pytest.approx(1.0, rel=1e-12)
    assert back[1].value == 0.5


# -- sweep ----------------------------------------------------------------------


def test_sweep_zero_channel_single_row():
    rows = run_sweep(make_config(model=ZERO_MODEL, replications=1))
    assert len(rows) == 1
    assert rows[0].value == 0.0 and rows[0].estimator == "recursive"


def test_sweep_layout():
    config = make_config(snr_grid_db=[0.0, 6.0], replications=3, naive_block_length=20)
    rows = run_sweep(config)
    assert len(rows) == 2 * 3 * 2
    assert [(r.snr_db, r.replication) for r in rows[::2]] == [
        (0.0, 0), (0.0, 1), (0.0, 2), (6.0, 0), (6.0, 1), (6.0, 2)]
    assert {r.estimator for r in rows} == {"recursive", "naive@n=20"}
    assert all(r.wall_time_ms == 0.0 for r in rows)


@pytest.mark.parametrize("experiment, extra", [
    ("sweep", {"naive_block_length": 16}),
    ("convergence", {"naive_block_length": 16}),
    ("high-snr", {"model": {"variant": "ar1-multipath", "L": 2, "R": 2, "T": 1, "f_d": 0.05}}),
    ("rmt-compare", {"model": {"variant": "ar1-multipath", "L": 4, "profile": "wyner"},
                     "naive_block_length": 9}),
    ("dos-histogram", {"naive_block_length": 16}),
])
def test_output_identical_across_thread_counts(experiment, extra):
    config = make_config(experiment=experiment, replications=4, snr_grid_db=[0.0, 10.0], **extra)
    serial = rows_to_csv(run_experiment(config, threads=1))
    parallel = rows_to_csv(run_experiment(config, threads=4))
    assert serial == parallel
    assert serial == rows_to_csv(run_experiment(config, threads=3))


def test_sweep_recursive_matches_naive_on_multipath():
    # R = T = 2, L = 3, f_d = 0.05 at 6 dB
    config = make_config(model={"variant": "ar1-multipath", "R": 2, "T": 2, "L": 3, "f_d": 0.05},
                         n_steps=3000, burn_in=200, replications=12, naive_block_length=150, seed=3)
    rows = run_sweep(config, threads=4)
    rec = np.array([r.value for r in by_name(rows, "recursive")])
    naive = np.array([r.value for r in by_name(rows, "naive")])
    se = math.hypot(rec.std(ddof=1) / math.sqrt(rec.size), naive.std(ddof=1) / math.sqrt(naive.size))
    assert abs(rec.mean() - naive.mean()) <= 3 * se


# -- convergence ----------------------------------------------------------------


def test_block_length_ladder():
    assert block_length_ladder(64) == [2, 4, 8, 16, 32, 64]
    assert block_length_ladder(3) == [1, 2, 3]


def test_convergence_dispersion_shrinks():
    config = make_config(experiment="convergence", replications=40, naive_block_length=128,
                         n_steps=2000, burn_in=100, seed=11)
    rows = run_convergence(config, threads=4)
    ladder = block_length_ladder(128)
    iqr = []
    for n in ladder:
        vals = [r.value for r in rows if r.estimator == f"naive@n={n}"]
        assert len(vals) == 40
        q1, q3 = np.percentile(vals, [25, 75])
        iqr.append(q3 - q1)
    inversions = sum(b > a for a, b in zip(iqr, iqr[1:]))
    assert inversions <= 1


def test_convergence_reference_reproducible():
    config = make_config(experiment="convergence", naive_block_length=8)
    a = by_name(run_convergence(config), "reference")
    b = by_name(run_convergence(config), "reference")
    assert len(a) == 1 and a == b


def test_convergence_zero_channel():
    config = make_config(experiment="convergence", model=ZERO_MODEL, naive_block_length=8)
    assert all(r.value == 0.0 for r in run_convergence(config))


def test_convergence_needs_block_length():
    with pytest.raises(ConfigError):
        run_convergence(make_config(experiment="convergence"))


# -- high SNR -------------------------------------------------------------------


def test_high_snr_rejects_square_model():
    config = make_config(experiment="high-snr")
    with pytest.raises(ConfigError) as info:
        run_high_snr(config)
    assert info.value.path == "model"


def test_high_snr_gap_shrinks():
    config = make_config(experiment="high-snr", snr_grid_db=[20.0, 30.0, 40.0], n_steps=3000,
                         burn_in=200, replications=2,
                         model={"variant": "ar1-multipath", "R": 3, "T": 2, "L": 3, "f_d": 0.05})
    rows = run_high_snr(config, threads=2)
    assert len(by_name(rows, "kappa")) == 2
    assert all(math.isinf(r.snr_db) for r in by_name(rows, "kappa"))
    gaps = {db: np.mean([abs(r.value) for r in by_name(rows, "gap") if r.snr_db == db])
            for db in (20.0, 30.0, 40.0)}
    assert gaps[20.0] > gaps[30.0] > gaps[40.0]
    name, tags = parse_estimator(by_name(rows, "gap")[0].estimator)
    assert tags == {"fd": "0.05", "KR": "0"}


def test_high_snr_rice_factor_sweep():
    kappas = {}
    for kr in (0.0, 10.0, 100.0):
        config = make_config(experiment="high-snr", snr_grid_db=[30.0], n_steps=800, burn_in=100,
                             replications=1,
                             model={"variant": "rician-ar1", "R": 2, "T": 1, "L": 2,
                                    "f_d": 0.05, "rice_factor": kr})
        row = by_name(run_high_snr(config), "kappa")[0]
        assert parse_estimator(row.estimator)[1]["KR"] == format(kr, ".12g")
        kappas[kr] = row.value
    assert all(math.isfinite(v) for v in kappas.values())


# -- RMT comparison -------------------------------------------------------------


def test_rmt_l_grid():
    assert rmt_l_grid(63) == [1, 2, 4, 8, 16, 32, 63]
    assert rmt_l_grid(8) == [1, 2, 4, 8]


def test_rmt_compare_flat_profile():
    config = make_config(experiment="rmt-compare", replications=1, n_steps=3000, burn_in=200,
                         model={"variant": "ar1-multipath", "L": 63, "alpha": 0.0,
                                "profile": "flat"})
    rows = run_rmt_compare(config)
    rec = [r for r in by_name(rows, "recursive") if r.estimator == "recursive@L=63"][0]
    closed = mp_closed_form(db_to_linear(6.0))
    assert abs(rec.value - closed) / closed <= 0.03
    values = {r.value for r in by_name(rows, "mp_closed_form")}
    assert values == {closed}


def test_rmt_compare_wyner_norm():
    config = make_config(experiment="rmt-compare", replications=1, n_steps=300,
                         model={"variant": "ar1-multipath", "L": 8, "profile": "wyner"},
                         naive_block_length=5)
    rows = run_rmt_compare(config)
    norms = by_name(rows, "profile_norm")
    assert len(norms) == 4
    assert all(r.value == 1.0 for r in read_csv(rows_to_csv(norms)))
    assert len(by_name(rows, "ring")) == 4


def test_rmt_compare_rejects_explicit_profile():
    config = make_config(experiment="rmt-compare",
                         model={"variant": "ar1-multipath", "L": 1, "profile": [1.0, 1.0]})
    with pytest.raises(ConfigError):
        run_rmt_compare(config)


# -- density of states ----------------------------------------------------------


def test_dos_mass_sums_to_one():
    config = make_config(experiment="dos-histogram", naive_block_length=32, replications=3)
    rows = run_dos_histogram(config)
    mass = sum(r.value for r in by_name(rows, "dos_mass"))
    assert mass == pytest.approx(1.0, abs=1e-12)


def test_dos_square_iid_matches_marchenko_pastur():
    # n N = 1024 eigenvalues from one realization
    config = make_config(experiment="dos-histogram", replications=1, naive_block_length=256,
                         model={"variant": "iid-gaussian", "R": 4, "T": 4})
    rows = run_dos_histogram(config)
    assert by_name(rows, "eigen_count")[0].value == 1024
    assert by_name(rows, "mp_cdf_gap")[0].value <= 0.05
    assert len(by_name(rows, "mp_density")) == len(by_name(rows, "dos_mass"))


def test_dos_zero_channel_single_bin():
    config = make_config(experiment="dos-histogram", model=ZERO_MODEL, naive_block_length=4)
    bins = by_name(run_dos_histogram(config), "dos_mass")
    assert len(bins) == 1
    assert bins[0].value == 1.0
    assert parse_estimator(bins[0].estimator)[1] == {"lo": "0", "hi": "0"}


# -- command line ---------------------------------------------------------------


def write_config(tmp_path, **overrides):
    data = make_config(**overrides).to_dict()
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return path


def test_cli_writes_csv(tmp_path):
    path = write_config(tmp_path)
    out = tmp_path / "out.csv"
    assert main(["sweep", "--config", str(path), "--out", str(out)]) == 0
    rows = read_csv(str(out))
    assert len(rows) == 2


def test_cli_stdout_and_units(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["sweep", "--config", str(path)]) == 0
    nats = read_csv(capsys.readouterr().out)
    assert main(["sweep", "--config", str(path), "--units", "bits"]) == 0
    bits = read_csv(capsys.readouterr().out)
    assert bits[0].value == pytest.approx(nats[0].value / math.log(2), rel=1e-10)


def test_cli_seed_override(tmp_path, capsys):
    path = write_config(tmp_path)
    main(["sweep", "--config", str(path), "--seed", "1"])
    a = capsys.readouterr().out
    main(["sweep", "--config", str(path), "--seed", "2"])
    b = capsys.readouterr().out
    main(["sweep", "--config", str(path)])
    assert capsys.readouterr().out == a != b


def test_cli_rejects_mismatched_experiment(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["convergence", "--config", str(path)]) == 2
    assert "experiment" in capsys.readouterr().err


def test_cli_reports_invalid_config(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "sweep", "n_steps": "many"}))
    assert main(["sweep", "--config", str(path)]) == 2
    assert "n_steps" in capsys.readouterr().err


def test_thread_environment_override():
    assert resolve_threads(2, {}) == 2
    assert resolve_threads(2, {"ERGODIC_MI_THREADS": "5"}) == 5
    with pytest.raises(ConfigError):
        resolve_threads(2, {"ERGODIC_MI_THREADS": "lots"})
    with pytest.raises(ConfigError):
        resolve_threads(0, {})


def test_cli_timing_flag(tmp_path, capsys):
    path = write_config(tmp_path)
    assert main(["sweep", "--config", str(path), "--timing"]) == 0
    rows = read_csv(capsys.readouterr().out)
    assert all(r.wall_time_ms > 0 for r in rows)
