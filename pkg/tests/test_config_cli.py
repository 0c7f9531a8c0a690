"""Config parsing diagnostics and end-to-end command-line behaviour."""

import json

import pytest

from clockmux.cli import main
from clockmux.config import (
    ConfigError,
    ExperimentConfig,
    parse_config,
    parse_config_text,
)
from clockmux.presets import STUDY_SETS
from clockmux.traces import read_trace_set

FULL_CONFIG = """\
# whole-experiment example
[sets]
use = 2 5

[set]
base_hz = 10e6
f1 = 10e6
f2 = 10e6
f3 = 10e6
f4 = 10e6
duty = 0.4
phase2 = 0.25
label = degenerate probe

[run]
seed = 7
out_dir = results

[simulate]
n_base_cycles = 4000
n_encryptions = 50
error_threshold_factor = 0.3

[traces]
n_traces = 64
oversampling = 8
noise_sigma = 1.5
amplitude = 2.0
key = 000102030405060708090a0b0c0d0e0f

[attack]
step = 16
round = 10
no_sync = yes
threshold_k = 2.5
expected_peaks = 9
window_halfwidth = 6

[fft]
bin_hz = 5e5
"""


def test_parse_full_document():
    cfg = parse_config_text(FULL_CONFIG)
    assert len(cfg.sets) == 3
    assert cfg.sets[0] == STUDY_SETS[1].fs
    assert cfg.sets[1] == STUDY_SETS[4].fs
    probe = cfg.sets[2]
    assert probe.label == "degenerate probe"
    assert probe.duty_cycle == 0.4
    assert probe.phases == (0.0, 0.25, 0.0, 0.0)
    assert cfg.seed == 7 and cfg.out_dir == "results"
    assert cfg.n_base_cycles == 4000 and cfg.n_encryptions == 50
    assert cfg.error_threshold_factor == 0.3
    assert cfg.n_traces == 64 and cfg.oversampling == 8
    assert cfg.noise_sigma == 1.5 and cfg.amplitude == 2.0
    assert cfg.key == bytes(range(16))
    assert cfg.step == 16 and cfg.no_sync and cfg.threshold_k == 2.5
    assert cfg.expected_peaks == 9 and cfg.window_halfwidth == 6
    assert cfg.fft_bin_hz == 5e5
    params = cfg.filter_params()
    assert params.expected_peaks == 9 and params.threshold_k == 2.5


def test_use_all_selects_every_study_set():
    cfg = parse_config_text("[sets]\nuse = all\n")
    assert [fs for fs in cfg.sets] == [e.fs for e in STUDY_SETS]


def test_dual_core_config():
    text = """\
[traces]
core_count = 2
key = 00112233445566778899aabbccddeeff
key2 = ffeeddccbbaa99887766554433221100
[set]
base_hz = 10e6
f1 = 9.5e6
f2 = 9.0e6
f3 = 6.2e6
f4 = 4.0e6
[set2]
base_hz = 10.7e6
f1 = 10.2e6
f2 = 9.6e6
f3 = 6.6e6
f4 = 4.3e6
"""
    cfg = parse_config_text(text)
    assert cfg.core_count == 2
    assert cfg.key2 == bytes.fromhex("ffeeddccbbaa99887766554433221100")
    assert cfg.fs2.base_hz == 10.7e6


BAD_DOCUMENTS = [
    ("[orbit]\n", "line 1: unknown section [orbit]"),
    ("[traces]\nwarp = 9\n", "line 2: [traces] unknown key 'warp'"),
    ("[run]\nseed = 1\nseed = 2\n", "line 3: [run] duplicate key 'seed'"),
    ("[run]\nseed = 1\n[run]\nseed = 2\n", "line 3: duplicate section [run]"),
    ("seed = 1\n", "line 1: key outside any [section]"),
    ("[run]\nseed\n", "line 2: expected 'key = value'"),
    ("[run]\nseed = three\n", "line 2: [run] seed: expected an integer"),
    ("[traces]\nnoise_sigma = loud\n", "expected a number"),
    ("[attack]\nno_sync = maybe\n", "expected true/false"),
    ("[traces]\nkey = zz\n", "expected 32 hex digits"),
    ("[traces]\nkey = aabb\n", "expected 16 bytes, got 2"),
    ("[set]\nf1 = 1e6\n", "base_hz: required"),
    ("[set]\nbase_hz = 1e7\nf1 = 1e6\nf2 = 1e6\nf4 = 1e6\n", "f3: required"),
    ("[sets]\nuse = 1 nine\n", "expected set numbers or 'all'"),
    ("[sets]\nuse = 0\n", "out of range 1..7"),
    ("[sets]\nuse = 8\n", "out of range 1..7"),
    ("[traces]\ncore_count = 3\n", "must be 1 or 2"),
    ("[traces]\nn_traces = 0\n", "must be at least 1"),
    ("[traces]\noversampling = 0\n", "must be at least 1"),
    ("[traces]\nnoise_sigma = -1\n", "must not be negative"),
    ("[simulate]\nn_base_cycles = 0\n", "must be at least 1"),
    ("[attack]\nstep = 0\n", "must be at least 1"),
    ("[attack]\nround = 11\n", "between 1 and 10"),
    ("[fft]\nbin_hz = 0\n", "must be positive"),
    ("[set]\nbase_hz = 1e7\nf1 = -1\nf2 = 1e6\nf3 = 1e6\nf4 = 1e6\n", "[set]"),
    ("[traces]\ncore_count = 2\nkey2 = " + "ab" * 16 + "\n", "requires a [set2] section"),
    ("[traces]\ncore_count = 2\n[set2]\nbase_hz = 1e7\nf1 = 1e6\nf2 = 1e6\n"
     "f3 = 1e6\nf4 = 1e6\n", "requires key2"),
]


@pytest.mark.parametrize("text,fragment", BAD_DOCUMENTS,
                         ids=[frag[:40] for _, frag in BAD_DOCUMENTS])
def test_parse_rejects_bad_documents(text, fragment):
    with pytest.raises(ConfigError) as err:
        parse_config_text(text)
    assert fragment in str(err.value)


def test_parse_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        parse_config(str(tmp_path / "nope.cfg"))


def test_digest_tracks_parameters_but_not_out_dir():
    base = parse_config_text(FULL_CONFIG)
    again = parse_config_text(FULL_CONFIG)
    assert base.digest() == again.digest()
    assert len(base.digest()) == 16
    moved = parse_config_text(FULL_CONFIG.replace("out_dir = results",
                                                  "out_dir = elsewhere"))
    assert moved.digest() == base.digest()
    reseeded = parse_config_text(FULL_CONFIG.replace("seed = 7", "seed = 8"))
    assert reseeded.digest() != base.digest()
    denoised = parse_config_text(FULL_CONFIG.replace("noise_sigma = 1.5",
                                                     "noise_sigma = 0"))
    assert denoised.digest() != base.digest()
    assert ExperimentConfig().digest() != base.digest()


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

CLI_CONFIG = """\
[set]
base_hz = 10e6
f1 = 10e6
f2 = 10e6
f3 = 10e6
f4 = 10e6
label = fixed probe

[simulate]
n_base_cycles = 4000
n_encryptions = 50

[traces]
n_traces = 600
oversampling = 12

[attack]
step = 150
"""

COMPARE_CONFIG = CLI_CONFIG.replace("label = fixed probe", "label = probe a") + """
[set]
base_hz = 10e6
f1 = 9.5917e6
f2 = 9.0317e6
f3 = 6.2777e6
f4 = 4.0517e6
label = probe b
"""


def write_config(tmp_path, text):
    path = tmp_path / "exp.cfg"
    path.write_text(text)
    return str(path)


def read_header(path):
    meta = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].partition(" = ")
            meta[key] = value.strip()
    return meta


def test_cli_simulate_writes_histograms_and_summary(tmp_path, capsys):
    cfg = write_config(tmp_path, CLI_CONFIG)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    summary = out / "simulate_summary.csv"
    hist = out / "histogram_set1.csv"
    assert summary.is_file() and hist.is_file()
    meta = read_header(summary)
    assert set(meta) == {"version", "config_digest", "seed"}
    assert meta["seed"] == "1"
    lines = summary.read_text().splitlines()
    header = lines[3].split(",")
    row = lines[4].split(",")
    assert header[:2] == ["set", "label"]
    # one source frequency means one period bin
    assert row[header.index("unique_bins")] == "1"
    assert "fixed probe" in capsys.readouterr().out


def test_cli_gen_attack_fft_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, CLI_CONFIG)
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    trace_path = out / "traces_set1.bin"
    ts = read_trace_set(str(trace_path))
    assert len(ts.traces) == 600
    assert ts.key == bytes(range(16))

    key_hex = bytes(range(16)).hex()
    assert main(["attack", str(trace_path), "--config", cfg,
                 "--out", str(out), "--evaluate", key_hex]) == 0
    report = json.loads((out / "attack_report.json").read_text())
    assert set(report["meta"]) == {"version", "config_digest", "seed"}
    assert report["broken"] is True
    assert report["min_traces"] is not None
    assert report["min_traces"] % 150 == 0
    assert report["recovered_key"] == key_hex
    assert (out / "attack_report.csv").is_file()
    assert "broken" in capsys.readouterr().out

    assert main(["attack", str(trace_path), "--config", cfg,
                 "--out", str(out)]) == 0
    unscored = json.loads((out / "attack_report.json").read_text())
    assert unscored["broken"] is None and unscored["min_traces"] is None
    assert "not evaluated" in capsys.readouterr().out

    assert main(["fft", str(trace_path), "--out", str(out),
                 "--bin", "1000000"]) == 0
    spectrum = json.loads((out / "fft_summary.json").read_text())
    assert spectrum["bin_hz"] == 1e6
    assert len(spectrum["top_bins"]) == 10
    top = max(spectrum["top_bins"], key=lambda e: e["magnitude"])
    assert top["bin_low_hz"] == pytest.approx(10e6)
    assert (out / "spectrum.csv").is_file()


def test_cli_compare_ranks_and_reruns_byte_identical(tmp_path, capsys):
    cfg = write_config(tmp_path, COMPARE_CONFIG)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["compare", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["compare", "--config", cfg, "--out", str(out_b)]) == 0
    capsys.readouterr()
    ranking = out_a / "compare_ranking.csv"
    assert ranking.is_file()
    lines = ranking.read_text().splitlines()
    header = lines[3].split(",")
    ranks = [line.split(",")[0] for line in lines[4:]]
    assert header[0] == "rank" and ranks == ["1", "2"]
    names_a = sorted(p.name for p in out_a.iterdir())
    assert names_a == sorted(p.name for p in out_b.iterdir())
    for name in names_a:
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_cli_seed_override_changes_artifacts(tmp_path, capsys):
    cfg = write_config(tmp_path, CLI_CONFIG)
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["gen", "--config", cfg, "--out", str(out_a)]) == 0
    assert main(["gen", "--config", cfg, "--out", str(out_b),
                 "--seed", "99"]) == 0
    capsys.readouterr()
    a = (out_a / "traces_set1.bin").read_bytes()
    b = (out_b / "traces_set1.bin").read_bytes()
    assert a != b


def test_cli_usage_and_config_errors_exit_2(tmp_path, capsys):
    assert main([]) == 2
    assert main(["simulate"]) == 2  # --config is required
    assert main(["attack", "x.bin", "--evaluate", "nothex"]) == 2
    bad = tmp_path / "bad.cfg"
    bad.write_text("[traces]\nwarp = 9\n")
    assert main(["simulate", "--config", str(bad)]) == 2
    empty = tmp_path / "empty.cfg"
    empty.write_text("")
    assert main(["simulate", "--config", str(empty)]) == 2
    cfg = write_config(tmp_path, CLI_CONFIG)
    assert main(["compare", "--config", cfg, "--out", str(tmp_path)]) == 2
    assert main(["compare", "--config", cfg, "--step", "1"]) == 2
    err = capsys.readouterr().err
    assert "error:" in err
    assert main(["--help"]) == 0


def test_cli_data_errors_exit_3(tmp_path, capsys):
    cfg = write_config(tmp_path, CLI_CONFIG)
    missing = tmp_path / "missing.bin"
    assert main(["attack", str(missing), "--config", cfg]) == 3
    out = tmp_path / "out"
    assert main(["gen", "--config", cfg, "--out", str(out)]) == 0
    trace_path = out / "traces_set1.bin"
    blob = trace_path.read_bytes()
    truncated = tmp_path / "cut.bin"
    truncated.write_bytes(blob[:len(blob) // 2])
    assert main(["fft", str(truncated)]) == 3
    err = capsys.readouterr().err
    assert "data error:" in err
