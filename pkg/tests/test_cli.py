import json
import warnings

import numpy as np
import pytest

from dfodt import io
from dfodt.cli import main
from dfodt.core import GridSpec, Volume3D

SMALL = """\
[grid]
n = 64
pitch = 0.2

[illumination]
count = 6

[gp]
iterations = 2
"""


@pytest.fixture(autouse=True)
def _quiet():
    # 0.2 um voxels undersample the 1.2 NA band; the CLI tests only exercise plumbing
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        yield


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(SMALL)
    return p


def _run(*argv):
    return main([str(a) for a in argv])


def _error(capsys):
    line = capsys.readouterr().err.strip().splitlines()[-1]
    return json.loads(line)


def test_compare_self(tmp_path, cfg, capsys):
    assert _run("phantom", "-c", cfg, "-o", tmp_path / "p.dfodt") == 0
    assert _run("compare", "-c", cfg, tmp_path / "p.dfodt", tmp_path / "p.dfodt", "-o", tmp_path / "c.json") == 0
    rep = json.loads((tmp_path / "c.json").read_text())
    assert rep["ncc"] == 1.0
    man = json.loads((tmp_path / "c.json.manifest.json").read_text())
    assert man["metrics"]["ncc"] == 1.0
    assert man["command"] == "compare"


def test_ctf_darkfield_odt_needs_cutoff(tmp_path, cfg, capsys):
    code = _run("ctf", "-c", cfg, "--modality", "DarkFieldODT", "-o", tmp_path / "m.dfodt")
    assert code == 2
    err = _error(capsys)
    assert err["error"] == "ConfigError" and err["exit_code"] == 2
    assert not (tmp_path / "m.dfodt").exists()


def test_ctf_writes_mask(tmp_path, cfg):
    out = tmp_path / "m.dfodt"
    assert _run("ctf", "-c", cfg, "--set", "grid.n=32", "--modality", "DarkField", "-o", out) == 0
    m = io.read_support_mask(out)
    assert m.epsilon == pytest.approx(1 / 6.4)
    assert m.is_hermitian()


def test_unknown_key_is_config_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text("[grid]\nsize = 4\n")
    assert _run("phantom", "-c", p, "-o", tmp_path / "p.dfodt") == 2
    assert "grid.size" in _error(capsys)["message"]
    assert _run("phantom", "--set", "grid.n=7", "-o", tmp_path / "p.dfodt") == 2


def test_io_errors(tmp_path, cfg, capsys):
    assert _run("darkfield", "-c", cfg, tmp_path / "missing.dfodt", "-o", tmp_path / "d.dfodt") == 3
    (tmp_path / "junk.dfodt").write_bytes(b"not a dfodt file")
    assert _run("darkfield", "-c", cfg, tmp_path / "junk.dfodt", "-o", tmp_path / "d.dfodt") == 3
    assert _error(capsys)["error"] == "MalformedHeaderError"


def test_constant_volume_correlation_is_numeric_error(tmp_path, cfg, capsys):
    g = GridSpec.cube(8, 0.1)
    io.write_volume(tmp_path / "flat.dfodt", Volume3D(g, np.full(g.shape, 1.33)))
    assert _run("compare", "-c", cfg, tmp_path / "flat.dfodt", tmp_path / "flat.dfodt",
                "-o", tmp_path / "c.json") == 4
    assert _error(capsys)["error"] == "UndefinedCorrelationError"


def test_noise_requires_seed(tmp_path, cfg):
    _run("phantom", "-c", cfg, "-o", tmp_path / "p.dfodt")
    assert _run("simulate", "-c", cfg, tmp_path / "p.dfodt", "--noise-sigma", "0.01", "-o", tmp_path / "f.dfodt") == 2


def test_optical_mismatch(tmp_path, cfg, capsys):
    _run("phantom", "-c", cfg, "-o", tmp_path / "p.dfodt")
    code = _run("simulate", "-c", cfg, "--set", "optical.wavelength=0.633", tmp_path / "p.dfodt",
                "-o", tmp_path / "f.dfodt")
    assert code == 2
    assert "differs" in _error(capsys)["message"]


def test_step_by_step_pipeline(tmp_path, cfg):
    p, f, r, d = (tmp_path / n for n in ("p.dfodt", "f.dfodt", "r.dfodt", "d.dfodt"))
    assert _run("phantom", "-c", cfg, "-o", p) == 0
    assert _run("simulate", "-c", cfg, p, "-o", f) == 0
    assert len(io.read_field_stack(f)) == 6
    assert _run("reconstruct", "-c", cfg, f, "-o", r) == 0
    man = json.loads((tmp_path / "r.dfodt.manifest.json").read_text())
    assert man["metrics"]["mapping"]["frames_mapped"] == 6
    assert len(man["metrics"]["violation_energy"]) == 3
    assert str(f) in man["inputs"] and str(cfg) in man["inputs"]
    assert _run("darkfield", "-c", cfg, r, "--shape", "step", "--cutoff", "0.5", "-o", d) == 0
    assert io.read_volume(d).kind.value == "Filtered"
    assert _run("slice", "-c", cfg, r, "--plane", "XZ", "-o", tmp_path / "s.pgm") == 0
    assert (tmp_path / "s.pgm").read_bytes()[:2] == b"P5"
    assert _run("slice", "-c", cfg, r, "--index", "64", "-o", tmp_path / "s2.pgm") == 2


def test_holography_path(tmp_path, cfg):
    p, h, f, r = (tmp_path / n for n in ("p.dfodt", "h.dfodt", "f.dfodt", "r.dfodt"))
    _run("phantom", "-c", cfg, "-o", p)
    common = ("-c", cfg, "--set", "holography.upsample=4")
    assert _run("simulate", *common, p, "--holography", "-o", h) == 0
    holos = io.read_interferogram_stack(h)
    assert (holos[0].nx, holos[0].pitch) == (256, 0.05)
    assert _run("retrieve", *common, h, "-o", f) == 0
    assert _run("retrieve", *common, tmp_path / "h_background.dfodt", "-o", tmp_path / "bg.dfodt") == 0
    assert _run("reconstruct", *common, f, "--background", tmp_path / "bg.dfodt", "--no-gp", "-o", r) == 0
    # same reconstruction straight from simulated fields
    assert _run("simulate", *common, p, "-o", tmp_path / "direct_f.dfodt") == 0
    assert _run("reconstruct", *common, tmp_path / "direct_f.dfodt", "--no-gp", "-o", tmp_path / "direct.dfodt") == 0
    a = io.read_volume(r).values
    b = io.read_volume(tmp_path / "direct.dfodt").values
    assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.95


def _run_dir(tmp_path, name, *extra):
    out = tmp_path / name
    assert _run("run", "-c", tmp_path / "run.toml", "--output-dir", out, *extra) == 0
    return out


def test_run_writes_metrics(tmp_path, cfg):
    out = _run_dir(tmp_path, "a")
    metrics = json.loads((out / "metrics.json").read_text())["extra"]
    for key in ("ncc_direct", "ncc_gp", "ringing_energy_step", "ringing_energy_gaussian",
                "interior_error_direct", "interior_error_gp", "edge_contrast_filtered",
                "edge_contrast_unfiltered", "violation_energy"):
        assert key in metrics
    man = json.loads((out / "manifest.json").read_text())
    assert set(man) == {"command", "version", "config_hash", "config", "inputs", "outputs", "metrics", "timestamp"}
    assert len(man["config_hash"]) == 64


def test_run_is_deterministic(tmp_path, cfg):
    a = _run_dir(tmp_path, "a", "--seed", "7", "--noise-sigma", "0.01")
    b = _run_dir(tmp_path, "b", "--seed", "7", "--noise-sigma", "0.01")
    names = sorted(q.name for q in a.iterdir())
    assert names == sorted(q.name for q in b.iterdir())
    for n in names:
        if n != "manifest.json":
            assert (a / n).read_bytes() == (b / n).read_bytes(), n
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["metrics"] == mb["metrics"]
    assert list(ma["outputs"].values()) == list(mb["outputs"].values())

    c = _run_dir(tmp_path, "c", "--seed", "7", "--noise-sigma", "0.01", "--workers", "2")
    va = io.read_volume(a / "recon_gp.dfodt").values
    vc = io.read_volume(c / "recon_gp.dfodt").values
    assert np.abs(vc - va).max() <= 1e-6 * np.abs(va).max()
