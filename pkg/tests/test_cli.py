import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from qtraj import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

LOSSY = """\
[free 0] kind=LossyMode deltac=0.7 kappa=0.5 cutoff=20
[initial] free0=coherent 1.5,0
[trajectory] seed=3 eps=1e-6 dplimit=0.01 tend=1 dt_display=0.25 ntraj=1
"""


def write(tmp_path, text, name="sys.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def data_rows(text):
    return [line for line in text.splitlines() if line and not line.startswith("#")]


def parse_rows(text):
    return np.array([[float(v) for v in line.replace("\t", " ").split()] for line in data_rows(text)])


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


class TestExitCodes:
    def test_ok(self, tmp_path, capsys):
        code, out, _ = run(["--config", write(tmp_path, LOSSY)], capsys)
        assert code == cli.EXIT_OK
        assert len(data_rows(out)) == 5

    def test_syntax(self, tmp_path, capsys):
        code, _, err = run(["--config", write(tmp_path, LOSSY + "[free 1] colour=red\n")], capsys)
        assert code == cli.EXIT_SYNTAX
        assert "line 4" in err

    def test_missing_file(self, tmp_path, capsys):
        code, _, _ = run(["--config", str(tmp_path / "nope.cfg")], capsys)
        assert code == cli.EXIT_SYNTAX

    def test_construction(self, tmp_path, capsys):
        text = (
            "[free 0] kind=LossyMode deltac=0 kappa=1 cutoff=4\n"
            "[free 1] kind=MovingParticle omrec=1 resolution=8\n"
            "[interaction] kind=ParticleOrthogonalToCavity subsystems=0,1 u0=1\n"
        )
        code, out, _ = run(["--config", write(tmp_path, text)], capsys)
        assert code == cli.EXIT_CONSTRUCTION
        assert out == ""

    def test_bad_trajectory_value(self, tmp_path, capsys):
        code, _, _ = run(["--config", write(tmp_path, LOSSY.replace("dplimit=0.01", "dplimit=3"))],
                         capsys)
        assert code == cli.EXIT_CONSTRUCTION

    def test_no_timescale(self, tmp_path, capsys):
        text = "[free 0] kind=LossyMode deltac=0 kappa=0 cutoff=4\n"
        code, _, _ = run(["--config", write(tmp_path, text)], capsys)
        assert code == cli.EXIT_CONSTRUCTION

    def test_oracle_refuses_large(self, tmp_path, capsys):
        text = "[free 0] kind=MovingParticle omrec=1 resolution=512\n"
        code, _, _ = run(["--config", write(tmp_path, text), "--oracle"], capsys)
        assert code == cli.EXIT_CONSTRUCTION

    def test_numerical(self, tmp_path, capsys):
        # a violent drive with dplimit close to one makes one step's jump probability exceed one
        text = (
            "[free 0] kind=PumpedLossyMode deltac=0 kappa=1 eta=40 cutoff=60\n"
            "[initial] free0=coherent 40,0\n"
            "[trajectory] eps=1e3 dplimit=0.999 tend=2 dt_display=1\n"
        )
        code, _, err = run(["--config", write(tmp_path, text)], capsys)
        assert code in (cli.EXIT_OK, cli.EXIT_NUMERICAL)
        if code == cli.EXIT_NUMERICAL:
            assert "numerical fault" in err


class TestOutput:
    def test_columns_and_time(self, tmp_path, capsys):
        _, out, _ = run(["--config", write(tmp_path, LOSSY)], capsys)
        rows = parse_rows(out)
        assert rows.shape[1] == 2 + 4
        assert np.all(np.diff(rows[:, 0]) > 0)
        assert rows[0, 2] == pytest.approx(2.25, abs=1e-9)

    def test_groups_tab_separated(self, tmp_path, capsys):
        _, out, _ = run(["--config", str(CONFIGS / "ring_cavity.cfg")], capsys)
        line = data_rows(out)[0]
        # t dtdid, particle, two modes
        assert len(line.split("\t")) == 4

    def test_header_lists_columns(self, tmp_path, capsys):
        _, out, _ = run(["--config", write(tmp_path, LOSSY)], capsys)
        cols = [l for l in out.splitlines() if l.startswith("# columns")]
        assert len(cols) == 1
        assert "1:t" in cols[0] and "6:" in cols[0]

    def test_ensemble_appends_errors(self, tmp_path, capsys):
        _, out, _ = run(["--config", write(tmp_path, LOSSY), "--ntraj", "3"], capsys)
        rows = parse_rows(out)
        assert rows.shape[1] == 2 + 8
        assert np.all(rows[:, 6:] >= 0)

    def test_byte_identical(self, tmp_path, capsys):
        cfg = write(tmp_path, LOSSY)
        a, b = tmp_path / "a.out", tmp_path / "b.out"
        assert cli.main(["--config", cfg, "--output", str(a), "--ntraj", "4"]) == 0
        assert cli.main(["--config", cfg, "--output", str(b), "--ntraj", "4"]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_seed_override(self, tmp_path, capsys):
        # coherent states are unchanged by jumps, so start from a Fock state
        cfg = write(tmp_path, LOSSY.replace("tend=1", "tend=4").replace("coherent 1.5,0", "fock 3"))
        _, a, _ = run(["--config", cfg, "--seed", "1"], capsys)
        _, b, _ = run(["--config", cfg, "--seed", "2"], capsys)
        assert "seed=1" in a
        assert data_rows(a) != data_rows(b)

    def test_backends_agree(self, tmp_path, capsys):
        from qtraj.kernels import available_backends

        if len(available_backends()) < 2:
            pytest.skip("only one backend")
        cfg = write(tmp_path, LOSSY)
        _, a, _ = run(["--config", cfg, "--backend", "python"], capsys)
        _, b, _ = run(["--config", cfg, "--backend", "cython"], capsys)
        assert np.max(np.abs(parse_rows(a) - parse_rows(b))) < 1e-8

    def test_dumps(self, tmp_path, capsys):
        out_path = tmp_path / "run.out"
        code = cli.main(["--config", write(tmp_path, LOSSY), "--output", str(out_path),
                         "--dump-state", "0.5"])
        assert code == 0
        dump = Path(str(out_path) + ".dump0").read_text().splitlines()
        assert dump[0] == "# dims 20"
        amps = np.array([[float(v) for v in l.split()] for l in dump[2:]])
        assert amps.shape == (20, 2)
        assert np.sum(amps**2) == pytest.approx(1.0, abs=1e-12)
        assert "# dump t=" in out_path.read_text()

    def test_oracle_lines(self, tmp_path, capsys):
        code, out, _ = run(["--config", write(tmp_path, LOSSY), "--oracle", "--ntraj", "2"], capsys)
        assert code == 0
        assert any(l.startswith("# oracle max|sim-oracle|/se") for l in out.splitlines())

    def test_closed_oracle_agrees(self, tmp_path, capsys):
        text = (
            "[free 0] kind=PumpedMovingParticle omrec=0.2 resolution=16 etaeff=0.5 pump=cos:1\n"
            "[initial] free0=momentum 1\n[trajectory] eps=1e-9 tend=1 dt_display=0.25\n"
        )
        _, out, _ = run(["--config", write(tmp_path, text), "--oracle"], capsys)
        diff = [l for l in out.splitlines() if l.startswith("# oracle max|sim-oracle| ")][0]
        assert max(float(v) for v in diff.split()[3:]) < 1e-6

    @pytest.mark.parametrize("name", ["pumped_mode", "ring_cavity", "two_identical_particles"])
    def test_shipped_configs_run(self, name, capsys):
        code, out, _ = run(["--config", str(CONFIGS / f"{name}.cfg"), "--ntraj", "1"], capsys)
        assert code == 0
        assert len(data_rows(out)) > 1

    def test_identical_particle_columns(self, capsys):
        _, out, _ = run(["--config", str(CONFIGS / "two_identical_particles.cfg")], capsys)
        line = data_rows(out)[0].split("\t")
        # t dtdid, the mode, then the populations replacing both particle groups
        assert len(line) == 3


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "qtraj", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "--config" in proc.stdout
