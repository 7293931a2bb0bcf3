import subprocess
import sys

from wsodirk.cli import EXIT_FAILURE, EXIT_USAGE, main, read_config
from wsodirk.convergence import parse_csv
from wsodirk.tableau import load, registry_names


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_list(capsys):
    code, out, _ = run(capsys, "list")
    assert code == 0
    for name in registry_names():
        assert name in out


def test_analyze_text_and_kv(capsys):
    code, out, _ = run(capsys, "analyze", "wso3-p3")
    assert code == 0 and "WSO eigenvector order  3" in out
    code, out, _ = run(capsys, "analyze", "wso2-p3", "--format", "kv")
    kv = dict(line.split("=", 1) for line in out.splitlines())
    assert kv["wso"] == "2" and kv["classical_order"] == "3"


def test_analyze_unknown_name(capsys):
    code, _, err = run(capsys, "analyze", "nope")
    assert code == EXIT_USAGE and "wso3-p3" in err


def test_integrate_backward_euler_decay(capsys):
    code, out, _ = run(capsys, "integrate", "--scheme", "backward-euler", "--problem", "decay",
                       "--dt", "1", "--T", "1")
    assert code == 0
    assert "u[0] = 0.5" in out.splitlines()


def test_integrate_negative_lambda_and_trajectory(capsys, tmp_path):
    dest = tmp_path / "traj.csv"
    code, out, _ = run(capsys, "integrate", "--scheme", "wso3-p3", "--problem", "pr", "--lambda", "-1e4",
                       "--dt", "0.1", "--T", "0.5", "--trajectory", "--output", str(dest))
    assert code == 0
    rows = [ln for ln in dest.read_text().splitlines() if ln and not ln.startswith("#")]
    assert len(rows) == 1 + 6  # header and t = 0 .. 0.5


def test_integrate_rejects_bad_dt(capsys):
    code, _, err = run(capsys, "integrate", "--scheme", "wso3-p3", "--problem", "decay", "--dt", "0")
    assert code == EXIT_USAGE and "must be positive" in err


def test_integrate_from_file(capsys, tmp_path):
    code, out, _ = run(capsys, "search", "--s", "2", "--p", "2", "--qe", "1", "--multistarts", "1",
                       "--output", str(tmp_path / "t.txt"))
    assert code == 0 and load(str(tmp_path / "t.txt")).s == 2
    code, out, _ = run(capsys, "integrate", "--file", str(tmp_path / "t.txt"), "--problem", "decay",
                       "--dt", "0.125")
    assert code == 0 and "max_error" in out


def test_converge_decay(capsys):
    code, out, err = run(capsys, "converge", "--scheme", "wso3-p3", "--problem", "decay")
    assert code == 0
    table = parse_csv(out)
    assert abs(table.slope() - 3) < 0.25 and len(table.rows) == 8
    assert "slope" in err


def test_converge_dt_range_and_window(capsys):
    code, out, _ = run(capsys, "converge", "--scheme", "backward-euler", "--problem", "pr",
                       "--lambda", "-1", "--T", "1", "--dt-range", "0.01 0.1 4", "--window", "0.01 0.1")
    assert code == 0
    table = parse_csv(out)
    assert len(table.rows) == 4 and abs(table.slope() - 1) < 0.1


def test_converge_failure_exit_code(capsys):
    code, out, err = run(capsys, "converge", "--scheme", "backward-euler", "--problem", "decay",
                         "--rate", "-2", "--dt", "0.5")
    assert code == EXIT_FAILURE and "singular" in err


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# decay study\nscheme = wso3-p4\nproblem = decay\ndt-range = 0.01 0.1 5\n")
    code, out, _ = run(capsys, "converge", "--config", str(cfg))
    assert code == 0 and "# scheme: wso3-p4" in out
    # flags override the file
    code, out, _ = run(capsys, "converge", "--config", str(cfg), "--scheme", "wso3-p3")
    assert "# scheme: wso3-p3" in out
    assert read_config(str(cfg))["dt_range"] == "0.01 0.1 5"


def test_config_rejects_unknown_keys(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("scheme = wso3-p3\ncolour = red\n")
    code, _, err = run(capsys, "converge", "--config", str(cfg))
    assert code == EXIT_USAGE and "colour" in err


def test_unknown_problem_parameter(capsys):
    code, _, err = run(capsys, "integrate", "--scheme", "wso3-p3", "--problem", "decay",
                       "--lambda", "-1", "--dt", "0.1")
    assert code == EXIT_USAGE and "lam" in err


def test_search_rejects_qe4(capsys):
    code, _, err = run(capsys, "search", "--s", "6", "--qe", "4")
    assert code == EXIT_USAGE and "qe=4" in err


def test_search_failure(capsys):
    code, _, err = run(capsys, "search", "--s", "1", "--p", "3", "--qe", "1", "--multistarts", "1",
                       "--max-draws", "2")
    assert code == EXIT_FAILURE and "order[" in err


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "wsodirk", "list"], capture_output=True, text=True)
    assert out.returncode == 0 and "wso3-p4" in out.stdout
