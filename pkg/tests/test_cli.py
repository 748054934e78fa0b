import csv
import io
import json

import pytest

from gexpect import __version__, cli


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def table(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    return json.loads(lines[0][len("# config: "):]), list(csv.DictReader(lines[1:]))


def test_pde_sq_fine():
    code, out, _ = run("pde", "--sigma2", "0.25", "1", "--phi", "sq", "--t", "1",
                       "--accuracy", "fine")
    assert code == 0
    config, rows = table(out)
    assert config["sigma2"] == [0.25, 1.0] and config["phi"] == "sq"
    assert float(rows[0]["value"]) == pytest.approx(1.0, abs=5e-3)
    assert rows[0]["nx"] == "801"


def test_girsanov_check_rows():
    code, out, _ = run("girsanov-check", "--sigma2", "0", "1", "--h", "const:0.5", "--phi",
                       "cos1", "--times", "1", "--m-list", "6,8,10,12")
    assert code == 0
    _, rows = table(out)
    assert [r["m"] for r in rows] == ["6", "8", "10", "12"]
    errs = [float(r["abs_error"]) for r in rows]
    assert all(b <= a for a, b in zip(errs, errs[1:]))
    assert set(rows[0]) == {"m", "sigma_levels", "lhs", "rhs", "abs_error"}


def test_girsanov_check_nondegenerate_strictly_decreasing():
    code, out, _ = run("girsanov-check", "--sigma2", "0.25", "1", "--m-list", "6,8,10")
    errs = [float(r["abs_error"]) for r in table(out)[1]]
    assert code == 0 and errs[0] > errs[1] > errs[2]


def test_axioms_all_pass():
    code, out, _ = run("axioms", "--trials", "100")
    assert code == 0
    _, rows = table(out)
    assert rows and all(r["passed"] == "100" and r["trials"] == "100" for r in rows)


def test_tree_and_modes():
    code, out, _ = run("tree", "--steps", "6", "--sigma-levels", "2", "--functional", "sq",
                       "--mode", "lower")
    assert code == 0
    row = table(out)[1][0]
    assert float(row["value"]) == pytest.approx(0.25, abs=1e-12)
    assert row["leaf_count"] == str(4 ** 6)
    code, out, _ = run("tree", "--steps", "6", "--sigma-levels", "2", "--functional",
                       "expmart-norm", "--h", "steps:1,-1")
    assert code == 0 and float(table(out)[1][0]["value"]) == pytest.approx(1.0, abs=1e-12)
    code, out, _ = run("tree", "--steps", "4", "--functional", "min(x1, x2)", "--times",
                       "0.5,1", "--phi-bound", "10")
    assert code == 0


def test_jeps_and_degenerate():
    code, out, _ = run("jeps-sweep", "--eps-list", "0.4,0.2", "--steps", "6")
    assert code == 0 and len(table(out)[1]) == 2
    code, out, _ = run("degenerate", "--eps-list", "0.2,0.1", "--steps", "5")
    assert code == 0
    rows = table(out)[1]
    assert len(rows) == 2 and "step1_bound" in rows[0]


def test_seventeen_significant_digits():
    code, out, _ = run("tree", "--steps", "3", "--sigma-levels", "2")
    value = table(out)[1][0]["value"]
    assert value == format(float(value), ".17g")


def test_output_is_byte_identical():
    args = ("girsanov-check", "--sigma2", "0.25", "1", "--m-list", "4,6")
    assert run(*args)[1] == run(*args)[1]


def test_timing_column_is_opt_in():
    code, out, _ = run("tree", "--steps", "3", "--sigma-levels", "2", "--timing")
    assert "runtime_s" in table(out)[1][0]


def test_config_file_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nsigma2 = 1 1\nphi = lin\naccuracy = coarse\n")
    code, out, _ = run("pde", "--config", str(cfg), "--phi", "cos1")
    assert code == 0
    config, rows = table(out)
    assert config["sigma2"] == [1.0, 1.0]      # from the file
    assert config["phi"] == "cos1"             # flag beats file
    assert config["accuracy"] == "coarse"
    assert config["t"] == 1.0                  # built-in default
    assert float(rows[0]["value"]) == pytest.approx(0.6065, abs=5e-3)


def test_bad_config_file(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("sigma2 0 1\n")
    code, _, err = run("pde", "--config", str(cfg))
    assert code == 2 and "key = value" in err
    code, _, err = run("pde", "--config", str(tmp_path / "missing.cfg"))
    assert code == 2


def test_output_path_and_env(tmp_path, monkeypatch):
    dest = tmp_path / "a" / "out.csv"
    code, out, _ = run("tree", "--steps", "3", "--sigma-levels", "2", "--output", str(dest))
    assert code == 0 and out == "" and dest.read_text().startswith("# config: ")
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "env"))
    code, out, _ = run("tree", "--steps", "3", "--sigma-levels", "2")
    assert code == 0 and (tmp_path / "env" / "tree.csv").exists()


@pytest.mark.parametrize("argv, needle", [
    (("pde", "--bogus"), "unrecognized"),
    (("nope",), "invalid choice"),
    ((), "missing subcommand"),
    (("pde", "--phi", "cos(x1"), "malformed phi"),
    (("tree", "--steps", "30"), "use m <="),
    (("pde", "--sigma2", "1", "0.5"), "error"),
    (("girsanov-check", "--h", "linear"), "const:"),
    (("degenerate", "--sigma2", "0.25", "1"), "degenerate"),
    (("girsanov-check", "--m-list", "a,b"), "integers"),
])
def test_configuration_errors_exit_2(argv, needle):
    code, _, err = run(*argv)
    assert code == 2
    assert needle in err
    assert len(err.strip().splitlines()) == 1


def test_internal_failure_exits_1(monkeypatch):
    def boom(args):
        raise RuntimeError("kaput")

    monkeypatch.setitem(cli.COMMANDS, "tree", boom)
    code, _, err = run("tree")
    assert code == 1 and "kaput" in err


def test_version(capsys):
    code, _, _ = run("--version")
    assert code == 0
    assert __version__ in capsys.readouterr().out


def test_seed_is_accepted_and_ignored():
    a = run("tree", "--steps", "3", "--sigma-levels", "2", "--seed", "1")[1]
    b = run("tree", "--steps", "3", "--sigma-levels", "2", "--seed", "2")[1]
    assert a.splitlines()[1:] == b.splitlines()[1:]


def test_reproduce_all_inject_bias_reports_failures(monkeypatch):
    # shrink the run: only the identity criteria matter for the self-test
    from gexpect import experiments
    keep = (experiments.criterion_girsanov_nondegenerate,
            experiments.criterion_girsanov_degenerate)
    monkeypatch.setattr(experiments, "CRITERIA", keep)
    code, out, _ = run("reproduce-all", "--quick", "--inject-bias", "0.1")
    assert code == 1
    assert out.count("[FAIL]") == 2
    code, out, _ = run("reproduce-all", "--quick")
    assert code == 0 and "[FAIL]" not in out
