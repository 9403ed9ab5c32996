import csv
import json
import shutil
import subprocess
from pathlib import Path

import pytest

from dynmedian.cli import EXIT_INPUT, EXIT_OK, EXIT_REFUSED, main
from dynmedian.formats import equivalent, parse
from dynmedian.instance import read_instance, write_instance
from dynmedian.model import build_deterministic
from dynmedian.report import load_solution

DATA = Path(__file__).parent / "data"
TINY = str(DATA / "two_site.json")


def run(*argv):
    return main([str(a) for a in argv])


def tree(root: Path, skip=(".meta.json",)):
    """Relative path -> bytes for every file under ``root`` except sidecars."""
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and not p.name.endswith(skip)
    }


def sweep_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestSolve:
    def test_exact_outputs(self, tmp_path, capsys):
        assert run("--out-dir", tmp_path, "solve", TINY) == EXIT_OK
        assert "objective 1.0" in capsys.readouterr().out
        sol = json.loads((tmp_path / "solution.json").read_text())
        assert sol["objective"] == 1.0
        assert [c["day"] for c in sol["change_days"]] == [1, 2]
        assert (tmp_path / "solution_changes.tsv").read_text().splitlines()[2] == "2\tb\tb\ta"
        assert sorted(p.name for p in (tmp_path / "solution_days").iterdir()) == ["day1.csv", "day2.csv"]
        again = load_solution(read_instance(TINY), tmp_path / "solution.json")
        assert again.objective == 1.0

    def test_global_flags_after_subcommand(self, tmp_path):
        assert run("solve", TINY, "--out-dir", tmp_path, "--seed", 4) == EXIT_OK
        assert (tmp_path / "solution.json").exists()

    def test_lr_writes_convergence(self, tmp_path):
        assert run("--out-dir", tmp_path, "solve", TINY, "--lr") == EXIT_OK
        rows = sweep_rows(tmp_path / "solution_convergence.csv")
        assert rows and float(rows[-1]["UB"]) == 1.0

    def test_milp(self, tmp_path):
        assert run("--out-dir", tmp_path, "solve", DATA / "random_3.json", "--milp") == EXIT_OK
        milp = json.loads((tmp_path / "solution.json").read_text())["objective"]
        assert run("--out-dir", tmp_path / "e", "solve", DATA / "random_3.json") == EXIT_OK
        exact = json.loads((tmp_path / "e" / "solution.json").read_text())["objective"]
        assert milp == pytest.approx(exact, rel=1e-9)

    @pytest.mark.parametrize("method", ["--exact", "--lr", "--milp"])
    def test_robust(self, tmp_path, method):
        assert run("--out-dir", tmp_path, "solve", DATA / "random_3.json", method, "--robust", "--gamma", 2) == EXIT_OK
        assert json.loads((tmp_path / "solution.json").read_text())["objective"] > 0

    def test_reruns_are_identical(self, tmp_path):
        for d in ("a", "b"):
            assert run("--out-dir", tmp_path / d, "solve", DATA / "random_11.json", "--lr") == EXIT_OK
        assert tree(tmp_path / "a") == tree(tmp_path / "b")

    def test_meta_sidecar(self, tmp_path):
        run("--out-dir", tmp_path, "solve", TINY)
        meta = json.loads((tmp_path / "solution.meta.json").read_text())
        assert meta["command"] == "solve" and "started" in meta


class TestExitCodes:
    def test_malformed_json_writes_nothing(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{ not json")
        out = tmp_path / "out"
        assert run("--out-dir", out, "solve", bad) == EXIT_INPUT
        assert not out.exists()
        assert "error" in capsys.readouterr().err

    def test_missing_file(self, tmp_path):
        assert run("--out-dir", tmp_path, "solve", tmp_path / "nope.json") == EXIT_INPUT

    def test_invalid_instance(self, tmp_path):
        data = json.loads(Path(TINY).read_text())
        data["fleet_size"] = 5
        path = tmp_path / "inv.json"
        path.write_text(json.dumps(data))
        assert run("--out-dir", tmp_path / "o", "solve", path) == EXIT_INPUT

    def test_catalog_refusal(self, tmp_path, capsys):
        assert run("--out-dir", tmp_path, "generate", "--campus", "full", "-o", tmp_path / "c.json") == EXIT_OK
        assert run("--out-dir", tmp_path / "o", "solve", tmp_path / "c.json") == EXIT_REFUSED
        assert "Lagrangian" in capsys.readouterr().err

    def test_bad_gamma(self, tmp_path):
        assert run("--out-dir", tmp_path, "solve", TINY, "--robust", "--gamma", 99) == EXIT_INPUT

    def test_usage_error_from_argparse(self):
        with pytest.raises(SystemExit) as exc:
            run("solve")
        assert exc.value.code == 2


class TestGenerate:
    def test_deterministic(self, tmp_path):
        for name in ("a.json", "b.json"):
            assert run("--seed", 9, "generate", "--locations", 6, "--p", 2, "-o", tmp_path / name) == EXIT_OK
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_small_campus(self, tmp_path):
        assert run("generate", "--campus", "small", "--horizon", 14, "-o", tmp_path / "s.json") == EXIT_OK
        inst = read_instance(tmp_path / "s.json")
        assert inst.n_locations == 12 and inst.horizon == 14


class TestSweep:
    def test_horizon(self, tmp_path):
        path = tmp_path / "s.json"
        run("generate", "--campus", "small", "--horizon", 7, "--p", 4, "-o", path)
        assert run("--out-dir", tmp_path / "o", "sweep", path, "--parameter", "horizon", "--values", "14,21,28") == EXIT_OK
        rows = sweep_rows(tmp_path / "o" / "sweep.csv")
        assert [r["value"] for r in rows] == ["14", "21", "28"]
        assert all(r["status"] == "ok" for r in rows)
        deltas = sweep_rows(tmp_path / "o" / "week_deltas.csv")
        assert len(deltas) == 2
        assert float(deltas[0]["delta"]) == pytest.approx(float(deltas[1]["delta"]), rel=1e-6)

    def test_unsorted_values_rejected(self, tmp_path):
        assert run("--out-dir", tmp_path, "sweep", TINY, "--parameter", "fleet_size", "--values", "2,1") == EXIT_INPUT

    def test_failed_value_gets_a_row(self, tmp_path):
        # two sites with a group maximum of one cannot host two vehicles
        assert run("--out-dir", tmp_path, "sweep", TINY, "--parameter", "fleet_size", "--values", "1,2",
                   "--keep-bounds") == EXIT_OK
        rows = sweep_rows(tmp_path / "sweep.csv")
        assert [r["status"] == "ok" for r in rows] == [True, False]

    def test_rerun_identical_except_time(self, tmp_path):
        for d in ("a", "b"):
            run("--out-dir", tmp_path / d, "sweep", DATA / "random_3.json", "--parameter", "open_close_cost",
                "--values", "0,1,5")
        assert tree(tmp_path / "a", (".meta.json", "sweep.csv")) == tree(tmp_path / "b", (".meta.json", "sweep.csv"))
        strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]
        assert strip(sweep_rows(tmp_path / "a" / "sweep.csv")) == strip(sweep_rows(tmp_path / "b" / "sweep.csv"))

    def test_gamma(self, tmp_path):
        assert run("--out-dir", tmp_path, "sweep", DATA / "random_3.json", "--parameter", "gamma",
                   "--values", "0,1,2") == EXIT_OK
        obj = [float(r["objective"]) for r in sweep_rows(tmp_path / "sweep.csv")]
        assert obj == sorted(obj)


class TestEvaluate:
    def test_prints_bound(self, tmp_path, capsys):
        run("--out-dir", tmp_path, "solve", DATA / "random_3.json")
        capsys.readouterr()
        assert run("evaluate", DATA / "random_3.json", tmp_path / "solution.json", "--gamma", 1,
                   "--samples", 500) == EXIT_OK
        lines = dict(line.split(None, 1) for line in capsys.readouterr().out.splitlines())
        assert float(lines["violation_bound"]) == 0.5
        assert float(lines["worst_case_cost"]) >= float(lines["nominal_cost"])

    def test_threads_do_not_change_output(self, tmp_path, capsys):
        run("--out-dir", tmp_path, "solve", DATA / "random_3.json")
        capsys.readouterr()
        outs = []
        for t in (1, 3):
            run("--threads", t, "--seed", 2, "evaluate", DATA / "random_3.json", tmp_path / "solution.json",
                "--gamma", 2, "--samples", 2000)
            outs.append(capsys.readouterr().out)
        assert outs[0] == outs[1]


class TestExport:
    @pytest.mark.parametrize("fmt", ["mps", "free-mps", "lp"])
    def test_round_trip(self, tmp_path, fmt):
        out = tmp_path / "m.txt"
        assert run("export", TINY, "--format", fmt, "-o", out) == EXIT_OK
        model = build_deterministic(read_instance(TINY))
        assert equivalent(parse(out.read_text(), fmt), model)

    def test_robust_export(self, tmp_path):
        out = tmp_path / "r.lp"
        assert run("export", TINY, "--format", "lp", "--robust", "--gamma", 1, "-o", out) == EXIT_OK
        assert "theta" in out.read_text()


def test_entry_point(tmp_path):
    exe = shutil.which("dynmedian")
    if exe is None:
        pytest.skip("console script not installed")
    inst = tmp_path / "i.json"
    write_instance(read_instance(TINY), inst)
    proc = subprocess.run([exe, "--out-dir", tmp_path / "o", "solve", inst], capture_output=True, text=True)
    assert proc.returncode == 0 and "objective 1.0" in proc.stdout
