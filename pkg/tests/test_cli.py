"""End-to-end runs of the command-line interface."""
import json

import pytest

from dpiso.cli import main
from dpiso.core import Dataset
from dpiso.generators import gen_packing_hard
from dpiso.io import read_dataset_csv, read_poset_json, write_dataset_csv
from dpiso.posets import chain_poset
from dpiso.total_order import stage_count


def points(data):
    return sorted(zip(data.xs.tolist(), data.ys.tolist()))


class TestGen:
    def test_random_writes_csv(self, tmp_path, capsys):
        out = tmp_path / "d.csv"
        rc = main(["gen", "--kind", "random", "--m", "8", "--n", "20",
                   "--seed", "3", "--out", str(out)])
        assert rc == 0
        assert f"wrote 20 points to {out}" in capsys.readouterr().out
        data = read_dataset_csv(out)
        assert data.n == 20 and data.xs.max() <= 8

    def test_packing_matches_library_generator(self, tmp_path):
        out = tmp_path / "d.csv"
        rc = main(["gen", "--kind", "packing", "--m", "4", "--n", "6",
                   "--k", "2", "--j", "2", "--out", str(out)])
        assert rc == 0
        assert points(read_dataset_csv(out)) == points(
            gen_packing_hard(4, 6, 2, 2))

    def test_antichain_needs_poset_out(self, tmp_path, capsys):
        args = ["gen", "--kind", "antichain", "--w", "3", "--n", "3",
                "--z", "1,0", "--out", str(tmp_path / "d.csv")]
        assert main(args) == 2
        assert "error:" in capsys.readouterr().err
        pout = tmp_path / "p.json"
        assert main(args + ["--poset-out", str(pout)]) == 0
        assert points(read_dataset_csv(tmp_path / "d.csv")) == [
            (1, 1.0), (2, 0.0), (3, 0.0)]
        assert read_poset_json(pout).size == 3

    def test_grid_payload_and_poset(self, tmp_path, capsys):
        out, pout = tmp_path / "d.csv", tmp_path / "p.json"
        args = ["gen", "--kind", "grid", "--w", "2", "--z", "2,1",
                "--n", "4", "--out", str(out), "--poset-out", str(pout)]
        assert main(args) == 2
        assert "--h" in capsys.readouterr().err
        assert main(args + ["--h", "6"]) == 0
        assert points(read_dataset_csv(out)) == [
            (5, 0.0), (6, 1.0), (7, 0.0), (8, 1.0)]
        assert read_poset_json(pout).size == 12


def small_csv(tmp_path):
    path = tmp_path / "in.csv"
    write_dataset_csv(path, Dataset([1.0, 2.0, 2.0, 3.0],
                                    [0.1, 0.4, 0.6, 0.9]))
    return path


class TestFit:
    def test_fast_step_output(self, tmp_path, capsys):
        out = tmp_path / "f.json"
        rc = main(["fit", "--algo", "fast", "--input",
                   str(small_csv(tmp_path)), "--epsilon", "2", "--seed", "4",
                   "--output", str(out)])
        assert rc == 0
        resolution = 2 ** (stage_count(2.0, 4) - 1)
        assert f"(value resolution 1/{resolution})" in capsys.readouterr().out
        doc = json.loads(out.read_text())
        assert doc["kind"] == "step"
        assert doc["meta"]["algo"] == "fast" and doc["meta"]["m"] == 3
        assert doc["meta"]["resolution"] == resolution
        values = [v for _, v in doc["breakpoints"]]
        assert values == sorted(values)

    def test_poset_map_output(self, tmp_path):
        pout = tmp_path / "p.json"
        main(["gen", "--kind", "antichain", "--w", "3", "--n", "3",
              "--z", "1,1", "--out", str(tmp_path / "d.csv"),
              "--poset-out", str(pout)])
        out = tmp_path / "f.json"
        rc = main(["fit", "--algo", "poset", "--input",
                   str(tmp_path / "d.csv"), "--poset", str(pout),
                   "--epsilon", "4", "--seed", "1", "--output", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["kind"] == "map"
        assert sorted(doc["values"]) == ["1", "2", "3"]

    def test_constrained_needs_variant(self, tmp_path, capsys):
        rc = main(["fit", "--algo", "constrained", "--input",
                   str(small_csv(tmp_path)), "--epsilon", "1", "--seed", "0",
                   "--output", str(tmp_path / "f.json")])
        assert rc == 2
        assert "--variant" in capsys.readouterr().err

    def test_baseline_grid_recorded(self, tmp_path):
        out = tmp_path / "f.json"
        rc = main(["fit", "--algo", "baseline", "--input",
                   str(small_csv(tmp_path)), "--epsilon", "1", "--seed", "2",
                   "--grid", "5", "--output", str(out)])
        assert rc == 0
        assert json.loads(out.read_text())["meta"]["resolution"] == 5

    def test_domain_smaller_than_data_rejected(self, tmp_path, capsys):
        rc = main(["fit", "--algo", "fast", "--input",
                   str(small_csv(tmp_path)), "--m", "2", "--epsilon", "1",
                   "--seed", "0", "--output", str(tmp_path / "f.json")])
        assert rc == 2
        assert capsys.readouterr().err.startswith("error:")

    def test_cap_exceeded_exit_code(self, tmp_path, capsys):
        pout = tmp_path / "p.json"
        from dpiso.io import write_poset_json
        write_poset_json(pout, chain_poset(25))
        write_dataset_csv(tmp_path / "d.csv",
                          Dataset([float(i) for i in range(1, 26)],
                                  [0.5] * 25))
        rc = main(["fit", "--algo", "poset", "--input",
                   str(tmp_path / "d.csv"), "--poset", str(pout),
                   "--epsilon", "1", "--seed", "0",
                   "--output", str(tmp_path / "f.json")])
        assert rc == 3
        assert capsys.readouterr().err.startswith("cap exceeded:")


BENCH_CONFIG = """algo = fast
generator = random
loss = l2
m = 8
n = 16
epsilon = 2.0
trials = 2
seed = 3
"""


class TestBench:
    def test_grid_run_writes_results(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(BENCH_CONFIG)
        out = tmp_path / "r.csv"
        rc = main(["bench", "--config", str(cfg), "--out", str(out)])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "# cell n=16 epsilon=2.0 resolution=1/16" in printed
        assert f"wrote 2 trials to {out}" in printed
        lines = out.read_text().splitlines()
        assert lines[0] == "algo,n,epsilon,trial,excess_risk,wall_ms"
        assert len(lines) == 1 + 2 + 2

    def test_out_required_somewhere(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(BENCH_CONFIG)
        assert main(["bench", "--config", str(cfg)]) == 2
        assert "no output path" in capsys.readouterr().err
        cfg.write_text(BENCH_CONFIG + f"out = {tmp_path / 'r2.csv'}\n")
        assert main(["bench", "--config", str(cfg)]) == 0
        assert (tmp_path / "r2.csv").exists()

    def test_config_error_reported(self, tmp_path, capsys):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(BENCH_CONFIG + "algos = tree\n")
        assert main(["bench", "--config", str(cfg),
                     "--out", str(tmp_path / "r.csv")]) == 2
        err = capsys.readouterr().err
        assert err.startswith("error:") and "unknown key" in err


class TestAudit:
    def test_honest_run_reports_no_violation(self, capsys):
        rc = main(["audit", "--algo", "fast", "--trials", "200",
                   "--epsilon", "1"])
        assert rc == 0
        printed = capsys.readouterr().out
        assert "declared epsilon 1.0, estimated" in printed
        assert "no violation detected" in printed

    def test_trials_must_be_positive(self, capsys):
        rc = main(["audit", "--algo", "fast", "--trials", "0",
                   "--epsilon", "1"])
        assert rc == 2
        assert "error:" in capsys.readouterr().err
