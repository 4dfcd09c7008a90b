import csv
import io
import json

import pytest

from boxplain.cli import InputError, ingest_csv, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


@pytest.fixture()
def demo_instances(tmp_path):
    path = tmp_path / "instances.csv"
    path.write_text("x1,x2\n0.7,0.2\n0.5,0.3\n")
    return path


@pytest.fixture()
def zero_model(tmp_path):
    doc = {
        "input_dim": 2,
        "input_domain": [[0.0, 1.0], [0.0, 1.0]],
        "layers": [
            {"weights": [[0.0, 0.0], [0.0, 0.0]], "biases": [0.5, -1.0],
             "activation": "relu"},
            {"weights": [[0.0, 0.0], [0.0, 0.0]], "biases": [1.0, 0.0],
             "activation": "identity"},
        ],
    }
    path = tmp_path / "zero.json"
    path.write_text(json.dumps(doc))
    return path


class TestIngest:
    def test_plain_rows(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("0.7,0.2\n")
        instances = ingest_csv(path)
        assert instances.rows.shape == (1, 2)
        assert instances.rows[0] == pytest.approx([0.7, 0.2], abs=0)

    def test_header_detected_and_skipped(self, tmp_path):
        path = tmp_path / "b.csv"
        path.write_text("x1,x2\n0.1,0.9\n")
        assert ingest_csv(path).rows.shape == (1, 2)

    def test_non_numeric_cell_names_position(self, tmp_path):
        path = tmp_path / "c.csv"
        path.write_text("0.1,0.2\n0.3,oops\n")
        with pytest.raises(InputError, match="line 2, column 2"):
            ingest_csv(path)

    def test_partially_numeric_first_line_is_data_not_header(self, tmp_path):
        path = tmp_path / "c2.csv"
        path.write_text("0.1,bad\n")
        with pytest.raises(InputError, match="line 1, column 2"):
            ingest_csv(path)

    def test_ragged_row_rejected(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text("0.1,0.2\n0.3\n")
        with pytest.raises(InputError, match="line 2"):
            ingest_csv(path)


class TestExplain:
    def test_rows_per_instance(self, capsys, demo_model_path, demo_instances):
        code, out, _ = run_cli(capsys, "explain", str(demo_model_path),
                               str(demo_instances))
        assert code == 0
        header, rows = parse_csv(out)
        assert header[:3] == ["instance", "predicted_class", "kept_indices"]
        assert len(rows) == 2
        assert rows[0][1] == "0"
        assert rows[0][2] == "0"
        assert "1:RemovedByBox" in rows[0][3]

    def test_modes_agree_on_kept_sets(self, capsys, demo_model_path,
                                      demo_instances):
        _, base_out, _ = run_cli(capsys, "explain", str(demo_model_path),
                                 str(demo_instances), "--mode", "baseline")
        _, ours_out, _ = run_cli(capsys, "explain", str(demo_model_path),
                                 str(demo_instances), "--mode", "improved")
        _, base_rows = parse_csv(base_out)
        _, ours_rows = parse_csv(ours_out)
        for b, o in zip(base_rows, ours_rows):
            assert b[2] == o[2]

    def test_width_mismatch_is_input_error(self, capsys, demo_model_path,
                                           tmp_path):
        path = tmp_path / "wide.csv"
        path.write_text("0.1,0.2,0.3\n")
        code, _, err = run_cli(capsys, "explain", str(demo_model_path), str(path))
        assert code == 2
        assert "columns" in err

    def test_malformed_cell_is_input_error(self, capsys, demo_model_path,
                                           tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,0.2\nx,0.4\n")
        code, _, err = run_cli(capsys, "explain", str(demo_model_path), str(path))
        assert code == 2
        assert "line 2" in err

    def test_missing_model_file(self, capsys, tmp_path, demo_instances):
        code, _, err = run_cli(capsys, "explain", str(tmp_path / "nope.json"),
                               str(demo_instances))
        assert code == 2

    def test_bad_order_flag(self, capsys, demo_model_path, demo_instances):
        code, _, err = run_cli(capsys, "explain", str(demo_model_path),
                               str(demo_instances), "--order", "0,0")
        assert code == 2
        assert "permutation" in err


class TestBounds:
    def test_demo_output_neurons(self, capsys, demo_model_path):
        code, out, _ = run_cli(capsys, "bounds", str(demo_model_path))
        assert code == 0
        header, rows = parse_csv(out)
        assert header == ["layer", "neuron", "tight_lb", "tight_ub",
                          "box_lb", "box_ub"]
        # output layer of the demo model is layer 2; neuron 0 spans
        # tight [0.2, 1.4] and box [0.2, 1.7]
        row = next(r for r in rows if r[0] == "2" and r[1] == "0")
        vals = [float(v) for v in row[2:]]
        assert vals == pytest.approx([0.2, 1.4, 0.2, 1.7], abs=1e-9)

    def test_zero_model_bounds_are_biases(self, capsys, zero_model):
        code, out, _ = run_cli(capsys, "bounds", str(zero_model))
        assert code == 0
        _, rows = parse_csv(out)
        by_key = {(r[0], r[1]): [float(v) for v in r[2:]] for r in rows}
        assert by_key[("1", "0")] == pytest.approx([0.5, 0.5, 0.5, 0.5])
        assert by_key[("2", "0")] == pytest.approx([1.0, 1.0, 1.0, 1.0])

    def test_box_mode_tight_equals_box(self, capsys, demo_model_path):
        code, out, _ = run_cli(capsys, "bounds", str(demo_model_path),
                               "--tight-bounds", "box")
        assert code == 0
        _, rows = parse_csv(out)
        for row in rows:
            assert row[2] == row[4] and row[3] == row[5]


class TestBench:
    def test_demo_aggregate(self, capsys, demo_model_path, demo_instances):
        code, out, _ = run_cli(capsys, "bench", str(demo_model_path),
                               str(demo_instances))
        assert code == 0
        header, rows = parse_csv(out)
        assert len(rows) == 1
        record = dict(zip(header, rows[0]))
        assert int(record["box_shortcut_hits"]) >= 1
        assert int(record["solver_calls_ours"]) <= int(record["solver_calls_baseline"])
        # numeric cells round-trip exactly
        for key, cell in record.items():
            assert repr(float(cell)) == cell or str(int(cell)) == cell

    def test_empty_instances_header_only(self, capsys, demo_model_path,
                                         tmp_path):
        empty = tmp_path / "empty.csv"
        empty.write_text("")
        code, out, _ = run_cli(capsys, "bench", str(demo_model_path), str(empty))
        assert code == 0
        header, rows = parse_csv(out)
        assert rows == []
        assert header[0] == "exp_s_baseline"

    def test_random_model_fixture(self, capsys):
        code, out, _ = run_cli(capsys, "bench", "models/random_3in_2l.json",
                               "models/random_3in_2l_instances.csv")
        assert code == 0
        header, rows = parse_csv(out)
        record = dict(zip(header, rows[0]))
        assert int(record["solver_calls_ours"]) <= int(record["solver_calls_baseline"])
        assert 0.0 <= float(record["pct_bounds_tightened"]) <= 100.0
        assert float(record["pct_bin_vars_removed_ours"]) >= \
            float(record["pct_bin_vars_removed_before"])

    def test_aggregate_equals_fold_of_per_instance_rows(self, capsys,
                                                        demo_model_path,
                                                        demo_instances):
        _, bench_out, _ = run_cli(capsys, "bench", str(demo_model_path),
                                  str(demo_instances))
        header, rows = parse_csv(bench_out)
        record = dict(zip(header, rows[0]))
        _, ours_out, _ = run_cli(capsys, "explain", str(demo_model_path),
                                 str(demo_instances), "--mode", "improved")
        ours_header, ours_rows = parse_csv(ours_out)
        calls = sum(int(dict(zip(ours_header, r))["solver_calls"])
                    for r in ours_rows)
        hits = sum(int(dict(zip(ours_header, r))["box_shortcut_hits"])
                   for r in ours_rows)
        assert int(record["solver_calls_ours"]) == calls
        assert int(record["box_shortcut_hits"]) == hits

    def test_determinism_excluding_times(self, capsys, demo_model_path,
                                         demo_instances):
        args = ("bench", str(demo_model_path), str(demo_instances),
                "--seed", "7", "--jobs", "1")
        _, out1, _ = run_cli(capsys, *args)
        _, out2, _ = run_cli(capsys, *args)
        header, rows1 = parse_csv(out1)
        _, rows2 = parse_csv(out2)
        time_cols = {i for i, name in enumerate(header) if name.endswith("_s_baseline")
                     or name.endswith("_s_ours")}
        for a, b in zip(rows1, rows2):
            for i, (x, y) in enumerate(zip(a, b)):
                if i not in time_cols:
                    assert x == y


class TestVerify:
    def test_demo_reports_ok(self, capsys, demo_model_path, demo_instances):
        code, out, _ = run_cli(capsys, "verify", str(demo_model_path),
                               str(demo_instances), "--samples", "300",
                               "--seed", "5")
        assert code == 0
        header, rows = parse_csv(out)
        assert header == ["instance", "predicted_class", "kept_indices",
                          "sufficiency_ok", "minimality_ok", "unverified"]
        for row in rows:
            assert row[3] == "1" and row[4] == "1"


def test_jobs_flag_matches_serial(capsys, demo_model_path, demo_instances):
    _, serial, _ = run_cli(capsys, "explain", str(demo_model_path),
                           str(demo_instances), "--jobs", "1")
    _, threaded, _ = run_cli(capsys, "explain", str(demo_model_path),
                             str(demo_instances), "--jobs", "4")
    _, rows_a = parse_csv(serial)
    _, rows_b = parse_csv(threaded)
    for a, b in zip(rows_a, rows_b):
        assert a[:4] == b[:4]
