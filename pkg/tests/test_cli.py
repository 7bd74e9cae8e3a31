import csv
import json

import pytest
from click.testing import CliRunner

from expdb.cli import main
from expdb.ingest import natural_uuid

from .test_ingest import RESULTS_HEADER, five_by_five_rows


@pytest.fixture
def runner():
    return CliRunner()


def write_results_csv(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        writer.writerows(rows)


def seeded_root(tmp_path, runner, n_datasets=4, n_configs=6):
    """Ingest a small multi-dataset corpus through the CLI itself."""
    root = tmp_path / "root"
    rows = []
    for d in range(n_datasets):
        for c in range(n_configs):
            for fold in range(3):
                for repeat in range(2):
                    value = 0.1 + 0.1 * c + 0.01 * fold + 0.001 * repeat
                    rows.append(
                        [f"ds{d}", "pipe", f"cfg{c}", fold, repeat,
                         "normalized_accuracy", round(min(value, 0.99), 4)]
                    )
    path = tmp_path / "corpus.csv"
    write_results_csv(path, rows)
    result = runner.invoke(main, ["ingest", "results", str(path), "--root", str(root)])
    assert result.exit_code == 0, result.output
    mf = tmp_path / "mf.csv"
    with open(mf, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset_id", "feature", "value"])
        for d in range(n_datasets):
            writer.writerow([f"ds{d}", "n_instances", 100 + d])
            writer.writerow([f"ds{d}", "n_features", 10])
    result = runner.invoke(main, ["ingest", "meta-features", str(mf), "--root", str(root)])
    assert result.exit_code == 0, result.output
    return root


class TestIngestCommands:
    def test_ingest_reports_counts(self, tmp_path, runner):
        root = tmp_path / "root"
        path = tmp_path / "results.csv"
        write_results_csv(path, five_by_five_rows())
        result = runner.invoke(main, ["ingest", "results", str(path), "--root", str(root)])
        assert result.exit_code == 0, result.output
        report = json.loads(result.output)
        assert report["created"]["run"] == 25

    def test_rename_metric_flag(self, tmp_path, runner):
        root = tmp_path / "root"
        path = tmp_path / "results.csv"
        write_results_csv(path, [["d", "p", "c", 0, 0, "acc", 0.5]])
        result = runner.invoke(
            main,
            ["ingest", "results", str(path), "--root", str(root),
             "--rename-metric", "acc=normalized_accuracy"],
        )
        assert result.exit_code == 0, result.output


class TestSplitCommand:
    def test_split_writes_fold_documents(self, tmp_path, runner):
        table = tmp_path / "data.csv"
        table.write_text(
            "x,label\n" + "\n".join(f"{i},{'a' if i % 2 else 'b'}" for i in range(10)) + "\n"
        )
        out = tmp_path / "folds.json"
        result = runner.invoke(
            main,
            ["split", str(table), "--target", "label", "--k", "5", "--seed", "3",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        folds = json.loads(out.read_text())
        assert len(folds) == 5
        assert all(len(f["test_indices"]) == 2 for f in folds)
        # determinism across invocations
        result2 = runner.invoke(
            main, ["split", str(table), "--target", "label", "--k", "5", "--seed", "3"]
        )
        folds2 = json.loads(result2.output)
        assert [f["test_indices"] for f in folds2] == [f["test_indices"] for f in folds]


class TestAnalysisCommands:
    def test_rank_outputs_csv(self, tmp_path, runner):
        root = seeded_root(tmp_path, runner)
        dataset_id = natural_uuid("dataset", "ds0")
        result = runner.invoke(
            main,
            ["rank", "--root", str(root), "--dataset", dataset_id,
             "--level", "param_config", "--n", "3"],
        )
        assert result.exit_code == 0, result.output
        lines = result.output.splitlines()
        assert lines[0] == "rank,entity_id,score"
        assert len(lines) == 4
        # best config is cfg5 by construction
        assert natural_uuid("pipeline_params", "pipe", "cfg5") in lines[1]

    def test_variability_outputs_table(self, tmp_path, runner):
        root = seeded_root(tmp_path, runner)
        result = runner.invoke(
            main,
            ["variability", "--root", str(root), "--mode", "dataset_configs",
             "--top-ns", "5"],
        )
        assert result.exit_code == 0, result.output
        assert result.output.splitlines()[0] == "rankings_tested,top_5"

    def test_regret_outputs_long_csv(self, tmp_path, runner):
        root = seeded_root(tmp_path, runner)
        out = tmp_path / "regret.csv"
        result = runner.invoke(
            main,
            ["regret", "--root", str(root), "--recommender", "greedy", "--t", "3",
             "--out", str(out)],
        )
        assert result.exit_code == 0, result.output
        lines = out.read_text().splitlines()
        assert lines[0] == "dataset_id,source,iteration,regret"
        assert len(lines) == 1 + 4 * 2 * 3

    def test_recommend_from_meta_features_file(self, tmp_path, runner):
        root = seeded_root(tmp_path, runner)
        mf = tmp_path / "query.json"
        mf.write_text(json.dumps({"n_instances": 101.0, "n_features": 10.0}))
        result = runner.invoke(
            main,
            ["recommend", "--root", str(root), "--meta-features", str(mf),
             "--k", "2", "--budget", "3"],
        )
        assert result.exit_code == 0, result.output
        proposals = json.loads(result.output)
        assert len(proposals) == 3
        assert {"pipeline_id", "pipeline_params_id", "expected_score"} <= set(proposals[0])

    def test_determinism_of_analysis_commands(self, tmp_path, runner):
        root = seeded_root(tmp_path, runner)
        dataset_id = natural_uuid("dataset", "ds1")
        args = ["rank", "--root", str(root), "--dataset", dataset_id, "--n", "5"]
        assert runner.invoke(main, args).output == runner.invoke(main, args).output
