"""CLI tests: workflow, exit codes, defaults in --help, determinism."""

import hashlib

import pytest
from click.testing import CliRunner

from rankfuse.cli import main


def sha256(path):
    return hashlib.sha256(open(path, "rb").read()).hexdigest()


@pytest.fixture()
def runner():
    return CliRunner()


def generate(runner, tmp_path, name="data", seed=5, extra=()):
    out = str(tmp_path / name)
    result = runner.invoke(
        main,
        ["gen", "--out-dir", out, "--n-items", "60", "--clusters", "4", "--seed", str(seed), *extra],
    )
    assert result.exit_code == 0, result.output
    return out


def train(runner, tmp_path, data_dir, name="model", loss="augmented-triplet", seed=1, extra=()):
    out = str(tmp_path / name)
    result = runner.invoke(
        main,
        [
            "train",
            "--data-dir", data_dir,
            "--out-dir", out,
            "--loss", loss,
            "--epochs", "2",
            "--learning-rate", "0.01",
            "--batch-size", "8",
            "--embed-dim", "8",
            "--seed", str(seed),
            *extra,
        ],
    )
    assert result.exit_code == 0, result.output
    return out, result


class TestWorkflow:
    def test_full_pipeline(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        model_dir, _ = train(runner, tmp_path, data)
        eval_dir = str(tmp_path / "eval")
        result = runner.invoke(
            main,
            [
                "eval",
                "--checkpoint", f"{model_dir}/checkpoint.rfmd",
                "--data-dir", data,
                "--out-dir", eval_dir,
                "--split", "validation",
            ],
        )
        assert result.exit_code == 0, result.output
        assert "ndcg_avg" in result.output
        result = runner.invoke(
            main,
            [
                "ensemble",
                f"{eval_dir}/similarity.rfsm",
                "--annotations", f"{data}/annotations.jsonl",
                "--out-dir", str(tmp_path / "ens"),
            ],
        )
        assert result.exit_code == 0, result.output
        assert "map_avg" in result.output

    def test_gen_item_count_flag(self, runner, tmp_path):
        out = str(tmp_path / "d400")
        result = runner.invoke(
            main, ["gen", "--out-dir", out, "--n-items", "400", "--clusters", "8"]
        )
        assert result.exit_code == 0
        assert "wrote 400 items" in result.output
        with open(f"{out}/annotations.jsonl") as handle:
            assert sum(1 for _ in handle) == 400

    def test_train_reports_subset_size(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        _, result = train(runner, tmp_path, data, extra=("--subset-fraction", "0.25"))
        # ceil(0.25 * 42 train items) = 11
        assert "trained on 11 items" in result.output


class TestDeterminism:
    def test_same_seed_identical_checkpoints(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        dir_a, _ = train(runner, tmp_path, data, name="a", seed=7)
        dir_b, _ = train(runner, tmp_path, data, name="b", seed=7)
        assert sha256(f"{dir_a}/checkpoint.rfmd") == sha256(f"{dir_b}/checkpoint.rfmd")
        assert sha256(f"{dir_a}/history.tsv") == sha256(f"{dir_b}/history.tsv")

    def test_different_seed_differs(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        dir_a, _ = train(runner, tmp_path, data, name="a", seed=7)
        dir_b, _ = train(runner, tmp_path, data, name="b", seed=8)
        assert sha256(f"{dir_a}/checkpoint.rfmd") != sha256(f"{dir_b}/checkpoint.rfmd")

    def test_gen_same_seed_identical_files(self, runner, tmp_path):
        a = generate(runner, tmp_path, name="a", seed=3)
        b = generate(runner, tmp_path, name="b", seed=3)
        for name in ("annotations.jsonl", "video_features.rfft", "text_features.rfft", "splits.json"):
            assert sha256(f"{a}/{name}") == sha256(f"{b}/{name}")


class TestExitCodes:
    def test_usage_error_is_2(self, runner, tmp_path):
        result = runner.invoke(main, ["train", "--loss", "bogus"])
        assert result.exit_code == 2

    def test_missing_data_dir_is_4(self, runner, tmp_path):
        result = runner.invoke(
            main,
            [
                "train",
                "--data-dir", str(tmp_path / "nope"),
                "--out-dir", str(tmp_path / "out"),
                "--loss", "neural-ndcg",
            ],
        )
        assert result.exit_code == 4

    def test_corrupt_input_is_3(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        bad = tmp_path / "bad.rfsm"
        bad.write_bytes(b"garbage")
        result = runner.invoke(
            main,
            [
                "ensemble",
                str(bad),
                "--annotations", f"{data}/annotations.jsonl",
                "--out-dir", str(tmp_path / "ens"),
            ],
        )
        assert result.exit_code == 3

    def test_success_is_0(self, runner, tmp_path):
        generate(runner, tmp_path)


class TestHelpDefaults:
    def test_train_help_lists_reference_defaults(self, runner):
        result = runner.invoke(main, ["train", "--help"])
        assert result.exit_code == 0
        text = " ".join(result.output.split())  # undo terminal line wrapping
        for expected in (
            "[default: 50]",        # epochs
            "[default: 0.0001]",    # learning rate
            "[default: 64]",        # batch size
            "[default: 0.25]",      # subset fraction
            "[default: (0.2)]",     # margin
            "[default: (0.15)]",    # relevance threshold
            "[default: (1.0)]",     # augmentation probability
        ):
            assert expected in text, f"missing {expected}"
        for flag in (
            "--loss", "--epochs", "--learning-rate", "--batch-size", "--embed-dim",
            "--seed", "--subset-fraction", "--margin", "--relevance-threshold",
            "--mining", "--no-relevant-positives", "--augment-probability",
            "--partner-threshold", "--mix-low", "--mix-high", "--tau",
            "--sinkhorn-iters", "--sinkhorn-eps", "--ndcg-cutoff", "--gain-base",
        ):
            assert flag in text, f"missing {flag}"

    def test_gen_help_lists_flags(self, runner):
        result = runner.invoke(main, ["gen", "--help"])
        for flag in ("--n-items", "--clusters", "--noise-sigma", "--seed", "--out-dir"):
            assert flag in result.output


class TestFlagCombos:
    def test_margin_with_ndcg_warns_and_ignores(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        _, result = train(
            runner, tmp_path, data, loss="neural-ndcg", extra=("--margin", "0.9")
        )
        assert "--margin has no effect" in result.stderr
        assert result.exit_code == 0

    def test_tau_with_triplet_warns(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        _, result = train(
            runner, tmp_path, data, loss="augmented-triplet", extra=("--tau", "0.5")
        )
        assert "--tau has no effect" in result.stderr

    def test_relevant_flags_pass_through_silently(self, runner, tmp_path):
        data = generate(runner, tmp_path)
        _, result = train(
            runner, tmp_path, data, loss="augmented-triplet", extra=("--margin", "0.3")
        )
        assert result.stderr == ""
