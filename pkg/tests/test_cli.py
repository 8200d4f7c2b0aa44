import json
import subprocess
import sys

import pytest

from stancekit.cli import main
from stancekit.corpus import load_gold_labels
from stancekit.evalkit import read_predictions_tsv, read_report_csv


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    base = ["--accounts-per-side", "20", "--polarization", "1.0",
            "--tweets-per-user", "5:15", "--vocab-per-side", "60"]
    assert run("synth", "--out-dir", root / "train", "--users-per-side", "40",
               "--seed", "21", *base) == 0
    assert run("synth", "--out-dir", root / "test", "--users-per-side", "10",
               "--seed", "22", "--timeline-tweets", "10:10", *base) == 0
    return root


# ---------------------------------------------------------------- synth

def test_synth_writes_corpus_files(workspace):
    train = workspace / "train"
    assert (train / "tweets.jsonl").exists()
    gold = load_gold_labels(train / "gold.tsv")
    assert len(gold) == 80 and sum(gold.values()) == 40
    assert not (train / "timeline.jsonl").exists()
    assert (workspace / "test" / "timeline.jsonl").exists()


def test_synth_rejects_bad_count_spec(tmp_path, capsys):
    with pytest.raises(SystemExit) as err:
        run("synth", "--out-dir", tmp_path, "--tweets-per-user", "5")
    assert err.value.code == 2
    assert "LO:HI" in capsys.readouterr().err


# ---------------------------------------------------------------- classify

def test_classify_evaluate_report_chain(workspace, capsys):
    train, test = workspace / "train", workspace / "test"
    pred = workspace / "pred_svm.tsv"
    assert run("classify", "--method", "SVM_RT",
               "--train-tweets", train / "tweets.jsonl",
               "--train-labels", train / "gold.tsv",
               "--test-tweets", test / "tweets.jsonl",
               "--out", pred) == 0
    predictions = read_predictions_tsv(pred)
    assert len(predictions) == 20
    assert set(predictions.values()) <= {0, 1}

    row_csv = workspace / "row_svm.csv"
    assert run("evaluate", "--predictions", pred, "--gold", test / "gold.tsv",
               "--topic", "demo", "--method", "SVM_RT", "--out", row_csv,
               "--json", workspace / "row_svm.json") == 0
    out = capsys.readouterr().out
    assert "SVM_RT/none: A=100.0" in out
    rows = read_report_csv(row_csv)
    assert len(rows) == 1 and rows[0].accuracy == 100.0
    payload = json.loads((workspace / "row_svm.json").read_text())
    assert payload[0]["coverage"] == 100.0

    second = workspace / "row_svm2.csv"
    assert run("evaluate", "--predictions", pred, "--gold", test / "gold.tsv",
               "--topic", "demo", "--method", "SVM_RT", "--condition", "test",
               "--out", second) == 0
    merged = workspace / "merged.csv"
    assert run("report", "--rows", row_csv, second, "--out", merged,
               "--json", workspace / "merged.json") == 0
    out = capsys.readouterr().out
    assert "SVM_RT (2 rows): A=100.0+-0.0" in out
    assert len(read_report_csv(merged)) == 2


def test_classify_expand_test_uses_timeline(workspace):
    train, test = workspace / "train", workspace / "test"
    pred = workspace / "pred_expand.tsv"
    assert run("classify", "--method", "SVM_RT",
               "--train-tweets", train / "tweets.jsonl",
               "--train-labels", train / "gold.tsv",
               "--test-tweets", test / "tweets.jsonl",
               "--test-timeline", test / "timeline.jsonl",
               "--expand-test", "--out", pred) == 0
    assert len(read_predictions_tsv(pred)) == 20


def test_classify_expand_without_timeline_fails_cleanly(workspace, capsys):
    train, test = workspace / "train", workspace / "test"
    code = run("classify", "--method", "SVM_RT",
               "--train-tweets", train / "tweets.jsonl",
               "--train-labels", train / "gold.tsv",
               "--test-tweets", test / "tweets.jsonl",
               "--expand-train", "--out", workspace / "nope.tsv")
    assert code == 1
    assert "expand_train is set" in capsys.readouterr().err


def test_classify_unsupervised_batched(workspace):
    train, test = workspace / "train", workspace / "test"
    pred = workspace / "pred_unsup.tsv"
    assert run("classify", "--method", "UNSUPERVISED", "--batched",
               "--train-tweets", train / "tweets.jsonl",
               "--train-labels", train / "gold.tsv",
               "--test-tweets", test / "tweets.jsonl",
               "--out", pred) == 0
    predictions = read_predictions_tsv(pred)
    assert len(predictions) == 20
    gold = load_gold_labels(test / "gold.tsv")
    assigned = {uid: label for uid, label in predictions.items() if label != -1}
    assert len(assigned) >= 10  # small train set leaves some users outside clusters
    hits = sum(gold[uid] == label for uid, label in assigned.items())
    assert hits / len(assigned) >= 0.9


def test_classify_external_needs_scores(workspace):
    train, test = workspace / "train", workspace / "test"
    with pytest.raises(SystemExit, match="--scores is required"):
        run("classify", "--method", "EXTERNAL",
            "--train-tweets", train / "tweets.jsonl",
            "--train-labels", train / "gold.tsv",
            "--test-tweets", test / "tweets.jsonl",
            "--out", workspace / "nope.tsv")


def test_missing_required_flags_exit_2(workspace, capsys):
    with pytest.raises(SystemExit) as err:
        run("classify", "--method", "SVM_RT")
    assert err.value.code == 2
    message = capsys.readouterr().err
    assert "--train-tweets" in message and "--out" in message


def test_missing_input_file_fails_cleanly(workspace, capsys):
    code = run("bootstrap", "--tweets", workspace / "missing.jsonl",
               "--out", workspace / "nope.tsv")
    assert code == 1
    assert "missing.jsonl" in capsys.readouterr().err


# ---------------------------------------------------------------- bootstrap

def test_bootstrap_writes_pseudo_labels(tmp_path):
    assert run("synth", "--out-dir", tmp_path, "--users-per-side", "60",
               "--accounts-per-side", "20", "--polarization", "0.95",
               "--tweets-per-user", "5:15", "--vocab-per-side", "60",
               "--seed", "31") == 0
    out = tmp_path / "pseudo.tsv"
    assert run("bootstrap", "--tweets", tmp_path / "tweets.jsonl",
               "--out", out, "--n-active", "120", "--min-tweets", "3",
               "--per-cluster", "30", "--seed", "1") == 0
    pseudo = load_gold_labels(out)
    assert len(pseudo) == 60
    assert set(pseudo.values()) == {0, 1}


# ---------------------------------------------------------------- config file

def test_config_file_supplies_defaults_and_flags_win(tmp_path):
    config = tmp_path / "synth.conf"
    config.write_text(
        "# generator settings\n"
        "users-per-side = 10\n"
        "accounts_per_side = 8\n"
        "polarization = 0.9\n"
        "tweets-per-user = 3:6\n"
        "vocab-per-side = 30\n"
        "seed = 3\n")
    a, b, c, d = (tmp_path / name for name in "abcd")
    assert run("synth", "--config", config, "--out-dir", a) == 0
    assert run("synth", "--out-dir", b, "--users-per-side", "10",
               "--accounts-per-side", "8", "--polarization", "0.9",
               "--tweets-per-user", "3:6", "--vocab-per-side", "30",
               "--seed", "3") == 0
    assert (a / "tweets.jsonl").read_bytes() == (b / "tweets.jsonl").read_bytes()
    assert (a / "gold.tsv").read_bytes() == (b / "gold.tsv").read_bytes()

    # an explicit flag overrides the config value
    assert run("synth", "--config", config, "--out-dir", c, "--seed", "4") == 0
    assert (c / "tweets.jsonl").read_bytes() != (a / "tweets.jsonl").read_bytes()
    assert run("synth", "--out-dir", d, "--users-per-side", "10",
               "--accounts-per-side", "8", "--polarization", "0.9",
               "--tweets-per-user", "3:6", "--vocab-per-side", "30",
               "--seed", "4") == 0
    assert (c / "tweets.jsonl").read_bytes() == (d / "tweets.jsonl").read_bytes()


def test_config_rejects_unknown_keys(tmp_path, capsys):
    config = tmp_path / "bad.conf"
    config.write_text("users-per-side = 10\nwarp-drive = 9\n")
    with pytest.raises(SystemExit) as err:
        run("synth", "--config", config, "--out-dir", tmp_path / "out")
    assert err.value.code == 2
    assert "warp_drive" in capsys.readouterr().err


def test_config_boolean_parsing(workspace, tmp_path, capsys):
    config = tmp_path / "clf.conf"
    config.write_text("method = SVM_RT\nexpand-train = yes\n")
    train, test = workspace / "train", workspace / "test"
    code = run("classify", "--config", config,
               "--train-tweets", train / "tweets.jsonl",
               "--train-labels", train / "gold.tsv",
               "--test-tweets", test / "tweets.jsonl",
               "--out", tmp_path / "nope.tsv")
    assert code == 1  # boolean came through; train corpus has no timeline
    assert "expand_train is set" in capsys.readouterr().err


# ---------------------------------------------------------------- subprocess

def test_module_entry_point_smoke(tmp_path):
    result = subprocess.run(
        [sys.executable, "-m", "stancekit.cli", "synth", "--out-dir", str(tmp_path),
         "--users-per-side", "5", "--accounts-per-side", "4",
         "--tweets-per-user", "2:3", "--vocab-per-side", "20", "--seed", "0"],
        capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    assert "wrote" in result.stdout
    assert (tmp_path / "tweets.jsonl").exists()
