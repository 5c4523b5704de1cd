import json

import pytest

from attnedit.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_generate_to_stdout(capsys):
    code, out, _ = run_cli(capsys, "--seed", "3", "generate", "--prompt", "jazz piano")
    assert code == 0
    grid = json.loads(out)["grid"]
    assert (grid["K"], grid["M"], grid["T"]) == (2, 64, 64)


def test_edit_and_eval(capsys, tmp_path):
    code, out, _ = run_cli(capsys, "--out", str(tmp_path), "edit", "--source", "acoustic guitar solo",
                           "--target", "electric guitar solo", "--edit", "replace", "--blend", "soft")
    assert code == 0
    metrics = json.loads(out)["metrics"]
    code, out, _ = run_cli(capsys, "eval", "--source-grid", str(tmp_path / "source_grid.json"),
                           "--edited-grid", str(tmp_path / "edited_grid.json"),
                           "--source-prompt", "acoustic guitar solo", "--target-prompt", "electric guitar solo")
    assert code == 0
    assert json.loads(out)["metrics"] == metrics


def test_reweight_edit(capsys):
    code, out, _ = run_cli(capsys, "edit", "--source", "joyful brass fanfare", "--edit", "reweight",
                           "--j-star-token", "joyful", "--c", "1")
    assert code == 0
    m = json.loads(out)["metrics"]
    assert m["melody_accuracy"] == 1.0 and m["a2a_similarity"] == pytest.approx(1.0)


def test_errors_are_json(capsys, tmp_path):
    code, _, err = run_cli(capsys, "edit", "--source", "jazz piano", "--target", "jazz piano trio", "--edit", "replace")
    assert code == 1
    assert json.loads(err)["error"] == "ValueError"
    code, _, err = run_cli(capsys, "nonsense")
    assert code == 2 and json.loads(err)["error"] == "UsageError"
    code, _, err = run_cli(capsys, "--config", str(tmp_path / "nope.txt"), "generate", "--prompt", "x")
    assert code == 1 and json.loads(err)["error"] == "FileNotFoundError"


def test_dataset_commands(capsys, tmp_path):
    cfg = tmp_path / "small.cfg"
    cfg.write_text("T = 12\nM = 16\nd_model = 32\nn_heads = 2\nn_layers = 2\n")
    common = ["--config", str(cfg), "--out", str(tmp_path)]
    code, out, _ = run_cli(capsys, *common, "run-dataset", "--limit", "2", "--seeds", "1,2")
    assert code == 0 and json.loads(out)["records"] == 4
    assert (tmp_path / "records.jsonl").read_text().count("\n") == 4
    code, out, _ = run_cli(capsys, *common, "compare-blending", "--limit", "1", "--seeds", "1")
    assert code == 0 and set(json.loads(out)) == {"hard", "soft"}
    assert (tmp_path / "blending.csv").exists()
    code, out, _ = run_cli(capsys, *common, "sweep-strength", "--limit", "1", "--seeds", "1", "--strengths", "0,1")
    res = json.loads(out)
    assert code == 0 and len(res["rows"]) == 2 and res["rows"][-1][1:] == res["free"]
    code, out, _ = run_cli(capsys, *common, "dump-attn", "--prompt", "jazz piano", "--heatmap")
    assert code == 0 and (tmp_path / "heatmap.csv").exists()
    assert json.loads(out)["rows"] == 13 * 2 * 2 * 2


def test_python_backend_flag(capsys):
    from attnedit import _backend

    active = _backend.kernels.BACKEND
    try:
        code, out, _ = run_cli(capsys, "--backend", "python", "generate", "--prompt", "jazz piano")
    finally:
        _backend.use(active)
    assert code == 0 and json.loads(out)["grid"]["T"] == 64
