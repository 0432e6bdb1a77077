import json

import pytest
from click.testing import CliRunner

from sgir.cli import main


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Scenes file and index produced through the CLI itself."""
    root = tmp_path_factory.mktemp("cli")
    scenes = str(root / "scenes.json")
    index = str(root / "index.json")
    runner = CliRunner()
    r = runner.invoke(
        main, ["make-scenes", "--output", scenes, "--num-scenes", "30", "--seed", "4"]
    )
    assert r.exit_code == 0, r.output
    r = runner.invoke(
        main,
        ["build-index", "--scenes", scenes, "--index", index, "--embedding-dim", "16"],
    )
    assert r.exit_code == 0, r.output
    return scenes, index


def test_make_scenes_reports_count(runner, tmp_path):
    out = str(tmp_path / "s.json")
    r = runner.invoke(main, ["make-scenes", "--output", out, "--num-scenes", "5"])
    assert r.exit_code == 0, r.output
    assert "wrote 5 scenes" in r.output
    doc = json.loads(open(out).read())
    assert len(doc["scenes"]) == 5


def test_build_index_output(workspace):
    _, index = workspace
    assert json.loads(open(index).read())["version"] == 1


def test_parse_caption_prints_graph(runner):
    r = runner.invoke(
        main,
        ["parse-caption", "--caption", "there is a red cube left of a blue sphere",
         "--embedding-dim", "16"],
    )
    assert r.exit_code == 0, r.output
    graph = json.loads(r.output)
    assert [n["known_attributes"] for n in graph["nodes"]] == [
        {"color": "red", "shape": "cube"},
        {"color": "blue", "shape": "sphere"},
    ]
    assert graph["triples"] == [[0, "left", 1]]


def test_parse_caption_bad_token_exits_3(runner):
    r = runner.invoke(main, ["parse-caption", "--caption", "there is a frob"])
    assert r.exit_code == 3
    assert "CaptionParseError" in r.output


def test_retrieve_ranks_images(runner, workspace, tmp_path):
    _, index = workspace
    out = str(tmp_path / "result.json")
    r = runner.invoke(
        main,
        ["retrieve", "--index", index, "--caption", "there is a cube",
         "--top-k", "3", "--output", out],
    )
    assert r.exit_code == 0, r.output
    lines = r.output.strip().split("\n")
    assert len(lines) == 3
    assert lines[0].split("\t")[0] == "1"
    saved = json.loads(open(out).read())
    assert len(saved["results"]) == 3


def test_retrieve_missing_index_exits_3(runner, tmp_path):
    r = runner.invoke(
        main,
        ["retrieve", "--index", str(tmp_path / "none.json"), "--caption", "there is a cube"],
    )
    assert r.exit_code == 3


def test_usage_error_exits_2(runner):
    r = runner.invoke(main, ["retrieve"])  # missing required options
    assert r.exit_code == 2


def test_train_writes_params(runner, workspace, tmp_path):
    scenes, index = workspace
    params = str(tmp_path / "params.json")
    r = runner.invoke(
        main,
        ["train", "--scenes", scenes, "--index", index, "--params", params,
         "--num-examples", "10", "--epochs", "2"],
    )
    assert r.exit_code == 0, r.output
    assert r.output.count("epoch ") == 2
    artifact = json.loads(open(params).read())
    assert set(artifact) == {"config", "metrics", "params"}


def test_eval_prints_table(runner, workspace, tmp_path):
    scenes, index = workspace
    out = str(tmp_path / "eval.json")
    r = runner.invoke(
        main,
        ["eval", "--scenes", scenes, "--index", index,
         "--drop-fractions", "0,0.2", "--queries-per-fraction", "15",
         "--seed", "2", "--output", out],
    )
    assert r.exit_code == 0, r.output
    lines = r.output.strip().split("\n")
    assert lines[0].startswith("drop_fraction")
    assert len(lines) == 3
    assert "reports" in json.loads(open(out).read())


def test_eval_rerun_is_byte_identical(runner, workspace, tmp_path):
    scenes, index = workspace
    args = ["eval", "--scenes", scenes, "--index", index,
            "--drop-fractions", "0.2", "--queries-per-fraction", "10", "--seed", "6"]
    outs = []
    for name in ("a.json", "b.json"):
        path = str(tmp_path / name)
        r = runner.invoke(main, args + ["--output", path])
        assert r.exit_code == 0, r.output
        outs.append(open(path, "rb").read().replace(path.encode(), b"P"))
    assert outs[0] == outs[1]


def test_eval_bad_fractions_exits_3(runner, workspace):
    scenes, index = workspace
    r = runner.invoke(
        main,
        ["eval", "--scenes", scenes, "--index", index, "--drop-fractions", "0.2,x"],
    )
    assert r.exit_code == 3
