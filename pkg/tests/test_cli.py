"""CLI: subcommand plumbing, exit codes, determinism of the full pipeline."""

import json

import pytest

from manualqa.cli import main


@pytest.fixture(scope="module")
def pipeline_dirs(tmp_path_factory):
    """synth -> train -> index once; reused across CLI tests."""
    root = tmp_path_factory.mktemp("cli")
    corpus = root / "corpus"
    ckpt = root / "ckpt"
    assert main(["synth", "--out", str(corpus), "--seed", "7",
                 "--manuals", "3", "--pages", "3", "--qas", "1"]) == 0
    cfg = root / "train.cfg"
    cfg.write_text(
        "\n".join(
            [
                "epochs = 2",
                "batch_size = 4",
                "learning_rate = 0.001",
                "max_steps = 4",
                "eval_every = 1",
                "seed = 0",
            ]
        )
    )
    assert main(["train", "--corpus", str(corpus), "--checkpoint-dir", str(ckpt),
                 "--config", str(cfg), "--quiet"]) == 0
    index = root / "pages.idx"
    assert main(["index", "--corpus", str(corpus), "--checkpoint", str(ckpt / "best.ckpt"),
                 "--out", str(index)]) == 0
    return {"root": root, "corpus": corpus, "ckpt": ckpt / "best.ckpt", "index": index,
            "config": cfg}


class TestSubcommands:
    def test_unknown_command_usage_exit_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
        assert "usage" in capsys.readouterr().err.lower()

    def test_stats_counts_match_synth(self, pipeline_dirs, capsys):
        assert main(["stats", "--corpus", str(pipeline_dirs["corpus"])]) == 0
        report = json.loads(capsys.readouterr().out)
        assert report["n_manuals"] == 3
        assert report["n_pages"] == 9
        assert report["n_qas"] == 9

    def test_retrieve_prints_ranked_pages(self, pipeline_dirs, capsys):
        code = main(["retrieve", "--corpus", str(pipeline_dirs["corpus"]),
                     "--checkpoint", str(pipeline_dirs["ckpt"]),
                     "--index", str(pipeline_dirs["index"]),
                     "--question", "how do i reset", "--manual", "m0", "--top-k", "3"])
        assert code == 0
        lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
        assert len(lines) == 3
        assert all(l.startswith("m0\tpage ") for l in lines)

    def test_answer_emits_json(self, pipeline_dirs, capsys):
        code = main(["answer", "--corpus", str(pipeline_dirs["corpus"]),
                     "--checkpoint", str(pipeline_dirs["ckpt"]),
                     "--manual", "m0", "--page", "0",
                     "--question", "how do i reset"])
        assert code == 0
        body = json.loads(capsys.readouterr().out)
        assert {"answer_text", "regions", "manual_id", "page_index"} <= set(body)

    def test_eval_writes_report(self, pipeline_dirs, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["eval", "--corpus", str(pipeline_dirs["corpus"]),
                     "--checkpoint", str(pipeline_dirs["ckpt"]),
                     "--setting", "separate", "--split", "train",
                     "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["setting"] == "separate"
        assert "retrieval" in report and "text" in report

    def test_runtime_error_exits_1(self, pipeline_dirs, capsys):
        code = main(["stats", "--corpus", str(pipeline_dirs["root"] / "missing")])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_import_subcommand(self, tmp_path, capsys):
        src = tmp_path / "release"
        (src / "mX").mkdir(parents=True)
        (src / "manuals.json").write_text(json.dumps([{"id": "mX", "brand": "b", "category": "c"}]))
        annotation = {
            "pages": [
                {
                    "width": 100,
                    "height": 100,
                    "regions": [
                        {
                            "category": "Text",
                            "bbox": [5, 5, 90, 40],
                            "words": [{"text": "hello", "bbox": [6, 6, 30, 38]}],
                        }
                    ],
                }
            ],
            "qas": [
                {"question": "say hi", "answer": "hello", "answer_regions": [[0, 0]]}
            ],
        }
        (src / "mX" / "annotation.json").write_text(json.dumps(annotation))
        out = tmp_path / "imported"
        assert main(["import", "--src", str(src), "--out", str(out)]) == 0
        import manualqa as mq

        corpus = mq.load_corpus(out)
        assert corpus.n_qas == 1
        assert corpus.manuals[0].pages[0].regions[0].label.value == "Text"


class TestCascadeFileDiff:
    def test_cascade_equals_separate_under_a_perfect_retriever(
        self, retrieval_overfit, corpus_dir, tmp_path
    ):
        """With train R@1 = 1.0, `eval --setting cascade --top-k 1` emits the
        same measurements as `eval --setting separate` (file diff modulo the
        setting tag, which names the setting by construction)."""
        ckpt = retrieval_overfit.checkpoint_path
        index = tmp_path / "pages.idx"
        assert main(["index", "--corpus", str(corpus_dir), "--checkpoint", str(ckpt),
                     "--out", str(index), "--split", "train"]) == 0
        reports = {}
        for setting in ("separate", "cascade"):
            out = tmp_path / f"{setting}.json"
            assert main(["eval", "--corpus", str(corpus_dir), "--checkpoint", str(ckpt),
                         "--setting", setting, "--split", "train", "--top-k", "1",
                         "--index", str(index), "--out", str(out)]) == 0
            reports[setting] = json.loads(out.read_text())
        assert reports["separate"].pop("setting") == "separate"
        assert reports["cascade"].pop("setting") == "cascade"
        assert reports["separate"] == reports["cascade"]

    def test_top_k_other_than_one_rejected(self, pipeline_dirs, capsys):
        code = main(["eval", "--corpus", str(pipeline_dirs["corpus"]),
                     "--checkpoint", str(pipeline_dirs["ckpt"]),
                     "--setting", "cascade", "--split", "train", "--top-k", "3"])
        assert code == 1
        assert "top-1" in capsys.readouterr().err


class TestDeterminism:
    def test_synth_twice_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main(["synth", "--out", str(out), "--seed", "5",
                         "--manuals", "2", "--pages", "2", "--qas", "1"]) == 0
        for rel in sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file()):
            assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
