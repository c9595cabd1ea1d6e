"""Release-tree import adapter: documented layout, label aliases, env-gated
checks against the real released data when available."""

import json
import os
from pathlib import Path

import pytest

import manualqa as mq
from manualqa.corpus import CorpusError
from manualqa.release_import import import_release

RELEASE_DIR_VAR = "MANUALQA_RELEASE_DIR"


def write_release_tree(root: Path):
    (root / "m1").mkdir(parents=True)
    (root / "m2").mkdir()
    (root / "manuals.json").write_text(
        json.dumps(
            [
                {"id": "m1", "brand": "acme", "category": "camera"},
                {"id": "m2", "brand": "orbit", "category": "router"},
            ]
        )
    )
    (root / "splits.json").write_text(json.dumps({"train": ["m1"], "test": ["m2"]}))
    annotation = {
        "pages": [
            {
                "width": 200,
                "height": 300,
                "regions": [
                    {
                        "category": "Title",
                        "bbox": [10, 10, 190, 40],
                        "words": [{"text": "setup", "bbox": [12, 12, 60, 38]}],
                    },
                    {
                        "category": "Product image",  # alias with a space
                        "bbox": [10, 50, 190, 150],
                        "words": [],
                    },
                    {
                        "category": "text",  # lowercase alias
                        "bbox": [10, 160, 190, 290],
                        "words": [
                            {"text": "press", "bbox": [12, 165, 60, 200]},
                            {"text": "here", "bbox": [70, 165, 120, 200]},
                        ],
                    },
                ],
            }
        ],
        "qas": [
            {
                "question": "where do i press",
                "answer": "press here",
                "answer_regions": [[0, 2]],
            }
        ],
    }
    (root / "m1" / "annotation.json").write_text(json.dumps(annotation))
    (root / "m2" / "annotation.json").write_text(json.dumps(annotation))


class TestImportAdapter:
    def test_counts_labels_and_splits(self, tmp_path):
        write_release_tree(tmp_path)
        corpus = import_release(tmp_path)
        assert len(corpus.manuals) == 2
        assert corpus.n_qas == 2
        assert corpus.split_assignment == {"m1": "train", "m2": "test"}
        labels = [r.label.value for r in corpus.manuals[0].pages[0].regions]
        assert labels == ["Title", "ProductImage", "Text"]

    def test_round_trips_through_native_format(self, tmp_path):
        write_release_tree(tmp_path / "src")
        corpus = import_release(tmp_path / "src")
        mq.save_corpus(corpus, tmp_path / "native")
        assert mq.load_corpus(tmp_path / "native") == corpus

    def test_out_of_range_region_reference_rejected(self, tmp_path):
        write_release_tree(tmp_path)
        annotation = json.loads((tmp_path / "m1" / "annotation.json").read_text())
        annotation["qas"][0]["answer_regions"] = [[0, 99]]
        (tmp_path / "m1" / "annotation.json").write_text(json.dumps(annotation))
        with pytest.raises(CorpusError, match="out of range"):
            import_release(tmp_path)

    def test_unknown_category_rejected(self, tmp_path):
        write_release_tree(tmp_path)
        annotation = json.loads((tmp_path / "m1" / "annotation.json").read_text())
        annotation["pages"][0]["regions"][0]["category"] = "Banner"
        (tmp_path / "m1" / "annotation.json").write_text(json.dumps(annotation))
        with pytest.raises(CorpusError, match="unknown region category"):
            import_release(tmp_path)

    def test_boxes_clamped_into_page(self, tmp_path):
        write_release_tree(tmp_path)
        annotation = json.loads((tmp_path / "m1" / "annotation.json").read_text())
        annotation["pages"][0]["regions"][0]["bbox"] = [-5, -5, 10_000, 10_000]
        (tmp_path / "m1" / "annotation.json").write_text(json.dumps(annotation))
        corpus = import_release(tmp_path)
        box = corpus.manuals[0].pages[0].regions[0].box
        assert box.x0 >= 0 and box.x1 <= 200 and box.y1 <= 300


needs_release = pytest.mark.skipif(
    RELEASE_DIR_VAR not in os.environ,
    reason=f"set {RELEASE_DIR_VAR} to the released dataset to enable",
)


@needs_release
class TestReleasedDataset:
    """Checked only when the full released dataset is mounted."""

    @pytest.fixture(scope="class")
    def released(self):
        return import_release(os.environ[RELEASE_DIR_VAR])

    def test_released_scale(self, released):
        assert len(released.manuals) == 209
        assert released.n_qas == 22021

    def test_split_sizes(self, released):
        train = mq.split_view(released, "train")
        assert len(train.manuals) == 146
        assert train.n_pages == 7004
        assert train.n_qas == 15839

    def test_single_page_filter_keeps_21670(self, released):
        assert mq.filter_single_page_qas(released).n_qas == 21670

    def test_corpus_statistics_scale(self, released):
        stats = mq.corpus_stats(released)
        assert stats.pct_unique_questions == pytest.approx(98.46, abs=0.2)
        assert stats.mean_answer_len == pytest.approx(15.74, abs=0.5)
        assert stats.mean_page_len == pytest.approx(231.36, abs=5.0)
