"""Page retrieval and multimodal question answering over product manuals."""

from .corpus import (
    BBox,
    Corpus,
    CorpusError,
    CorpusValidationError,
    Manual,
    MultimodalAnswer,
    Page,
    QAPair,
    Region,
    SemanticLabel,
    StatsReport,
    Word,
    corpus_stats,
    filter_single_page_qas,
    load_corpus,
    save_corpus,
    split_view,
)
from .evaluation import (
    MetricReport,
    evaluate_cascade,
    evaluate_separate,
    region_prf,
    report_by_region_label,
    weighted_recall_at_k,
)
from .features import Featurizer, encode_page, encode_question, extract_roi_feature
from .model import Model, ModelConfig, init_params
from .qa import answer_multimodal, answer_textual, answer_visual, bce_region_loss
from .retrieval import (
    PageIndex,
    RetrievalConfig,
    RetrievalResult,
    build_index,
    encode_global,
    nce_loss,
    retrieve,
    score_pair,
)
from .synth import generate_synthetic
from .train import TrainConfig, TrainResult, fit, make_batches, train_step
from .vocab import Vocabulary, build_vocab

__version__ = "0.1.0"

__all__ = [
    "BBox",
    "Corpus",
    "CorpusError",
    "CorpusValidationError",
    "Featurizer",
    "Manual",
    "MetricReport",
    "Model",
    "ModelConfig",
    "MultimodalAnswer",
    "Page",
    "PageIndex",
    "QAPair",
    "Region",
    "RetrievalConfig",
    "RetrievalResult",
    "SemanticLabel",
    "StatsReport",
    "TrainConfig",
    "TrainResult",
    "Vocabulary",
    "Word",
    "answer_multimodal",
    "answer_textual",
    "answer_visual",
    "bce_region_loss",
    "build_index",
    "build_vocab",
    "corpus_stats",
    "encode_global",
    "encode_page",
    "encode_question",
    "evaluate_cascade",
    "evaluate_separate",
    "extract_roi_feature",
    "filter_single_page_qas",
    "fit",
    "generate_synthetic",
    "init_params",
    "load_corpus",
    "make_batches",
    "nce_loss",
    "region_prf",
    "report_by_region_label",
    "retrieve",
    "save_corpus",
    "score_pair",
    "split_view",
    "train_step",
    "weighted_recall_at_k",
]
