import os

# Pin BLAS/OpenMP thread pools before numpy ever loads so every run is
# single-threaded and bit-reproducible.
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
    os.environ[_var] = "1"

import numpy as np
import pytest

import manualqa as mq
from manualqa.corpus import filter_single_page_qas, split_view
from manualqa.features import Featurizer


@pytest.fixture(scope="session")
def corpus782() -> mq.Corpus:
    """The acceptance corpus: seed 7, 5 manuals x 8 pages x 2 QAs."""
    return mq.generate_synthetic(7, 5, 8, 2)


@pytest.fixture(scope="session")
def corpus_dir(corpus782, tmp_path_factory):
    path = tmp_path_factory.mktemp("corpus782")
    mq.save_corpus(corpus782, path)
    return path


@pytest.fixture(scope="session")
def vocab782(corpus782):
    return mq.build_vocab(corpus782, target_size=512)


@pytest.fixture(scope="session")
def featurizer782(corpus782, vocab782):
    return Featurizer(corpus782, vocab782)


@pytest.fixture(scope="session")
def tiny_model(vocab782):
    model = mq.Model(mq.ModelConfig(vocab_size=len(vocab782)), seed=11)
    return model


def overfit_config(**overrides) -> mq.TrainConfig:
    """Desk-scale overfit settings shared by the training harnesses."""
    base = dict(
        epochs=10_000,
        batch_size=8,
        learning_rate=1e-3,
        tau=0.05,
        seed=0,
        val_split="train",
        eval_every=5,
        weight_decay=0.0,
    )
    base.update(overrides)
    return mq.TrainConfig(**base)


@pytest.fixture(scope="session")
def retrieval_overfit(corpus782):
    """Full multitask overfit run within the 500-step budget.

    Joint training with the QA heads is both the faithful configuration
    (the unified model optimizes all three losses) and the most robust
    desk-scale recipe: across seeds it reaches train R@1 = 1.0 well before
    the step cap, where retrieval-only runs hover near the 0.9 bar.
    """
    config = overfit_config(
        pr=True, ta=True, va=True, batch_size=16, tau=0.03,
        max_steps=500, selection_metric="r1",
    )
    return mq.fit(corpus782, config)


@pytest.fixture(scope="session")
def qa_overfit(corpus782):
    """QA overfit run ({TA, VA}) within the 1000-step budget."""
    config = overfit_config(
        pr=False, pr_global=False, ta=True, va=True,
        max_steps=1000, selection_metric="rougeL+f1",
    )
    return mq.fit(corpus782, config)


@pytest.fixture(scope="session")
def quick_all_tasks(corpus782, tmp_path_factory):
    """A short full-task run producing real artifacts for service/CLI tests."""
    ckpt_dir = tmp_path_factory.mktemp("quick_ckpt")
    config = overfit_config(
        pr=True, ta=True, va=True, max_steps=30, eval_every=1,
        checkpoint_dir=str(ckpt_dir),
    )
    return mq.fit(corpus782, config)


@pytest.fixture(scope="session")
def train_view(corpus782):
    return split_view(filter_single_page_qas(corpus782), "train")


@pytest.fixture(scope="session")
def test_view(corpus782):
    return split_view(corpus782, "test")


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
