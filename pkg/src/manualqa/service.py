"""HTTP inference service over a trained checkpoint and page index.

All state (corpus, vocabulary, model parameters, index) is immutable once
the app is built, so concurrent requests are safe; each request is one
independent inference task. The service refuses to start when the index
was built under a different checkpoint or the vocabulary does not match
the checkpoint's recorded hash.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import qa as qa_mod
from .corpus import Corpus, load_corpus
from .features import Featurizer
from .model import CheckpointError, Model
from .retrieval import PageIndex, retrieve
from .vocab import Vocabulary


@dataclass
class ServiceState:
    corpus: Corpus
    vocab: Vocabulary
    model: Model
    index: PageIndex
    featurizer: Featurizer
    checkpoint_hash: str
    threshold: float = 0.5
    default_top_k: int = 5
    max_answer_len: int = 32


def load_service_state(
    corpus_dir: str | Path,
    checkpoint_path: str | Path,
    index_path: str | Path,
    vocab_path: Optional[str | Path] = None,
    threshold: float = 0.5,
    max_answer_len: int = 32,
) -> ServiceState:
    """Load artifacts and verify they belong together by hash."""
    corpus = load_corpus(corpus_dir)
    vocab_path = Path(vocab_path) if vocab_path else Path(checkpoint_path).parent / "vocab.json"
    vocab = Vocabulary.load(vocab_path)
    model, meta = Model.load_checkpoint(checkpoint_path, expected_vocab_hash=vocab.fingerprint())
    index = PageIndex.load(index_path)
    if index.checkpoint_hash != meta["hash"]:
        raise CheckpointError(
            f"index {index_path} was built under checkpoint {index.checkpoint_hash[:12]}..., "
            f"but {checkpoint_path} hashes to {meta['hash'][:12]}..."
        )
    return ServiceState(
        corpus=corpus,
        vocab=vocab,
        model=model,
        index=index,
        featurizer=Featurizer(corpus, vocab),
        checkpoint_hash=meta["hash"],
        threshold=threshold,
        max_answer_len=max_answer_len,
    )


class AskRequest(BaseModel):
    question: str = Field(min_length=1)
    manual_id: Optional[str] = None
    top_k: Optional[int] = Field(default=None, ge=1)


class RegionOut(BaseModel):
    manual_id: str
    page_index: int
    region_id: str
    label: str
    box: list[float]
    probability: float


class RetrievedPageOut(BaseModel):
    manual_id: str
    page_index: int
    score: float


class AskResponse(BaseModel):
    answer_text: str
    regions: list[RegionOut]
    retrieved_pages: list[RetrievedPageOut]


def create_app(state: ServiceState) -> FastAPI:
    app = FastAPI(title="manualqa", version="0.1.0")

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "checkpoint": state.checkpoint_hash[:12]}

    @app.get("/manuals")
    def manuals():
        return [
            {
                "id": m.id,
                "brand": m.brand,
                "category": m.category,
                "n_pages": len(m.pages),
            }
            for m in state.corpus.manuals
        ]

    @app.get("/manuals/{manual_id}/pages/{page_index}")
    def page_detail(manual_id: str, page_index: int):
        try:
            manual = state.corpus.get_manual(manual_id)
        except Exception:
            raise HTTPException(status_code=404, detail=f"unknown manual {manual_id!r}")
        if not 0 <= page_index < len(manual.pages):
            raise HTTPException(status_code=404, detail=f"manual has {len(manual.pages)} pages")
        page = manual.pages[page_index]
        return {
            "width": page.width,
            "height": page.height,
            "image_url": f"/images/{page.image_path.removeprefix('images/')}",
            "regions": [
                {"id": r.id, "label": r.label.value, "box": r.box.to_list()}
                for r in page.regions
            ],
        }

    @app.post("/ask", response_model=AskResponse)
    def ask(request: AskRequest):
        if not request.question.strip():
            raise HTTPException(status_code=422, detail="question is blank")
        scope = request.manual_id
        if scope is not None:
            try:
                state.corpus.get_manual(scope)
            except Exception:
                raise HTTPException(status_code=404, detail=f"unknown manual {scope!r}")
        top_k = request.top_k or state.default_top_k
        result = retrieve(
            request.question, state.model, state.featurizer, state.index, top_k, scope=scope
        )
        best = result.hits[0]
        predicted = qa_mod.answer_multimodal(
            state.model,
            state.featurizer,
            request.question,
            best.manual_id,
            best.page_index,
            threshold=state.threshold,
            max_len=state.max_answer_len,
        )
        manual = state.corpus.get_manual(best.manual_id)
        regions = [
            RegionOut(
                manual_id=best.manual_id,
                page_index=best.page_index,
                region_id=rid,
                label=manual.find_region(rid).label.value,
                box=manual.find_region(rid).box.to_list(),
                probability=prob,
            )
            for rid, prob in predicted.regions.selected
        ]
        return AskResponse(
            answer_text=predicted.text,
            regions=regions,
            retrieved_pages=[
                RetrievedPageOut(manual_id=h.manual_id, page_index=h.page_index, score=h.score)
                for h in result.hits
            ],
        )

    if state.corpus.root is not None and (Path(state.corpus.root) / "images").is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount(
            "/images", StaticFiles(directory=Path(state.corpus.root) / "images"), name="images"
        )

    return app


def serve(
    corpus_dir: str | Path,
    checkpoint_path: str | Path,
    index_path: str | Path,
    port: int = 8000,
    host: str = "127.0.0.1",
    **state_kwargs,
) -> None:
    """Load artifacts, verify hashes, and run the service."""
    import uvicorn

    state = load_service_state(corpus_dir, checkpoint_path, index_path, **state_kwargs)
    uvicorn.run(create_app(state), host=host, port=port, log_level="warning")
