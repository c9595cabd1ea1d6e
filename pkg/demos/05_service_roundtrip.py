"""Stand up the HTTP service on trained artifacts and ask it a question.

The service refuses mismatched artifacts (index built under a different
checkpoint), serves page images statically, and answers questions with
text + highlighted regions + the retrieval trace.
"""

import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

import manualqa as mq
from manualqa.retrieval import build_index
from manualqa.service import create_app, load_service_state

workdir = Path(tempfile.mkdtemp())
corpus_dir = workdir / "corpus"
ckpt_dir = workdir / "ckpt"

corpus = mq.generate_synthetic(seed=7, n_manuals=3, pages_per_manual=4, qas_per_page=2)
mq.save_corpus(corpus, corpus_dir)

config = mq.TrainConfig(
    epochs=10_000, batch_size=8, learning_rate=1e-3, tau=0.05, seed=0,
    pr=True, ta=True, va=True, max_steps=300, val_split="train",
    eval_every=10, weight_decay=0.0, checkpoint_dir=str(ckpt_dir),
)
result = mq.fit(corpus, config)

index_path = workdir / "pages.idx"
build_index(result.model, result.featurizer, corpus).save(index_path)

state = load_service_state(corpus_dir, ckpt_dir / "best.ckpt", index_path)
client = TestClient(create_app(state))

print("GET /manuals ->", client.get("/manuals").json())

question = corpus.manuals[0].qas[0].question
print(f"\nPOST /ask {question!r}")
body = client.post("/ask", json={"manual_id": "m0", "question": question}).json()
print("answer:", body["answer_text"])
print("gold:  ", corpus.manuals[0].qas[0].answer.text)
for region in body["regions"]:
    print(f"  region {region['region_id']} [{region['label']}] p={region['probability']:.2f}")
print("retrieved:", [(p["page_index"], round(p["score"], 3)) for p in body["retrieved_pages"]])

# to serve over a real socket instead:
print(f"\nmanualqa serve --corpus {corpus_dir} --checkpoint {ckpt_dir/'best.ckpt'} "
      f"--index {index_path} --port 8000")
