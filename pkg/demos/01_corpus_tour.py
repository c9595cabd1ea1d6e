"""Build a synthetic manual corpus, save it, and read its statistics.

Every page carries labeled semantic regions (Text, Title, ProductImage,
Illustration, Table, Graphic) with OCR words, and every question is paired
with a multimodal answer: a sentence plus the region ids that support it.
"""

import tempfile
from pathlib import Path

import manualqa as mq

corpus = mq.generate_synthetic(seed=7, n_manuals=5, pages_per_manual=8, qas_per_page=2)
print(f"{len(corpus.manuals)} manuals, {corpus.n_pages} pages, {corpus.n_qas} QA pairs")

manual = corpus.manuals[0]
page = manual.pages[0]
print(f"\nmanual {manual.id} ({manual.brand} {manual.category}), page 0 regions:")
for region in page.regions:
    words = " ".join(w.text for w in region.words) or "(no words)"
    print(f"  [{region.label.value:13s}] {words}")

qa = manual.qas[0]
print(f"\nQ: {qa.question}")
print(f"A: {qa.answer.text}")
print(f"gold regions: {sorted(qa.answer.region_ids)} on pages {sorted(qa.relevant_pages)}")

# round-trip through the on-disk format
workdir = Path(tempfile.mkdtemp())
mq.save_corpus(corpus, workdir)
reloaded = mq.load_corpus(workdir)
assert reloaded == corpus
print(f"\nsaved + reloaded from {workdir}: equal field-for-field")

stats = mq.corpus_stats(reloaded)
print("\ncorpus statistics:")
print(stats.to_json())
