"""From raw pages to encoder inputs.

A question becomes subword ids ending in the end marker. A page becomes,
per region, a label-marker token followed by the region's OCR subwords;
each page token carries a layout box bucketed onto a 0-1000 grid and an
image-crop feature shared across the region's tokens. The embedding of a
page row is the sum token + segment + 2D position + projected ROI.
"""

import numpy as np

import manualqa as mq
from manualqa.features import Featurizer, assemble_embeddings

corpus = mq.generate_synthetic(seed=7, n_manuals=2, pages_per_manual=3, qas_per_page=1)
vocab = mq.build_vocab(corpus, target_size=512)
print(f"vocabulary: {len(vocab)} pieces (specials + characters + frequent words)")

featurizer = Featurizer(corpus, vocab)
question = corpus.manuals[0].qas[0].question
qf = featurizer.question(question)
print(f"\nquestion: {question!r}")
print(f"token ids: {qf.token_ids.tolist()} (last = end marker {vocab.eos_id})")

pf = featurizer.page("m0", 0)
page = corpus.manuals[0].pages[0]
print(f"\npage m0/0: {len(pf)} tokens for {len(page.regions)} regions")
print(f"marker positions: {pf.marker_positions}")
for pos, region in zip(pf.marker_positions, page.regions):
    print(f"  token[{pos:2d}] = {vocab.pieces[pf.token_ids[pos]]:15s} box={pf.token_boxes[pos]}")

model = mq.Model(mq.ModelConfig(vocab_size=len(vocab)), seed=0)
z_q = assemble_embeddings(qf, model.tables)
z_p = assemble_embeddings(pf, model.tables)
print(f"\nquestion embeddings {z_q.shape}, page embeddings {z_p.shape}")

# additivity: the page row is exactly the sum of its four summands
row = 1
x0, y0, x1, y1 = pf.token_boxes[row]
t = model.tables
manual_sum = (
    t.token[pf.token_ids[row]] + t.segment[1]
    + t.pos_x0[x0] + t.pos_y0[y0] + t.pos_x1[x1] + t.pos_y1[y1]
    + t.pos_w[x1 - x0] + t.pos_h[y1 - y0]
    + pf.roi_vectors[row] @ t.roi_proj
)
print(f"row {row} equals hand-indexed summand total:", np.allclose(z_p[row], manual_sum))
