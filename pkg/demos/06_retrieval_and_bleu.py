"""Attribute-based image retrieval and BLEU scoring of the explanations.

Retrieval treats the generated explanations as an index: an image matches
when its top attributes cover the whole query. The retrieval contingency
table and the sentence-BLEU report are the two quantitative checks that the
underlying distributions are sound.
"""

import filterlens as fl

dataset, docs, planted = fl.generate_synthetic(
    n_filters=10, n_attributes=10, n_images=200, n_classes=5, seed=12
)
vocab = fl.build_vocabulary(docs)
fa = fl.compute_filter_attribute_pdf(dataset, vocab)
explanations = fl.explain_all(dataset, vocab, fa, k=5)
explanation_list = list(explanations.values())

# --- querying ---------------------------------------------------------------
query = planted[1]
result = fl.retrieve(explanation_list, [query], vocab)
expected = sum(1 for r in dataset.images if r.true_class == 1)
print(f"query {query.canonical!r}: {len(result.ranked_images)} hits "
      f"({expected} images of class 1 exist)")
for image_id, score in result.ranked_images[:5]:
    print(f"  {image_id}  score {score:.4f}")

narrowed = fl.retrieve(explanation_list, [planted[1], planted[7]], vocab)
print(f"adding {planted[7].canonical!r} narrows the result to "
      f"{len(narrowed.ranked_images)} images\n")

# --- contingency metrics over the most frequent attributes --------------------
results = [fl.retrieve(explanation_list, [a]) for a in vocab.attributes]
metrics = fl.retrieval_metrics(results, vocab, top_n=10)
print("retrieval vs caption ground truth:")
print(metrics.to_text())

# --- sentence BLEU -------------------------------------------------------------
# mark a few images as misclassified so both report splits are populated
for image_id in ("img00004", "img00031", "img00100"):
    record = dataset.image(image_id)
    record.predicted_class = (record.true_class + 1) % dataset.n_classes
explanations = fl.explain_all(dataset, vocab, fa, k=5)

report = fl.bleu_report(dataset, explanations, docs)
print("sentence BLEU against the caption references:")
print(report.to_text())
print(f"({report.n_correct} correct / {report.n_wrong} wrong predictions scored)")
print("the split exists to separate the two cases on natural captions; this")
print("synthetic corpus is too uniform for a visible gap")
