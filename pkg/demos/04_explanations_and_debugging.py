"""Template explanations, contrastive comparisons, and the failure report.

Every sentence is assembled from the top of an image-class attribute
distribution, so each claim in it is a traceable probability. Misclassified
images get a two-sided report: what spoke for the wrong class, what spoke
for the right one, and where the two diverge.
"""

import filterlens as fl

dataset, docs, planted = fl.generate_synthetic(
    n_filters=10, n_attributes=10, n_images=120, n_classes=5, seed=6
)
vocab = fl.build_vocabulary(docs)
fa = fl.compute_filter_attribute_pdf(dataset, vocab)

# --- sentences ----------------------------------------------------------------
print("explanations for the first three images (predicted class):")
for record in dataset.images[:3]:
    result = fl.explain(dataset, vocab, fa, record.image_id, record.predicted_class)
    print(f"  {record.image_id}: {result.sentence}")
    top = ", ".join(f"{a.canonical}={p:.3f}" for a, p in result.top_attributes[:3])
    print(f"      top evidence: {top}")

# --- contrastive view -----------------------------------------------------------
record = dataset.images[0]
other = (record.true_class + 1) % dataset.n_classes
comparison = fl.contrast(
    dataset, vocab, fa, record.image_id, record.true_class, other, k=3
)
print(f"\nwhy class {record.true_class} rather than class {other} for {record.image_id}?")
print(f"  shared evidence:   {[a.canonical for a in comparison.shared]}")
print(f"  favors class {record.true_class}:   "
      f"{[(a.canonical, round(d, 3)) for a, d in comparison.favors_a]}")
print(f"  favors class {other}:   "
      f"{[(a.canonical, round(d, 3)) for a, d in comparison.favors_b]}")

# --- failure report --------------------------------------------------------------
# the generator's predictions are all correct, so misclassify two images by hand
for image_id in ("img00003", "img00017"):
    record = dataset.image(image_id)
    record.predicted_class = (record.true_class + 2) % dataset.n_classes

report = fl.failure_report(dataset, vocab, fa)
print(f"\nfailure report covers {len(report.entries)} misclassified images:\n")
print(report.to_text(dataset.class_names))
