"""From raw captions to a weighted attribute vocabulary.

Walks the text side of the pipeline on a small inline corpus: tokenize,
part-of-speech tag, chunk adjective-noun attributes, then build the
TF-IDF-weighted vocabulary that every later stage consumes.
"""

import filterlens as fl

CAPTIONS = {
    "hummingbird_01": [
        "This bird has a straight bill and a rose-pink throat.",
        "A small bird with a bright red crown.",
        "the throat is rose-pink and the crown is red",
    ],
    "warbler_07": [
        "A small bird with a yellow belly and long tail.",
        "This little bird has a yellow belly.",
    ],
    "sparrow_12": [
        "A plain brown bird with a striped crown.",
        "it has a short beak and a striped crown",
    ],
}

# --- tokenization and tagging ---------------------------------------------
sample = CAPTIONS["hummingbird_01"][0]
tokens = fl.tokenize(sample)
print(f"caption: {sample!r}")
print(f"tokens:  {tokens}")
tagged = fl.pos_tag(tokens)
print("tags:    " + " ".join(f"{t.text}/{t.tag}" for t in tagged))
print(f"chunked: {[a.canonical for a in fl.chunk_attributes(tagged)]}")
print()

# --- vocabulary over the whole corpus --------------------------------------
corpus = [fl.CaptionDoc(image_id, lines) for image_id, lines in CAPTIONS.items()]
vocab = fl.build_vocabulary(corpus)

print(f"{len(vocab)} attributes, ordered by corpus frequency:")
print(f"{'attribute':<22}{'doc freq':>9}{'prior':>10}")
for i, attribute in enumerate(vocab.attributes):
    print(f"{attribute.canonical:<22}{vocab.doc_frequency[i]:>9}{vocab.prior[i]:>10.4f}")
print(f"\nprior sums to {vocab.prior.sum():.6f}")

# rarer attributes carry more weight than ones appearing in many files:
# that is the inverse-document-frequency factor at work
common = fl.idf(fl.Attribute("small", "bird"), corpus)       # in 2 of 3 files
rare = fl.idf(fl.Attribute("rose-pink", "throat"), corpus)   # in 1 of 3 files
print(f"idf('small bird') = {common:.4f}   idf('rose-pink throat') = {rare:.4f}")

print("\nper-image attribute sets (retrieval/PCK ground truth):")
for image_id in sorted(vocab.image_attributes):
    names = sorted(vocab.attributes[i].canonical for i in vocab.image_attributes[image_id])
    print(f"  {image_id}: {names}")
