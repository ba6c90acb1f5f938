"""Posterior inference over filter-attribute associations.

Three probability objects are computed from pooled activations, classifier
weights, and the caption vocabulary:

* the per-filter attribute distribution: which caption phrases describe the
  patterns a filter responds to, inferred by marginalizing over images (a
  filter's score for an attribute is the prior times the summed per-image
  filter probability over images that carry the attribute);
* the image-class attribute distribution: why this image was assigned this
  class, a filter-importance-weighted mixture of the per-filter rows;
* the class attribute distribution: what the classifier looks for in a
  class regardless of any particular image, weighted by the classifier row
  alone.

All distributions share one normalization rule (:func:`sigma`): negatives
are clamped to zero and the remainder is L1-normalized; an all-nonpositive
input normalizes to the uniform distribution. Accumulation is float64 even
though tensors arrive as float32.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attr_corpus import Attribute, Vocabulary
from .data_ingest import Dataset, read_tensor_file, write_tensor_file

PDF_SIDECAR_VERSION = 1


def sigma(values, axis: int = -1) -> np.ndarray:
    """Clamp negatives to zero and L1-normalize along ``axis``.

    Slices that are entirely nonpositive normalize to the uniform
    distribution, so the output is always a valid probability vector.
    Scale-invariant on nonnegative input.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot normalize an empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError("cannot normalize non-finite values")
    clamped = np.clip(arr, 0.0, None)
    totals = clamped.sum(axis=axis, keepdims=True)
    uniform = 1.0 / arr.shape[axis]
    safe = np.where(totals > 0, totals, 1.0)
    return np.where(totals > 0, clamped / safe, uniform)


@dataclass
class FilterAttributePdf:
    """Row-stochastic matrix of attribute probabilities, one row per filter."""

    matrix: np.ndarray
    attributes: list[Attribute]
    vocabulary_sha256: str
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2:
            raise ValueError("matrix must be [n_filters, n_attributes]")
        if self.matrix.shape[1] != len(self.attributes):
            raise ValueError("matrix width does not match attribute list")
        if np.any(self.matrix < 0):
            raise ValueError("negative probability in matrix")
        row_sums = self.matrix.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-6):
            raise ValueError("matrix rows must sum to 1")
        self._index = {a: i for i, a in enumerate(self.attributes)}

    @property
    def n_filters(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.matrix.shape[1]

    def id_of(self, attribute: Attribute) -> int:
        try:
            return self._index[attribute]
        except KeyError:
            raise ValueError(f"unknown attribute: {attribute.canonical!r}") from None

    def column(self, attribute: Attribute) -> np.ndarray:
        """Per-filter probabilities of one attribute (grounding weights)."""
        return self.matrix[:, self.id_of(attribute)]


@dataclass
class AttributePdf:
    """A single distribution over the attribute vocabulary."""

    vector: np.ndarray
    provenance: str  # "image-class" or "class"

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float64)
        if self.vector.ndim != 1:
            raise ValueError("vector must be one-dimensional")
        if np.any(self.vector < 0) or abs(float(self.vector.sum()) - 1.0) > 1e-6:
            raise ValueError("vector must be a probability distribution")
        if self.provenance not in ("image-class", "class"):
            raise ValueError(f"unknown provenance {self.provenance!r}")


def _check_vocabulary_match(fa_pdf: FilterAttributePdf, vocabulary: Vocabulary) -> None:
    if fa_pdf.vocabulary_sha256 != vocabulary.sha256():
        raise ValueError(
            "filter-attribute matrix was computed against a different vocabulary"
        )


def membership_matrix(dataset: Dataset, vocabulary: Vocabulary) -> np.ndarray:
    """Indicator matrix [n_images, n_attributes]: image carries attribute."""
    missing = [
        r.image_id for r in dataset.images if r.image_id not in vocabulary.image_attributes
    ]
    if missing:
        shown = ", ".join(repr(m) for m in missing[:5])
        raise ValueError(f"images missing from vocabulary: {shown}")
    out = np.zeros((len(dataset.images), len(vocabulary)), dtype=np.float64)
    for row, record in enumerate(dataset.images):
        ids = sorted(vocabulary.image_attributes[record.image_id])
        out[row, ids] = 1.0
    return out


def filter_given_image(dataset: Dataset) -> np.ndarray:
    """Per-image distribution over filters from pooled activation strength.

    Row k is the normalized pooled vector of image k: how likely each
    filter is to be the one image k activates.
    """
    return sigma(dataset.pooled_matrix(), axis=-1)


def compute_filter_attribute_pdf(
    dataset: Dataset, vocabulary: Vocabulary
) -> FilterAttributePdf:
    """Infer each filter's attribute distribution by marginalizing over images.

    The unnormalized score of attribute j under filter i is the attribute
    prior times the sum, over images containing j, of image k's filter
    distribution evaluated at i. Rows are then normalized over the
    vocabulary. Summation follows manifest order, so identical inputs give
    bit-identical outputs.
    """
    if len(vocabulary) == 0:
        raise ValueError("empty attribute vocabulary")
    per_image = filter_given_image(dataset)  # [m, n]
    members = membership_matrix(dataset, vocabulary)  # [m, l]
    if not members.any():
        raise ValueError("no image contains any vocabulary attribute")
    scores = (per_image.T @ members) * vocabulary.prior[np.newaxis, :]
    return FilterAttributePdf(
        matrix=sigma(scores, axis=-1),
        attributes=list(vocabulary.attributes),
        vocabulary_sha256=vocabulary.sha256(),
    )


def filter_importance(dataset: Dataset, image_id: str, class_id: int) -> np.ndarray:
    """Distribution over filters: each filter's share of this class decision.

    Pooled activation times the classifier weight for the class, normalized;
    negative products are clamped (an inhibitory filter gets no share).
    """
    record = dataset.image(image_id)
    if not 0 <= class_id < dataset.n_classes:
        raise ValueError(f"unknown class id: {class_id}")
    pooled = record.pooled.astype(np.float64)
    row = dataset.weights[class_id].astype(np.float64)
    return sigma(pooled * row, axis=-1)


def image_class_attribute_pdf(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    image_id: str,
    class_id: int,
) -> AttributePdf:
    """Attribute distribution explaining one (image, class) decision.

    A convex combination of the per-filter rows weighted by filter
    importance; renormalized to absorb float drift.
    """
    _check_vocabulary_match(fa_pdf, vocabulary)
    importance = filter_importance(dataset, image_id, class_id)
    vector = importance @ fa_pdf.matrix
    vector = vector / vector.sum()
    return AttributePdf(vector=vector, provenance="image-class")


def class_attribute_pdf(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    class_id: int,
) -> AttributePdf:
    """Attribute distribution for a class, weighted by classifier weights only."""
    _check_vocabulary_match(fa_pdf, vocabulary)
    if not 0 <= class_id < dataset.n_classes:
        raise ValueError(f"unknown class id: {class_id}")
    weights = sigma(dataset.weights[class_id].astype(np.float64), axis=-1)
    vector = weights @ fa_pdf.matrix
    vector = vector / vector.sum()
    return AttributePdf(vector=vector, provenance="class")


def save_filter_attribute_pdf(fa_pdf: FilterAttributePdf, tensor_path) -> None:
    """Write the matrix as a tensor file plus a JSON sidecar.

    The sidecar records the attribute order and the vocabulary hash so a
    matrix can never be silently combined with the wrong vocabulary.
    """
    tensor_path = Path(tensor_path)
    write_tensor_file(fa_pdf.matrix, tensor_path)
    sidecar = {
        "version": PDF_SIDECAR_VERSION,
        "vocabulary_sha256": fa_pdf.vocabulary_sha256,
        "n_filters": fa_pdf.n_filters,
        "n_attributes": fa_pdf.n_attributes,
        "attributes": [
            {"adjective": a.adjective, "noun": a.noun} for a in fa_pdf.attributes
        ],
    }
    tensor_path.with_suffix(".json").write_text(
        json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
    )


def load_filter_attribute_pdf(
    tensor_path, vocabulary: Vocabulary | None = None
) -> FilterAttributePdf:
    """Load a matrix + sidecar pair, refusing a vocabulary mismatch.

    Rows are renormalized after the float32 round-trip so the row-sum
    invariant holds exactly again.
    """
    tensor_path = Path(tensor_path)
    sidecar_path = tensor_path.with_suffix(".json")
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    if sidecar.get("version") != PDF_SIDECAR_VERSION:
        raise ValueError(f"unsupported sidecar version: {sidecar.get('version')!r}")
    matrix = read_tensor_file(tensor_path).astype(np.float64)
    if matrix.ndim != 2 or matrix.shape != (
        sidecar["n_filters"],
        sidecar["n_attributes"],
    ):
        raise ValueError("tensor shape does not match sidecar")
    attributes = [
        Attribute(entry["adjective"], entry["noun"]) for entry in sidecar["attributes"]
    ]
    fa_pdf = FilterAttributePdf(
        matrix=sigma(matrix, axis=-1),
        attributes=attributes,
        vocabulary_sha256=sidecar["vocabulary_sha256"],
    )
    if vocabulary is not None:
        _check_vocabulary_match(fa_pdf, vocabulary)
    return fa_pdf
