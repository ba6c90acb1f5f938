"""Template sentences, contrastive class comparisons, and failure reports.

The explanation for a decision is the top of its image-class attribute
distribution, rendered through a fixed sentence template. Keeping the
renderer a template (rather than a learned generator) means every word in
the output is traceable to a probability the inference stage produced.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .attr_corpus import Attribute, Vocabulary
from .data_ingest import Dataset
from .pdf_inference import AttributePdf, FilterAttributePdf, image_class_attribute_pdf

DEFAULT_TOP_K = 5
_DELTA_EPS = 1e-9


@dataclass
class Explanation:
    """Top attributes and rendered sentence for one (image, class) decision."""

    image_id: str
    class_id: int
    top_attributes: list[tuple[Attribute, float]]
    sentence: str

    def attribute_set(self) -> set[Attribute]:
        return {a for a, _ in self.top_attributes}

    def to_json_dict(self, class_names: list[str] | None = None) -> dict:
        payload = {
            "image_id": self.image_id,
            "class_id": self.class_id,
            "sentence": self.sentence,
            "attributes": [
                {"adjective": a.adjective, "noun": a.noun, "probability": float(p)}
                for a, p in self.top_attributes
            ],
        }
        if class_names is not None:
            payload["class_name"] = class_names[self.class_id]
        return payload


@dataclass
class ContrastiveExplanation:
    """Shared and class-distinctive attributes for two candidate classes."""

    image_id: str
    class_a: int
    class_b: int
    shared: list[Attribute]
    favors_a: list[tuple[Attribute, float]]
    favors_b: list[tuple[Attribute, float]]

    def to_json_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "class_a": self.class_a,
            "class_b": self.class_b,
            "shared": [a.canonical for a in self.shared],
            "favors_a": [
                {"attribute": a.canonical, "delta": float(d)} for a, d in self.favors_a
            ],
            "favors_b": [
                {"attribute": a.canonical, "delta": float(d)} for a, d in self.favors_b
            ],
        }


@dataclass
class FailureEntry:
    image_id: str
    true_class: int
    predicted_class: int
    explanation_pred: Explanation
    explanation_true: Explanation
    contrastive: ContrastiveExplanation


@dataclass
class FailureReport:
    """One entry per misclassified image, with both sides explained."""

    entries: list[FailureEntry]

    def to_json_dict(self, class_names: list[str]) -> dict:
        failures = []
        for e in self.entries:
            contrast_dict = e.contrastive.to_json_dict()
            failures.append(
                {
                    "image_id": e.image_id,
                    "true_class": class_names[e.true_class],
                    "predicted_class": class_names[e.predicted_class],
                    "sentence_pred": e.explanation_pred.sentence,
                    "sentence_true": e.explanation_true.sentence,
                    "shared": contrast_dict["shared"],
                    "favors_pred": contrast_dict["favors_a"],
                    "favors_true": contrast_dict["favors_b"],
                }
            )
        return {"n_failures": len(failures), "failures": failures}

    def to_text(self, class_names: list[str]) -> str:
        if not self.entries:
            return "no misclassified images\n"
        blocks = []
        for e in self.entries:
            lines = [
                f"image {e.image_id}: predicted {class_names[e.predicted_class]}, "
                f"true {class_names[e.true_class]}",
                f"  predicted: {e.explanation_pred.sentence}",
                f"  true:      {e.explanation_true.sentence}",
            ]
            if e.contrastive.shared:
                lines.append(
                    "  shared: " + ", ".join(a.canonical for a in e.contrastive.shared)
                )
            for label, favors in (
                ("favors predicted", e.contrastive.favors_a),
                ("favors true", e.contrastive.favors_b),
            ):
                if favors:
                    lines.append(
                        f"  {label}: "
                        + ", ".join(f"{a.canonical} (+{d:.4f})" for a, d in favors)
                    )
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"

    def to_json(self, class_names: list[str]) -> str:
        return json.dumps(self.to_json_dict(class_names), indent=2) + "\n"


def top_k(
    pdf: AttributePdf | np.ndarray, vocabulary: Vocabulary, k: int
) -> list[tuple[Attribute, float]]:
    """The k highest-probability attributes, ties broken by canonical string."""
    if k < 1:
        raise ValueError("k must be at least 1")
    vector = pdf.vector if isinstance(pdf, AttributePdf) else np.asarray(pdf)
    if vector.shape != (len(vocabulary),):
        raise ValueError("distribution length does not match vocabulary")
    order = sorted(
        range(len(vocabulary)),
        key=lambda j: (-vector[j], vocabulary.attributes[j].canonical),
    )
    return [(vocabulary.attributes[j], float(vector[j])) for j in order[:k]]


def merge_adjectives(attrs: list[tuple[Attribute, float]]) -> list[str]:
    """Collapse attributes sharing a noun into one comma-joined phrase.

    Expects the probability-descending order that :func:`top_k` produces;
    each merged phrase sits where its highest-probability member was, with
    adjectives listed in descending probability.
    """
    adjectives_by_noun: dict[str, list[str]] = {}
    noun_order: list[str] = []
    for attribute, _ in attrs:
        if attribute.noun not in adjectives_by_noun:
            adjectives_by_noun[attribute.noun] = []
            noun_order.append(attribute.noun)
        adjectives_by_noun[attribute.noun].append(attribute.adjective)
    return [f"{', '.join(adjectives_by_noun[noun])} {noun}" for noun in noun_order]


def render_sentence(class_name: str, phrases: list[str]) -> str:
    """Fill the fixed explanation template with merged attribute phrases."""
    if not phrases:
        raise ValueError("cannot render a sentence with no phrases")
    if len(phrases) == 1:
        listing = phrases[0]
    elif len(phrases) == 2:
        listing = f"{phrases[0]} and {phrases[1]}"
    else:
        listing = ", ".join(phrases[:-1]) + f", and {phrases[-1]}"
    return f"This is a {class_name} because it has {listing}."


def explain(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    image_id: str,
    class_id: int,
    k: int = DEFAULT_TOP_K,
) -> Explanation:
    """Explain why an image supports a class: top attributes plus sentence.

    Zero-probability attributes are dropped even inside the top k; they are
    not evidence and would only pad the sentence.
    """
    pdf = image_class_attribute_pdf(dataset, vocabulary, fa_pdf, image_id, class_id)
    ranked = [(a, p) for a, p in top_k(pdf, vocabulary, k) if p > 0.0]
    sentence = render_sentence(
        dataset.class_names[class_id], merge_adjectives(ranked)
    )
    return Explanation(
        image_id=image_id, class_id=class_id, top_attributes=ranked, sentence=sentence
    )


def explain_all(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    k: int = DEFAULT_TOP_K,
    workers: int = 1,
) -> dict[str, Explanation]:
    """Explanations for every image with a prediction, against that prediction.

    Pure per-image work, so it may fan out over threads; results are
    collected in image order regardless of worker count.
    """
    targets = [
        (r.image_id, r.predicted_class)
        for r in dataset.images
        if r.predicted_class is not None
    ]

    def one(target):
        image_id, class_id = target
        return explain(dataset, vocabulary, fa_pdf, image_id, class_id, k)

    if workers > 1 and len(targets) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            explanations = list(pool.map(one, targets))
    else:
        explanations = [one(t) for t in targets]
    return {e.image_id: e for e in explanations}


def contrast(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    image_id: str,
    class_a: int,
    class_b: int,
    k: int = DEFAULT_TOP_K,
) -> ContrastiveExplanation:
    """Compare the attribute evidence for two candidate classes of one image.

    Attributes in both top-k lists are shared; an attribute only in one
    list lands in that class's favors list when its probability margin
    over the other class exceeds a small epsilon.
    """
    if class_a == class_b:
        raise ValueError("contrastive explanation needs two distinct classes")
    pdf_a = image_class_attribute_pdf(dataset, vocabulary, fa_pdf, image_id, class_a)
    pdf_b = image_class_attribute_pdf(dataset, vocabulary, fa_pdf, image_id, class_b)
    top_a = top_k(pdf_a, vocabulary, k)
    top_b = top_k(pdf_b, vocabulary, k)
    set_a = {a for a, _ in top_a}
    set_b = {a for a, _ in top_b}

    def prob(pdf: AttributePdf, attribute: Attribute) -> float:
        return float(pdf.vector[vocabulary.id_of(attribute)])

    shared = sorted(
        set_a & set_b,
        key=lambda a: (-(prob(pdf_a, a) + prob(pdf_b, a)), a.canonical),
    )

    def favors(own_top, own_pdf, other_set, other_pdf):
        out = []
        for attribute, _ in own_top:
            if attribute in other_set:
                continue
            delta = prob(own_pdf, attribute) - prob(other_pdf, attribute)
            if delta > _DELTA_EPS:
                out.append((attribute, delta))
        out.sort(key=lambda item: (-item[1], item[0].canonical))
        return out

    return ContrastiveExplanation(
        image_id=image_id,
        class_a=class_a,
        class_b=class_b,
        shared=shared,
        favors_a=favors(top_a, pdf_a, set_b, pdf_b),
        favors_b=favors(top_b, pdf_b, set_a, pdf_a),
    )


def failure_report(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    k: int = DEFAULT_TOP_K,
) -> FailureReport:
    """Explain every misclassified image from both sides, plus the contrast."""
    predicted = [r for r in dataset.images if r.predicted_class is not None]
    if not predicted:
        raise ValueError("no image carries a prediction")
    entries = []
    for record in sorted(predicted, key=lambda r: r.image_id):
        if record.predicted_class == record.true_class:
            continue
        entries.append(
            FailureEntry(
                image_id=record.image_id,
                true_class=record.true_class,
                predicted_class=record.predicted_class,
                explanation_pred=explain(
                    dataset, vocabulary, fa_pdf, record.image_id,
                    record.predicted_class, k,
                ),
                explanation_true=explain(
                    dataset, vocabulary, fa_pdf, record.image_id, record.true_class, k
                ),
                contrastive=contrast(
                    dataset, vocabulary, fa_pdf, record.image_id,
                    record.predicted_class, record.true_class, k,
                ),
            )
        )
    return FailureReport(entries)
