"""Shared fixtures: planted synthetic data and hand-built probability fixtures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

import filterlens as fl


@dataclass
class PlantedData:
    dataset: fl.Dataset
    docs: list
    vocab: fl.Vocabulary
    fa_pdf: fl.FilterAttributePdf
    planted: dict


def _build_planted(n_filters, n_attributes, n_images, n_classes, seed) -> PlantedData:
    dataset, docs, planted = fl.generate_synthetic(
        n_filters, n_attributes, n_images, n_classes, seed
    )
    vocab = fl.build_vocabulary(docs)
    fa_pdf = fl.compute_filter_attribute_pdf(dataset, vocab)
    return PlantedData(dataset, docs, vocab, fa_pdf, planted)


@pytest.fixture(scope="session")
def planted() -> PlantedData:
    """The reference planted dataset: 32 filters, 500 images, 8 classes."""
    return _build_planted(32, 32, 500, 8, 42)


@pytest.fixture(scope="session")
def small_planted() -> PlantedData:
    """A cheap planted dataset for tests that only need the structure."""
    return _build_planted(8, 8, 80, 4, 7)


@dataclass
class ExplainAwayFixture:
    dataset: fl.Dataset
    vocab: fl.Vocabulary
    fa_pdf: fl.FilterAttributePdf
    # attribute carried only by the second image (activates the shared
    # filter but not the specific one)
    discriminating: fl.Attribute
    confounder: fl.Attribute
    expected_discriminating: float
    expected_confounder: float


@pytest.fixture(scope="session")
def explain_away() -> ExplainAwayFixture:
    """Two filters, two attributes, two images; all values hand-derivable.

    Filter 0 responds to both attributes (both images activate it at 1.0);
    filter 1 responds only to "blue head" (the "black head" image leaves it
    at 0.125, which is float32-exact). For the black-head image the
    importance split is [8/9, 1/9], the per-filter rows are [16/25, 9/25]
    and [2/11, 9/11], and the image-class distribution works out to
    exactly [1458/2475, 1017/2475]: the attribute actually present
    outranks the shared filter's other mode.
    """
    docs = [
        fl.CaptionDoc("img0", ["a bird with blue head"]),
        fl.CaptionDoc("img1", ["a bird with black head"]),
    ]
    vocab = fl.build_vocabulary(docs)
    images = [
        fl.ImageRecord(
            image_id="img0",
            pooled=np.array([1.0, 1.0], dtype=np.float32),
            true_class=0,
            image_size=(100, 100),
            predicted_class=0,
        ),
        fl.ImageRecord(
            image_id="img1",
            pooled=np.array([1.0, 0.125], dtype=np.float32),
            true_class=0,
            image_size=(100, 100),
            predicted_class=0,
        ),
    ]
    dataset = fl.Dataset(
        images=images,
        class_names=["bird"],
        weights=np.array([[1.0, 1.0]], dtype=np.float32),
        n_filters=2,
    )
    fa_pdf = fl.compute_filter_attribute_pdf(dataset, vocab)
    return ExplainAwayFixture(
        dataset=dataset,
        vocab=vocab,
        fa_pdf=fa_pdf,
        discriminating=fl.Attribute("black", "head"),
        confounder=fl.Attribute("blue", "head"),
        expected_discriminating=1458.0 / 2475.0,
        expected_confounder=1017.0 / 2475.0,
    )


def make_random_instance(rng: np.random.Generator):
    """A tiny random dataset + vocabulary for oracle comparisons.

    Sizes are at most 5 in every dimension; pooled values and priors
    include zeros, and classifier weights include negatives, so the
    degenerate normalization branches get exercised.
    """
    n_filters = int(rng.integers(1, 6))
    n_attrs = int(rng.integers(1, 6))
    n_images = int(rng.integers(1, 6))
    n_classes = int(rng.integers(1, 4))

    pooled = rng.uniform(0.0, 2.0, size=(n_images, n_filters))
    pooled[rng.random(pooled.shape) < 0.2] = 0.0
    pooled = pooled.astype(np.float32)

    memberships = []
    for _ in range(n_images):
        ids = {int(j) for j in range(n_attrs) if rng.random() < 0.5}
        memberships.append(frozenset(ids))
    if not any(memberships):
        memberships[0] = frozenset({0})

    prior = rng.uniform(0.0, 1.0, size=n_attrs)
    prior[rng.random(n_attrs) < 0.2] = 0.0
    if prior.sum() == 0:
        prior[:] = 1.0
    prior = prior / prior.sum()

    attributes = [fl.Attribute(f"adj{j}", f"noun{j}") for j in range(n_attrs)]
    image_ids = [f"im{k}" for k in range(n_images)]
    vocab = fl.Vocabulary(
        attributes=attributes,
        prior=prior,
        doc_frequency=[max(1, sum(j in m for m in memberships)) for j in range(n_attrs)],
        image_attributes=dict(zip(image_ids, memberships)),
    )

    weights = rng.uniform(-1.0, 1.0, size=(n_classes, n_filters)).astype(np.float32)
    records = [
        fl.ImageRecord(
            image_id=image_ids[k],
            pooled=pooled[k],
            true_class=int(rng.integers(0, n_classes)),
            image_size=(32, 32),
        )
        for k in range(n_images)
    ]
    dataset = fl.Dataset(
        images=records,
        class_names=[f"c{m}" for m in range(n_classes)],
        weights=weights,
        n_filters=n_filters,
    )
    return dataset, vocab, memberships
