"""Attribute grounding heatmaps, PCK evaluation, and image retrieval.

Grounding re-weights an image's spatial feature maps by the per-filter
probability of the query attribute and renders the combination as a [0, 1]
heatmap. PCK scores how often the heatmap peak lands within a radius of the
matching ground-truth keypoint, against a random-location baseline and a
constant-matrix baseline. Retrieval ranks images whose explanation carries
every query attribute.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .attr_corpus import Attribute, Vocabulary
from .data_ingest import Dataset, ImageRecord, write_tensor_file
from .explanation import Explanation
from .pdf_inference import FilterAttributePdf, _check_vocabulary_match

logger = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.1, 0.2, 0.3)
DEFAULT_TOP_N_ATTRIBUTES = 50


@dataclass
class Heatmap:
    """Grounding strength per spatial cell for one (image, attribute) pair."""

    grid: np.ndarray
    image_id: str
    attribute: Attribute

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.float64)
        if self.grid.ndim != 2:
            raise ValueError("heatmap grid must be two-dimensional")
        if np.any(self.grid < 0) or np.any(self.grid > 1):
            raise ValueError("heatmap values must lie in [0, 1]")


@dataclass
class PckResult:
    """Fraction of correctly located attributes per distance threshold."""

    label: str
    fractions: dict[float, float]
    n_evaluated: int
    per_attribute: dict[str, dict]

    def __post_init__(self):
        alphas = sorted(self.fractions)
        values = [self.fractions[a] for a in alphas]
        if any(not 0.0 <= v <= 1.0 for v in values):
            raise ValueError("PCK fractions must lie in [0, 1]")
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("PCK must be nondecreasing in the threshold")

    def to_json_dict(self) -> dict:
        return {
            "label": self.label,
            "n_evaluated": self.n_evaluated,
            "pck": {f"{alpha:g}": self.fractions[alpha] for alpha in sorted(self.fractions)},
            "per_attribute": self.per_attribute,
        }


@dataclass
class RetrievalResult:
    """Images ranked by the probability mass they assign the query."""

    query: list[Attribute]
    ranked_images: list[tuple[str, float]]

    def __post_init__(self):
        scores = [s for _, s in self.ranked_images]
        if any(b > a for a, b in zip(scores, scores[1:])):
            raise ValueError("retrieval scores must be nonincreasing")

    def image_ids(self) -> list[str]:
        return [image_id for image_id, _ in self.ranked_images]

    def to_json_dict(self) -> dict:
        return {
            "query": [a.canonical for a in self.query],
            "results": [
                {"image_id": image_id, "score": float(score)}
                for image_id, score in self.ranked_images
            ],
        }


def ground(
    dataset: Dataset,
    fa_pdf: FilterAttributePdf,
    image_id: str,
    attribute: Attribute,
) -> Heatmap:
    """Ground an attribute in an image by p.d.f.-weighted map combination.

    The weights are the per-filter probabilities of the attribute; the
    weighted sum is clamped at zero and scaled so its maximum is 1 (an
    all-zero combination stays all-zero).
    """
    record = dataset.image(image_id)
    if record.spatial is None:
        raise ValueError(f"image {image_id!r} has no spatial maps")
    weights = fa_pdf.column(attribute)
    raw = np.tensordot(weights, record.spatial.astype(np.float64), axes=1)
    raw = np.clip(raw, 0.0, None)
    peak = raw.max()
    grid = raw / peak if peak > 0 else raw
    return Heatmap(grid=grid, image_id=image_id, attribute=attribute)


def heatmap_peak(heatmap: Heatmap, image_size: tuple[int, int]) -> tuple[float, float]:
    """Pixel location of the heatmap maximum (center of the argmax cell).

    Ties resolve to the first cell in row-major order; the grid is scaled
    uniformly onto the image with no interpolation.
    """
    grid = heatmap.grid
    if not grid.any():
        raise ValueError("no activation in heatmap")
    i, j = np.unravel_index(int(np.argmax(grid)), grid.shape)
    h_cells, w_cells = grid.shape
    w_px, h_px = image_size
    return ((j + 0.5) * w_px / w_cells, (i + 0.5) * h_px / h_cells)


def _evaluation_pairs(
    dataset: Dataset,
    vocabulary: Vocabulary,
    mapping: dict[str, str],
    top_n: int,
) -> list[tuple[ImageRecord, Attribute, float, float]]:
    """(record, attribute, keypoint x, keypoint y) for every evaluable pair.

    A pair is evaluable when the image's captions carry the attribute, the
    attribute's noun maps to a keypoint, and that keypoint is visible in
    the image. Only the top_n most frequent mapped attributes participate.
    """
    eligible: list[int] = []
    for attr_id, attribute in enumerate(vocabulary.attributes):
        if attribute.noun in mapping:
            eligible.append(attr_id)
        if len(eligible) == top_n:
            break
    pairs = []
    for record in dataset.images:
        if record.spatial is None or not record.keypoints:
            continue
        present = vocabulary.image_attributes.get(record.image_id)
        if present is None:
            raise ValueError(f"image {record.image_id!r} missing from vocabulary")
        visible: dict[str, tuple[float, float]] = {}
        for kp in record.keypoints:
            if kp.visible:
                visible.setdefault(kp.name, (kp.x, kp.y))
        for attr_id in eligible:
            if attr_id not in present:
                continue
            attribute = vocabulary.attributes[attr_id]
            location = visible.get(mapping[attribute.noun])
            if location is not None:
                pairs.append((record, attribute, location[0], location[1]))
    if not pairs:
        raise ValueError("no evaluable (image, attribute) pairs")
    return pairs


def _pck_from_distances(
    label: str,
    pairs: list,
    distances: np.ndarray,
    object_sizes: np.ndarray,
    alphas: tuple[float, ...],
) -> PckResult:
    fractions = {}
    correct = {}
    for alpha in alphas:
        hits = distances <= alpha * object_sizes
        fractions[float(alpha)] = float(hits.mean())
        correct[float(alpha)] = hits
    per_attribute: dict[str, dict] = {}
    for idx, (_, attribute, _, _) in enumerate(pairs):
        entry = per_attribute.setdefault(
            attribute.canonical,
            {"n": 0, "pck": {f"{a:g}": 0 for a in alphas}},
        )
        entry["n"] += 1
        for alpha in alphas:
            entry["pck"][f"{alpha:g}"] += int(correct[float(alpha)][idx])
    for entry in per_attribute.values():
        for key in entry["pck"]:
            entry["pck"][key] = entry["pck"][key] / entry["n"]
    return PckResult(
        label=label,
        fractions=fractions,
        n_evaluated=len(pairs),
        per_attribute=per_attribute,
    )


def pck(
    dataset: Dataset,
    vocabulary: Vocabulary,
    fa_pdf: FilterAttributePdf,
    mapping: dict[str, str],
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    top_n: int = DEFAULT_TOP_N_ATTRIBUTES,
) -> PckResult:
    """Percentage of correct keypoints for grounded attribute locations.

    A grounding is correct at threshold alpha when the heatmap peak lies
    within alpha * object_size of the ground-truth keypoint, with
    object_size the larger image dimension. A dead (all-zero) heatmap
    counts as incorrect at every threshold.
    """
    _check_vocabulary_match(fa_pdf, vocabulary)
    pairs = _evaluation_pairs(dataset, vocabulary, mapping, top_n)
    distances = np.empty(len(pairs))
    sizes = np.empty(len(pairs))
    for idx, (record, attribute, kp_x, kp_y) in enumerate(pairs):
        sizes[idx] = max(record.image_size)
        try:
            peak_x, peak_y = heatmap_peak(
                ground(dataset, fa_pdf, record.image_id, attribute), record.image_size
            )
            distances[idx] = math.hypot(peak_x - kp_x, peak_y - kp_y)
        except ValueError:
            distances[idx] = np.inf
    return _pck_from_distances("proposed", pairs, distances, sizes, alphas)


def pck_baselines(
    dataset: Dataset,
    vocabulary: Vocabulary,
    mapping: dict[str, str],
    alphas: tuple[float, ...] = DEFAULT_ALPHAS,
    seed: int | None = None,
    top_n: int = DEFAULT_TOP_N_ATTRIBUTES,
) -> tuple[PckResult, PckResult]:
    """Random-location and constant-matrix PCK baselines.

    The random baseline draws one uniform peak per pair from the given
    seed. The constant baseline replaces the filter-attribute matrix with
    a flat one, so every attribute grounds to the same heatmap (the
    unweighted mean of the spatial maps).
    """
    if seed is None:
        raise ValueError("seed required for the random baseline")
    pairs = _evaluation_pairs(dataset, vocabulary, mapping, top_n)
    sizes = np.array([max(record.image_size) for record, _, _, _ in pairs])

    rng = np.random.default_rng(seed)
    draws = rng.uniform(size=(len(pairs), 2))
    random_distances = np.empty(len(pairs))
    for idx, (record, _, kp_x, kp_y) in enumerate(pairs):
        w_px, h_px = record.image_size
        random_distances[idx] = math.hypot(
            draws[idx, 0] * w_px - kp_x, draws[idx, 1] * h_px - kp_y
        )
    random_result = _pck_from_distances("random", pairs, random_distances, sizes, alphas)

    constant_peaks: dict[str, tuple[float, float]] = {}
    constant_distances = np.empty(len(pairs))
    for idx, (record, attribute, kp_x, kp_y) in enumerate(pairs):
        peak = constant_peaks.get(record.image_id)
        if peak is None:
            flat = np.clip(record.spatial.astype(np.float64).mean(axis=0), 0.0, None)
            top = flat.max()
            heatmap = Heatmap(
                grid=flat / top if top > 0 else flat,
                image_id=record.image_id,
                attribute=attribute,
            )
            try:
                peak = heatmap_peak(heatmap, record.image_size)
            except ValueError:
                peak = (np.inf, np.inf)
            constant_peaks[record.image_id] = peak
        constant_distances[idx] = math.hypot(peak[0] - kp_x, peak[1] - kp_y)
    constant_result = _pck_from_distances(
        "constant", pairs, constant_distances, sizes, alphas
    )
    return random_result, constant_result


def pck_table(results: list[PckResult], alphas: tuple[float, ...] = DEFAULT_ALPHAS) -> str:
    """Aligned text table of PCK fractions, one row per method."""
    header = f"{'method':<12}" + "".join(f"PCK@{alpha:<8g}" for alpha in alphas)
    lines = [header]
    for result in results:
        cells = "".join(f"{100 * result.fractions[float(a)]:>7.1f}%    " for a in alphas)
        lines.append(f"{result.label:<12}{cells.rstrip()}")
    return "\n".join(lines) + "\n"


def retrieve(
    explanations: list[Explanation],
    query: list[Attribute],
    vocabulary: Vocabulary | None = None,
) -> RetrievalResult:
    """Images whose explanation carries every query attribute, ranked.

    The score is the summed explanation probability of the query
    attributes; a query term outside the vocabulary logs a warning and
    returns no results.
    """
    if not query:
        raise ValueError("empty query")
    if vocabulary is not None:
        unknown = [a for a in query if a not in vocabulary]
        if unknown:
            logger.warning(
                "query attributes not in vocabulary: %s",
                ", ".join(a.canonical for a in unknown),
            )
            return RetrievalResult(query=list(query), ranked_images=[])
    matches = []
    for explanation in explanations:
        probs = {a: p for a, p in explanation.top_attributes}
        if all(a in probs for a in query):
            score = sum(probs[a] for a in query)
            matches.append((explanation.image_id, float(score)))
    matches.sort(key=lambda item: (-item[1], item[0]))
    return RetrievalResult(query=list(query), ranked_images=matches)


@dataclass
class RetrievalMetrics:
    """Per-attribute retrieval contingency table with macro/micro summaries."""

    rows: list[dict]
    macro: dict
    micro: dict
    n_images: int

    def to_json_dict(self) -> dict:
        return {
            "n_images": self.n_images,
            "macro": self.macro,
            "micro": self.micro,
            "per_attribute": self.rows,
        }

    def to_text(self) -> str:
        def fmt(value) -> str:
            return "    -" if value is None else f"{100 * value:>5.1f}"

        lines = [
            f"{'':<10}{'Recall':>8}{'TrueNeg':>9}{'Accuracy':>10}{'Precision':>11}",
        ]
        for name, stats in (("macro", self.macro), ("micro", self.micro)):
            lines.append(
                f"{name:<10}{fmt(stats['recall']):>7}%{fmt(stats['true_negative_rate']):>8}%"
                f"{fmt(stats['accuracy']):>9}%{fmt(stats['precision']):>10}%"
            )
        return "\n".join(lines) + "\n"


def _rate(numerator: int, denominator: int) -> float | None:
    return numerator / denominator if denominator else None


def retrieval_metrics(
    results: list[RetrievalResult],
    vocabulary: Vocabulary,
    top_n: int = DEFAULT_TOP_N_ATTRIBUTES,
) -> RetrievalMetrics:
    """Score single-attribute retrievals against caption ground truth.

    For each evaluated attribute, every image is a binary trial: retrieved
    versus present in the image's captions. Reports recall, true-negative
    rate, accuracy, and precision, macro-averaged over attributes (rates
    with an empty denominator are skipped) and micro-averaged over pooled
    counts.
    """
    by_attribute: dict[Attribute, RetrievalResult] = {}
    for result in results:
        if len(result.query) != 1:
            raise ValueError("retrieval metrics expect single-attribute queries")
        by_attribute[result.query[0]] = result
    evaluated = [a for a in vocabulary.attributes if a in by_attribute][:top_n]
    if not evaluated:
        raise ValueError("no evaluated attributes")

    universe = sorted(vocabulary.image_attributes)
    rows = []
    totals = {"tp": 0, "fp": 0, "fn": 0, "tn": 0}
    for attribute in evaluated:
        attr_id = vocabulary.id_of(attribute)
        truth = {
            image_id
            for image_id in universe
            if attr_id in vocabulary.image_attributes[image_id]
        }
        retrieved = set(by_attribute[attribute].image_ids())
        tp = len(truth & retrieved)
        fp = len(retrieved - truth)
        fn = len(truth - retrieved)
        tn = len(universe) - tp - fp - fn
        rows.append(
            {
                "attribute": attribute.canonical,
                "tp": tp, "fp": fp, "fn": fn, "tn": tn,
                "recall": _rate(tp, tp + fn),
                "true_negative_rate": _rate(tn, tn + fp),
                "accuracy": _rate(tp + tn, len(universe)),
                "precision": _rate(tp, tp + fp),
            }
        )
        for key, value in (("tp", tp), ("fp", fp), ("fn", fn), ("tn", tn)):
            totals[key] += value

    def macro(metric: str) -> float | None:
        defined = [row[metric] for row in rows if row[metric] is not None]
        return sum(defined) / len(defined) if defined else None

    macro_stats = {
        metric: macro(metric)
        for metric in ("recall", "true_negative_rate", "accuracy", "precision")
    }
    micro_stats = {
        "recall": _rate(totals["tp"], totals["tp"] + totals["fn"]),
        "true_negative_rate": _rate(totals["tn"], totals["tn"] + totals["fp"]),
        "accuracy": _rate(
            totals["tp"] + totals["tn"], sum(totals.values())
        ),
        "precision": _rate(totals["tp"], totals["tp"] + totals["fp"]),
    }
    return RetrievalMetrics(
        rows=rows, macro=macro_stats, micro=micro_stats, n_images=len(universe)
    )


def write_heatmap(heatmap: Heatmap, tensor_path, pgm: bool = True) -> None:
    """Write a heatmap tensor file and, optionally, an 8-bit PGM rendering."""
    tensor_path = Path(tensor_path)
    write_tensor_file(heatmap.grid, tensor_path)
    if pgm:
        grid = np.round(heatmap.grid * 255).astype(np.uint8)
        h_cells, w_cells = grid.shape
        header = f"P5\n{w_cells} {h_cells}\n255\n".encode("ascii")
        tensor_path.with_suffix(".pgm").write_bytes(header + grid.tobytes(order="C"))
