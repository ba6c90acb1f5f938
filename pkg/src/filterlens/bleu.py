"""Sentence-level BLEU scoring of explanations against caption references.

Standard sentence BLEU: modified n-gram precision clipped against the best
per-reference counts, geometric mean over orders 1..max_n with add-one
smoothing of zero counts for n >= 2, and a brevity penalty against the
shortest reference. The report splits mean scores by whether the image was
classified correctly.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .attr_corpus import CaptionDoc, tokenize
from .data_ingest import Dataset
from .explanation import Explanation

DEFAULT_MAX_N = 4
CANDIDATE_MODES = ("sentence", "attributes")


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def sentence_bleu(
    candidate: str,
    references: list[str],
    max_n: int = DEFAULT_MAX_N,
    smoothing: bool = True,
) -> float:
    """BLEU score of a candidate sentence against reference sentences.

    Clipped n-gram matches are maximized over references. With smoothing
    on, a zero match count at order n >= 2 scores (0+1)/(total+1); orders
    with no candidate n-grams at all score 1 (nothing to get wrong), which
    keeps BLEU(s, {s}) = 1 for short sentences. The brevity penalty is
    exp(1 - r/c) for candidate length c below the shortest reference
    length r.
    """
    if max_n < 1:
        raise ValueError("max_n must be at least 1")
    if not references:
        raise ValueError("need at least one reference")
    cand = tokenize(candidate)
    if not cand:
        return 0.0
    refs = [tokenize(r) for r in references]

    precisions = []
    for n in range(1, max_n + 1):
        cand_counts = _ngram_counts(cand, n)
        total = max(len(cand) - n + 1, 0)
        clipped = 0
        if cand_counts:
            best = Counter()
            for ref in refs:
                ref_counts = _ngram_counts(ref, n)
                for gram in cand_counts:
                    best[gram] = max(best[gram], ref_counts.get(gram, 0))
            clipped = sum(min(count, best[gram]) for gram, count in cand_counts.items())
        if total == 0:
            precisions.append(1.0)
        elif clipped == 0 and n >= 2 and smoothing:
            precisions.append(1.0 / (total + 1))
        else:
            precisions.append(clipped / total)

    if any(p == 0.0 for p in precisions):
        return 0.0
    geo_mean = math.exp(sum(math.log(p) for p in precisions) / max_n)
    c = len(cand)
    r = min(len(ref) for ref in refs)
    brevity = 1.0 if c >= r else math.exp(1.0 - r / c)
    return brevity * geo_mean


@dataclass
class BleuReport:
    """Mean sentence BLEU split by prediction correctness."""

    score_correct: float | None
    score_wrong: float | None
    score_overall: float
    n_correct: int
    n_wrong: int

    def to_json_dict(self) -> dict:
        return {
            "correct": self.score_correct,
            "wrong": self.score_wrong,
            "overall": self.score_overall,
            "n_correct": self.n_correct,
            "n_wrong": self.n_wrong,
        }

    def to_text(self) -> str:
        def fmt(value) -> str:
            return "    -" if value is None else f"{value:.3f}"

        return (
            f"{'Correct':>9} {'Wrong':>9} {'Overall':>9}\n"
            f"{fmt(self.score_correct):>9} {fmt(self.score_wrong):>9} "
            f"{fmt(self.score_overall):>9}\n"
        )


def bleu_report(
    dataset: Dataset,
    explanations: dict[str, Explanation] | list[Explanation],
    captions: list[CaptionDoc] | dict[str, list[str]],
    max_n: int = DEFAULT_MAX_N,
    smoothing: bool = True,
    mode: str = "sentence",
) -> BleuReport:
    """Score each predicted image's explanation against its captions.

    ``mode`` selects the candidate string: the full rendered sentence, or
    just the space-joined attribute phrases.
    """
    if mode not in CANDIDATE_MODES:
        raise ValueError(f"mode must be one of {CANDIDATE_MODES}")
    if isinstance(explanations, list):
        explanations = {e.image_id: e for e in explanations}
    if isinstance(captions, list):
        captions = {doc.image_id: doc.captions for doc in captions}

    correct_scores: list[float] = []
    wrong_scores: list[float] = []
    for record in dataset.images:
        if record.predicted_class is None:
            continue
        explanation = explanations.get(record.image_id)
        if explanation is None:
            raise ValueError(f"explanation missing for image {record.image_id!r}")
        references = captions.get(record.image_id)
        if not references:
            raise ValueError(f"captions missing for image {record.image_id!r}")
        if mode == "sentence":
            candidate = explanation.sentence
        else:
            candidate = " ".join(a.canonical for a, _ in explanation.top_attributes)
        score = sentence_bleu(candidate, references, max_n=max_n, smoothing=smoothing)
        if record.predicted_class == record.true_class:
            correct_scores.append(score)
        else:
            wrong_scores.append(score)

    all_scores = correct_scores + wrong_scores
    if not all_scores:
        raise ValueError("no image carries a prediction")
    return BleuReport(
        score_correct=(
            sum(correct_scores) / len(correct_scores) if correct_scores else None
        ),
        score_wrong=sum(wrong_scores) / len(wrong_scores) if wrong_scores else None,
        score_overall=sum(all_scores) / len(all_scores),
        n_correct=len(correct_scores),
        n_wrong=len(wrong_scores),
    )
