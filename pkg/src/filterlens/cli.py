"""Command-line driver wiring the pipeline stages together.

Exit codes: 0 on success, 1 on validation errors (bad arguments, malformed
inputs, unknown ids), 2 on I/O errors. Diagnostics go to stderr; data goes
to files or to stdout as JSON. Given identical inputs and seed, every
subcommand writes byte-identical output regardless of worker count.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import attr_corpus, bleu, data_ingest, explanation, grounding, pdf_inference

logger = logging.getLogger("filterlens")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


class _UsageError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse would sys.exit(2) on bad flags; 2 is reserved for I/O errors
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _parse_attribute(text: str) -> attr_corpus.Attribute:
    words = text.strip().lower().split()
    if len(words) < 2:
        raise _UsageError(f"attribute must be 'adjective noun': {text!r}")
    return attr_corpus.Attribute(" ".join(words[:-1]), words[-1])


def _parse_alphas(text: str) -> tuple[float, ...]:
    try:
        alphas = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise _UsageError(f"bad alpha list: {text!r}") from None
    if not alphas or any(a <= 0 for a in alphas):
        raise _UsageError("alphas must be positive")
    return alphas


def _write_json(payload: dict, path: Path | None) -> None:
    text = json.dumps(payload, indent=2) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        path.write_text(text, encoding="utf-8")
        logger.info("wrote %s", path)


def _load_lexicon(args) -> dict[str, str]:
    if args.lexicon:
        return attr_corpus.load_lexicon(args.lexicon)
    return attr_corpus.default_lexicon()


def _load_inputs(args):
    dataset = data_ingest.load_dataset(args.manifest)
    vocabulary = attr_corpus.Vocabulary.load(args.vocab)
    fa_pdf = pdf_inference.load_filter_attribute_pdf(args.pdf, vocabulary)
    return dataset, vocabulary, fa_pdf


def cmd_build_vocab(args) -> int:
    corpus = attr_corpus.caption_docs_from_dir(args.captions)
    logger.info("parsed %d caption files", len(corpus))
    vocabulary = attr_corpus.build_vocabulary(corpus, _load_lexicon(args))
    vocabulary.save(args.out)
    logger.info("vocabulary: %d attributes -> %s", len(vocabulary), args.out)
    return EXIT_OK


def cmd_compute_pdf(args) -> int:
    dataset = data_ingest.load_dataset(args.manifest)
    vocabulary = attr_corpus.Vocabulary.load(args.vocab)
    fa_pdf = pdf_inference.compute_filter_attribute_pdf(dataset, vocabulary)
    pdf_inference.save_filter_attribute_pdf(fa_pdf, args.out)
    logger.info(
        "filter-attribute matrix [%d x %d] -> %s",
        fa_pdf.n_filters, fa_pdf.n_attributes, args.out,
    )
    return EXIT_OK


def cmd_explain(args) -> int:
    dataset, vocabulary, fa_pdf = _load_inputs(args)
    if args.image_id is not None:
        records = [dataset.image(args.image_id)]
    else:
        records = dataset.images
    results = []
    for record in records:
        class_id = args.class_id
        if class_id is None:
            class_id = record.predicted_class
        if class_id is None:
            raise ValueError(
                f"image {record.image_id!r} has no prediction; pass --class-id"
            )
        result = explanation.explain(
            dataset, vocabulary, fa_pdf, record.image_id, class_id, k=args.k
        )
        results.append(result.to_json_dict(dataset.class_names))
    _write_json({"explanations": results}, args.out)
    return EXIT_OK


def cmd_ground(args) -> int:
    dataset, vocabulary, fa_pdf = _load_inputs(args)
    attribute = _parse_attribute(args.attribute)
    heatmap = grounding.ground(dataset, fa_pdf, args.image_id, attribute)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    slug = attribute.canonical.replace(" ", "-")
    tensor_path = out_dir / f"{args.image_id}__{slug}.ftns"
    grounding.write_heatmap(heatmap, tensor_path, pgm=True)
    logger.info("heatmap -> %s (+ .pgm)", tensor_path)
    return EXIT_OK


def cmd_retrieve(args) -> int:
    dataset, vocabulary, fa_pdf = _load_inputs(args)
    query = [_parse_attribute(q) for q in args.query]
    explanations = explanation.explain_all(
        dataset, vocabulary, fa_pdf, k=args.k, workers=args.workers
    )
    result = grounding.retrieve(list(explanations.values()), query, vocabulary)
    _write_json(result.to_json_dict(), args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    dataset, vocabulary, fa_pdf = _load_inputs(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    alphas = _parse_alphas(args.alphas)

    explanations = explanation.explain_all(
        dataset, vocabulary, fa_pdf, k=args.k, workers=args.workers
    )
    if not explanations:
        raise ValueError("no image carries a prediction; nothing to evaluate")
    _write_json(
        {
            "explanations": [
                explanations[image_id].to_json_dict(dataset.class_names)
                for image_id in sorted(explanations)
            ]
        },
        out_dir / "explanations.json",
    )

    # retrieval against caption ground truth for the most frequent attributes
    explanation_list = list(explanations.values())
    results = [
        grounding.retrieve(explanation_list, [attribute])
        for attribute in vocabulary.attributes[: args.top_n]
    ]
    metrics = grounding.retrieval_metrics(results, vocabulary, top_n=args.top_n)
    _write_json(metrics.to_json_dict(), out_dir / "retrieval.json")
    (out_dir / "retrieval.txt").write_text(metrics.to_text(), encoding="utf-8")

    if args.mapping:
        if args.seed is None:
            raise ValueError("--seed is required for the random PCK baseline")
        mapping = data_ingest.load_keypoint_mapping(args.mapping)
        proposed = grounding.pck(
            dataset, vocabulary, fa_pdf, mapping, alphas=alphas, top_n=args.top_n
        )
        random_result, constant_result = grounding.pck_baselines(
            dataset, vocabulary, mapping, alphas=alphas, seed=args.seed,
            top_n=args.top_n,
        )
        ordered = [random_result, constant_result, proposed]
        _write_json(
            {"methods": [r.to_json_dict() for r in ordered]}, out_dir / "pck.json"
        )
        (out_dir / "pck.txt").write_text(
            grounding.pck_table(ordered, alphas), encoding="utf-8"
        )
    else:
        logger.info("no keypoint mapping given; skipping PCK")

    captions = data_ingest.load_captions(dataset)
    if captions:
        report = bleu.bleu_report(
            dataset,
            explanations,
            captions,
            max_n=args.bleu_max_n,
            smoothing=not args.no_bleu_smoothing,
            mode=args.bleu_mode,
        )
        _write_json(report.to_json_dict(), out_dir / "bleu.json")
        (out_dir / "bleu.txt").write_text(report.to_text(), encoding="utf-8")
    else:
        logger.info("manifest references no captions; skipping BLEU")
    return EXIT_OK


def cmd_report(args) -> int:
    dataset, vocabulary, fa_pdf = _load_inputs(args)
    report = explanation.failure_report(dataset, vocabulary, fa_pdf, k=args.k)
    if args.out is None:
        _write_json(report.to_json_dict(dataset.class_names), None)
    else:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        _write_json(report.to_json_dict(dataset.class_names), out_dir / "failures.json")
        (out_dir / "failures.txt").write_text(
            report.to_text(dataset.class_names), encoding="utf-8"
        )
    return EXIT_OK


def cmd_synth(args) -> int:
    dataset, captions, planted = data_ingest.generate_synthetic(
        n_filters=args.n_filters,
        n_attributes=args.n_attributes,
        n_images=args.n_images,
        n_classes=args.n_classes,
        seed=args.seed,
    )
    out_dir = Path(args.out)
    manifest_path = data_ingest.write_dataset(dataset, captions, out_dir)
    nouns = sorted({attribute.noun for attribute in planted.values()})
    (out_dir / "keypoint_mapping.tsv").write_text(
        "".join(f"{noun}\t{noun}\n" for noun in nouns), encoding="utf-8"
    )
    _write_json(
        {str(k): planted[k].canonical for k in sorted(planted)},
        out_dir / "planted.json",
    )
    logger.info("synthetic dataset -> %s", manifest_path)
    return EXIT_OK


def _add_common_inputs(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--manifest", required=True, help="dataset manifest JSON")
    parser.add_argument("--vocab", required=True, help="vocabulary JSON")
    parser.add_argument("--pdf", required=True, help="filter-attribute tensor file")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="filterlens", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-vocab", help="parse captions into a vocabulary")
    p.add_argument("--captions", required=True, help="directory of <image_id>.txt files")
    p.add_argument("--lexicon", help="word<TAB>tag lexicon (default: bundled)")
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("compute-pdf", help="infer the filter-attribute matrix")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True, type=Path)
    p.set_defaults(func=cmd_compute_pdf)

    p = sub.add_parser("explain", help="explanation sentences as JSON")
    _add_common_inputs(p)
    p.add_argument("--image-id", help="single image (default: all)")
    p.add_argument("--class-id", type=int, help="class to explain (default: predicted)")
    p.add_argument("--k", type=int, default=explanation.DEFAULT_TOP_K)
    p.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ground", help="attribute heatmap for one image")
    _add_common_inputs(p)
    p.add_argument("--image-id", required=True)
    p.add_argument("--attribute", required=True, help="e.g. 'orange beak'")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_ground)

    p = sub.add_parser("retrieve", help="rank images containing query attributes")
    _add_common_inputs(p)
    p.add_argument("query", nargs="+", help="attributes, e.g. 'white head'")
    p.add_argument("--k", type=int, default=explanation.DEFAULT_TOP_K)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", type=Path, help="write JSON here instead of stdout")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="PCK, retrieval, and BLEU reports")
    _add_common_inputs(p)
    p.add_argument("--mapping", help="noun<TAB>keypoint TSV enabling PCK")
    p.add_argument("--alphas", default="0.1,0.2,0.3")
    p.add_argument("--top-n", type=int, default=grounding.DEFAULT_TOP_N_ATTRIBUTES)
    p.add_argument("--k", type=int, default=explanation.DEFAULT_TOP_K)
    p.add_argument("--bleu-max-n", type=int, default=bleu.DEFAULT_MAX_N)
    p.add_argument("--no-bleu-smoothing", action="store_true")
    p.add_argument("--bleu-mode", choices=bleu.CANDIDATE_MODES, default="sentence")
    p.add_argument("--seed", type=int, help="seed for the random PCK baseline")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="failure report for misclassified images")
    _add_common_inputs(p)
    p.add_argument("--k", type=int, default=explanation.DEFAULT_TOP_K)
    p.add_argument("--out", help="report directory (default: JSON to stdout)")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a planted synthetic dataset")
    p.add_argument("--n-filters", type=int, required=True)
    p.add_argument("--n-attributes", type=int, required=True)
    p.add_argument("--n-images", type=int, required=True)
    p.add_argument("--n-classes", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr, format="%(levelname)s %(message)s", level=logging.INFO
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        if getattr(args, "workers", 1) < 1:
            raise _UsageError("--workers must be at least 1")
        return args.func(args)
    except (FileNotFoundError, IsADirectoryError, NotADirectoryError, PermissionError) as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except OSError as exc:
        logger.error("%s", exc)
        return EXIT_IO
    except ValueError as exc:
        logger.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
