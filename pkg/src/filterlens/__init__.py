"""filterlens: textual explanation of CNN classifiers.

Associates final-convolutional-layer filters with caption-derived
adjective-noun attributes through posterior inference, then uses the
resulting distributions to explain classification decisions in plain
sentences, contrast candidate classes, ground attributes as heatmaps,
retrieve images by attribute, and score the explanations (PCK, retrieval
contingency metrics, sentence BLEU).
"""

from .attr_corpus import (
    ADJ,
    NOUN,
    OTHER,
    Attribute,
    CaptionDoc,
    Token,
    Vocabulary,
    build_vocabulary,
    caption_docs_from_dir,
    chunk_attributes,
    default_lexicon,
    extract_attributes,
    idf,
    load_lexicon,
    pos_tag,
    tf,
    tokenize,
)
from .bleu import BleuReport, bleu_report, sentence_bleu
from .data_ingest import (
    Dataset,
    DatasetValidationError,
    ImageRecord,
    Keypoint,
    TensorFormatError,
    generate_synthetic,
    load_captions,
    load_dataset,
    load_keypoint_mapping,
    read_tensor,
    read_tensor_file,
    validate_dataset,
    write_dataset,
    write_tensor,
    write_tensor_file,
)
from .explanation import (
    ContrastiveExplanation,
    Explanation,
    FailureReport,
    contrast,
    explain,
    explain_all,
    failure_report,
    merge_adjectives,
    render_sentence,
    top_k,
)
from .grounding import (
    Heatmap,
    PckResult,
    RetrievalMetrics,
    RetrievalResult,
    ground,
    heatmap_peak,
    pck,
    pck_baselines,
    pck_table,
    retrieval_metrics,
    retrieve,
    write_heatmap,
)
from .pdf_inference import (
    AttributePdf,
    FilterAttributePdf,
    class_attribute_pdf,
    compute_filter_attribute_pdf,
    filter_given_image,
    filter_importance,
    image_class_attribute_pdf,
    load_filter_attribute_pdf,
    membership_matrix,
    save_filter_attribute_pdf,
    sigma,
)

__version__ = "0.1.0"
