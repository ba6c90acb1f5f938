"""Caption parsing: adjective-noun attribute extraction and TF-IDF priors.

Captions are tokenized, part-of-speech tagged against a small lexicon, and
chunked into adjective-noun phrases ("visual attributes"). A corpus of
caption files yields a :class:`Vocabulary`: the ordered attribute list, a
TF-IDF prior over attributes, and the per-image attribute sets that serve
as ground truth for inference, retrieval, and grounding.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

ADJ = "ADJ"
NOUN = "NOUN"
OTHER = "OTHER"

_TAGS = frozenset({ADJ, NOUN, OTHER})
_ADJ_SUFFIXES = ("ish", "colored", "coloured", "ed", "y")

VOCABULARY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Token:
    """A lowercase word with its coarse part-of-speech tag."""

    text: str
    tag: str


@dataclass(frozen=True)
class Attribute:
    """An adjective-noun phrase such as ("bright orange", "beak").

    The adjective may be multi-word (space-joined); equality and hashing
    follow the canonical lowercase "adjective noun" string.
    """

    adjective: str
    noun: str

    def __post_init__(self):
        if not self.adjective or not self.noun:
            raise ValueError("attribute needs a nonempty adjective and noun")

    @property
    def canonical(self) -> str:
        return f"{self.adjective} {self.noun}"


@dataclass
class CaptionDoc:
    """All captions attached to one image (CUB ships five per image)."""

    image_id: str
    captions: list[str]

    def __post_init__(self):
        if not self.captions:
            raise ValueError(f"caption doc {self.image_id!r} has no captions")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on whitespace, stripping edge punctuation.

    Internal punctuation is preserved, so "rose-pink throat," becomes
    ["rose-pink", "throat"]. Tokens that are pure punctuation are dropped.
    """
    tokens = []
    for raw in text.lower().split():
        word = raw.strip(string.punctuation)
        if word:
            tokens.append(word)
    return tokens


def load_lexicon(path) -> dict[str, str]:
    """Read a word<TAB>tag lexicon file (tags ADJ, NOUN, OTHER)."""
    lexicon: dict[str, str] = {}
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            word, tag = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{line_no}: expected word<TAB>tag") from None
        tag = tag.strip().upper()
        if tag not in _TAGS:
            raise ValueError(f"{path}:{line_no}: unknown tag {tag!r}")
        lexicon[word.strip().lower()] = tag
    return lexicon


@functools.lru_cache(maxsize=1)
def default_lexicon() -> dict[str, str]:
    """The bird-caption lexicon bundled with the package (do not mutate)."""
    ref = resources.files("filterlens") / "data" / "lexicon.tsv"
    with resources.as_file(ref) as path:
        return load_lexicon(path)


def _guess_tag(word: str, lexicon: dict[str, str]) -> str:
    # hyphenated compounds take the tag of their final segment ("rose-pink")
    if "-" in word:
        last = word.rsplit("-", 1)[-1]
        tag = lexicon.get(last)
        if tag is not None:
            return tag
        word = last
    if len(word) > 2 and any(word.endswith(s) for s in _ADJ_SUFFIXES):
        return ADJ
    return OTHER


def pos_tag(tokens: list[str], lexicon: dict[str, str] | None = None) -> list[Token]:
    """Tag tokens ADJ/NOUN/OTHER: lexicon lookup first, suffix heuristics after."""
    if lexicon is None:
        lexicon = default_lexicon()
    tagged = []
    for text in tokens:
        tag = lexicon.get(text)
        if tag is None:
            tag = _guess_tag(text, lexicon)
        tagged.append(Token(text, tag))
    return tagged


def chunk_attributes(tagged: list[Token]) -> list[Attribute]:
    """Collapse each maximal ADJ+ NOUN run into one attribute.

    Adjacent adjectives are space-joined ("bright orange beak" is a single
    attribute with adjective "bright orange"); a noun with no preceding
    adjective emits nothing. No recursive phrase structure is attempted.
    """
    attributes: list[Attribute] = []
    adjectives: list[str] = []
    for token in tagged:
        if token.tag == ADJ:
            adjectives.append(token.text)
        else:
            if token.tag == NOUN and adjectives:
                attributes.append(Attribute(" ".join(adjectives), token.text))
            adjectives = []
    return attributes


def extract_attributes(doc: CaptionDoc, lexicon: dict[str, str] | None = None) -> list[Attribute]:
    """All attributes in a caption doc, with multiplicity, in caption order."""
    if lexicon is None:
        lexicon = default_lexicon()
    found: list[Attribute] = []
    for caption in doc.captions:
        found.extend(chunk_attributes(pos_tag(tokenize(caption), lexicon)))
    return found


def tf(attribute: Attribute, doc: CaptionDoc, lexicon: dict[str, str] | None = None) -> int:
    """Number of occurrences of the attribute across all captions of one doc."""
    return extract_attributes(doc, lexicon).count(attribute)


def idf(
    attribute: Attribute,
    corpus: list[CaptionDoc],
    lexicon: dict[str, str] | None = None,
) -> float:
    """Natural log of (corpus size / docs containing the attribute).

    Raises ValueError for attributes that appear in no document.
    """
    if lexicon is None:
        lexicon = default_lexicon()
    containing = sum(
        1 for doc in corpus if attribute in set(extract_attributes(doc, lexicon))
    )
    if containing == 0:
        raise ValueError(f"unknown attribute: {attribute.canonical!r}")
    return math.log(len(corpus) / containing)


class Vocabulary:
    """Ordered attribute list with TF-IDF prior and per-image attribute sets.

    Attributes are ordered by descending corpus frequency (total occurrence
    count across all docs), ties broken by canonical string, so identical
    corpora always produce identical vocabularies. The prior is the
    L1-normalized vector of (mean TF over containing docs) * IDF scores; if
    every score is zero the prior degenerates to uniform.
    """

    def __init__(self, attributes, prior, doc_frequency, image_attributes):
        self.attributes: list[Attribute] = list(attributes)
        self.prior = np.asarray(prior, dtype=np.float64)
        self.doc_frequency = np.asarray(doc_frequency, dtype=np.int64)
        self.image_attributes: dict[str, frozenset[int]] = {
            image_id: frozenset(ids) for image_id, ids in image_attributes.items()
        }
        self._index = {a: i for i, a in enumerate(self.attributes)}
        self._validate()

    def _validate(self):
        n = len(self.attributes)
        if n == 0:
            raise ValueError("vocabulary has no attributes")
        if len(self._index) != n:
            raise ValueError("duplicate attributes in vocabulary")
        if self.prior.shape != (n,) or self.doc_frequency.shape != (n,):
            raise ValueError("prior/doc_frequency length does not match attributes")
        if np.any(self.prior < 0) or abs(float(self.prior.sum()) - 1.0) > 1e-6:
            raise ValueError("prior must be a probability distribution")
        for image_id, ids in self.image_attributes.items():
            if any(not 0 <= i < n for i in ids):
                raise ValueError(f"attribute id out of range for image {image_id!r}")

    def __len__(self) -> int:
        return len(self.attributes)

    def __contains__(self, attribute: Attribute) -> bool:
        return attribute in self._index

    def id_of(self, attribute: Attribute) -> int:
        try:
            return self._index[attribute]
        except KeyError:
            raise ValueError(f"unknown attribute: {attribute.canonical!r}") from None

    def sha256(self) -> str:
        """Hash of the ordered canonical attribute list (vocabulary identity)."""
        joined = "\n".join(a.canonical for a in self.attributes)
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()

    def to_json_dict(self) -> dict:
        return {
            "version": VOCABULARY_FORMAT_VERSION,
            "attributes": [
                {
                    "adjective": a.adjective,
                    "noun": a.noun,
                    "prior": float(self.prior[i]),
                    "doc_frequency": int(self.doc_frequency[i]),
                }
                for i, a in enumerate(self.attributes)
            ],
            "image_attributes": {
                image_id: sorted(self.image_attributes[image_id])
                for image_id in sorted(self.image_attributes)
            },
        }

    def save(self, path) -> None:
        Path(path).write_text(
            json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )

    @classmethod
    def load(cls, path) -> "Vocabulary":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        version = payload.get("version")
        if version != VOCABULARY_FORMAT_VERSION:
            raise ValueError(f"unsupported vocabulary version: {version!r}")
        attributes = [
            Attribute(entry["adjective"], entry["noun"])
            for entry in payload["attributes"]
        ]
        prior = [entry["prior"] for entry in payload["attributes"]]
        doc_frequency = [entry["doc_frequency"] for entry in payload["attributes"]]
        return cls(attributes, prior, doc_frequency, payload["image_attributes"])


def build_vocabulary(
    corpus: list[CaptionDoc], lexicon: dict[str, str] | None = None
) -> Vocabulary:
    """Extract all attributes from a caption corpus and compute the prior.

    Every doc contributes its attribute multiset; the per-image attribute
    sets are recorded for all docs, including docs that yielded nothing.
    """
    corpus = list(corpus)
    if not corpus:
        raise ValueError("empty caption corpus")
    if lexicon is None:
        lexicon = default_lexicon()

    per_doc: list[tuple[str, Counter]] = []
    seen_ids: set[str] = set()
    for doc in corpus:
        if doc.image_id in seen_ids:
            raise ValueError(f"duplicate image id in corpus: {doc.image_id!r}")
        seen_ids.add(doc.image_id)
        per_doc.append((doc.image_id, Counter(extract_attributes(doc, lexicon))))

    total: Counter = Counter()
    doc_freq: Counter = Counter()
    for _, counts in per_doc:
        total.update(counts)
        doc_freq.update(counts.keys())
    if not total:
        raise ValueError("empty vocabulary: no adjective-noun attributes found")

    attributes = sorted(total, key=lambda a: (-total[a], a.canonical))
    n_docs = len(corpus)
    df = np.array([doc_freq[a] for a in attributes], dtype=np.int64)
    mean_tf = np.array([total[a] for a in attributes], dtype=np.float64) / df
    scores = mean_tf * np.log(n_docs / df)
    score_sum = float(scores.sum())
    if score_sum > 0:
        prior = scores / score_sum
    else:
        prior = np.full(len(attributes), 1.0 / len(attributes))

    index = {a: i for i, a in enumerate(attributes)}
    image_attributes = {
        image_id: frozenset(index[a] for a in counts) for image_id, counts in per_doc
    }
    return Vocabulary(attributes, prior, df, image_attributes)


def caption_docs_from_dir(captions_dir) -> list[CaptionDoc]:
    """Load "<image_id>.txt" files (one caption per line) as a corpus."""
    captions_dir = Path(captions_dir)
    paths = sorted(captions_dir.glob("*.txt"))
    if not paths:
        raise FileNotFoundError(f"no caption files in {captions_dir}")
    docs = []
    for path in paths:
        lines = [
            line.strip()
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not lines:
            raise ValueError(f"caption file {path} is empty")
        docs.append(CaptionDoc(path.stem, lines))
    return docs
