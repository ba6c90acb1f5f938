"""Bit-exact activation exchange format and synthetic planted datasets.

Pooled activation vectors, optional spatial feature maps, and classifier
weights travel in a small binary tensor container ("FTNS") referenced from a
JSON manifest, decoupling the inference engine from whatever framework
produced the activations. The synthetic generator plants a known
filter-to-attribute association (captions, activations, spatial bumps, and
one-hot classifier weights all agree) so downstream inference can be checked
against ground truth.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attr_corpus import Attribute, CaptionDoc

TENSOR_MAGIC = b"FTNS"
TENSOR_VERSION = 1
TENSOR_DTYPE_F32 = 1
MANIFEST_VERSION = 1


class TensorFormatError(ValueError):
    """Raised when a tensor blob does not conform to the container format."""


class DatasetValidationError(ValueError):
    """Raised when a loaded dataset violates structural invariants."""

    def __init__(self, problems):
        self.problems = list(problems)
        summary = "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(f"dataset validation failed:\n{summary}")


def write_tensor(array) -> bytes:
    """Serialize a float32 tensor: magic, version, dtype, dims, payload.

    Layout: "FTNS", u8 version=1, u8 dtype=1 (little-endian float32),
    u8 ndim, ndim x u32 little-endian dims, row-major payload.
    """
    arr = np.ascontiguousarray(array, dtype="<f4")
    if arr.ndim == 0:
        raise TensorFormatError("refusing to write a zero-dimensional tensor")
    if arr.ndim > 255:
        raise TensorFormatError("too many dimensions")
    if any(d <= 0 for d in arr.shape):
        raise TensorFormatError("all dimensions must be positive")
    if any(d > 0xFFFFFFFF for d in arr.shape):
        raise TensorFormatError("dimension too large for u32")
    if not np.all(np.isfinite(arr)):
        raise TensorFormatError("refusing to write non-finite values")
    header = TENSOR_MAGIC + bytes((TENSOR_VERSION, TENSOR_DTYPE_F32, arr.ndim))
    dims = b"".join(struct.pack("<I", d) for d in arr.shape)
    return header + dims + arr.tobytes(order="C")


def read_tensor(data: bytes) -> np.ndarray:
    """Decode a tensor blob written by :func:`write_tensor`, losslessly."""
    if len(data) < 7:
        raise TensorFormatError("truncated header")
    if data[:4] != TENSOR_MAGIC:
        raise TensorFormatError(f"bad magic bytes: {data[:4]!r}")
    version, dtype, ndim = data[4], data[5], data[6]
    if version != TENSOR_VERSION:
        raise TensorFormatError(f"unsupported version: {version}")
    if dtype != TENSOR_DTYPE_F32:
        raise TensorFormatError(f"unsupported dtype code: {dtype}")
    if ndim == 0:
        raise TensorFormatError("zero-dimensional tensor")
    dims_end = 7 + 4 * ndim
    if len(data) < dims_end:
        raise TensorFormatError("truncated dimension list")
    dims = struct.unpack(f"<{ndim}I", data[7:dims_end])
    if any(d == 0 for d in dims):
        raise TensorFormatError("zero-sized dimension")
    count = int(np.prod(dims, dtype=np.int64))
    payload_end = dims_end + 4 * count
    if len(data) < payload_end:
        raise TensorFormatError("truncated payload")
    if len(data) > payload_end:
        raise TensorFormatError("trailing data after payload")
    values = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    if not np.all(np.isfinite(values)):
        raise TensorFormatError("non-finite values in payload")
    return values.reshape(dims).copy()


def write_tensor_file(array, path) -> None:
    Path(path).write_bytes(write_tensor(array))


def read_tensor_file(path) -> np.ndarray:
    return read_tensor(Path(path).read_bytes())


@dataclass(frozen=True)
class Keypoint:
    """A named ground-truth location in image pixel coordinates."""

    name: str
    x: float
    y: float
    visible: bool = True


@dataclass
class ImageRecord:
    """One image's activations, labels, and optional spatial annotations."""

    image_id: str
    pooled: np.ndarray
    true_class: int
    image_size: tuple[int, int]
    spatial: np.ndarray | None = None
    predicted_class: int | None = None
    keypoints: list[Keypoint] = field(default_factory=list)
    caption_file: Path | None = None


@dataclass
class Dataset:
    """Validated collection of image records plus the classifier weights."""

    images: list[ImageRecord]
    class_names: list[str]
    weights: np.ndarray
    n_filters: int
    vocabulary_ref: Path | None = None

    def __post_init__(self):
        self._by_id = {record.image_id: record for record in self.images}

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def image(self, image_id: str) -> ImageRecord:
        try:
            return self._by_id[image_id]
        except KeyError:
            raise ValueError(f"unknown image id: {image_id!r}") from None

    def pooled_matrix(self) -> np.ndarray:
        """Stack of pooled vectors, one row per image, float64."""
        return np.stack([r.pooled for r in self.images]).astype(np.float64)


def validate_dataset(dataset: Dataset) -> list[str]:
    """Collect every invariant violation (empty list means the dataset is clean)."""
    problems: list[str] = []
    n = dataset.n_filters
    o = dataset.n_classes
    if o == 0:
        problems.append("no class names")
    if dataset.weights.shape != (o, n):
        problems.append(
            f"weights shape {dataset.weights.shape} does not match "
            f"[{o} classes x {n} filters]"
        )
    seen: set[str] = set()
    for record in dataset.images:
        rid = record.image_id
        if rid in seen:
            problems.append(f"duplicate image id {rid!r}")
        seen.add(rid)
        if record.pooled.ndim != 1 or record.pooled.shape[0] != n:
            problems.append(
                f"image {rid!r}: pooled length {record.pooled.shape} != {n} filters"
            )
            continue
        if np.any(record.pooled < 0):
            problems.append(f"image {rid!r}: negative pooled activation")
        w, h = record.image_size
        if w <= 0 or h <= 0:
            problems.append(f"image {rid!r}: non-positive image size {record.image_size}")
        if not 0 <= record.true_class < o:
            problems.append(f"image {rid!r}: true_class {record.true_class} out of range")
        if record.predicted_class is not None and not 0 <= record.predicted_class < o:
            problems.append(
                f"image {rid!r}: predicted_class {record.predicted_class} out of range"
            )
        if record.spatial is not None:
            if record.spatial.ndim != 3 or record.spatial.shape[0] != n:
                problems.append(
                    f"image {rid!r}: spatial shape {record.spatial.shape} "
                    f"is not [{n}, H, W]"
                )
            else:
                means = record.spatial.astype(np.float64).mean(axis=(1, 2))
                drift = float(np.max(np.abs(means - record.pooled.astype(np.float64))))
                if drift > 1e-4:
                    problems.append(
                        f"image {rid!r}: spatial mean deviates from pooled by {drift:.2e}"
                    )
        for kp in record.keypoints:
            if not (np.isfinite(kp.x) and np.isfinite(kp.y)):
                problems.append(f"image {rid!r}: non-finite keypoint {kp.name!r}")
    return problems


def _keypoints_from_json(raw) -> list[Keypoint]:
    return [
        Keypoint(
            name=str(entry["name"]),
            x=float(entry["x"]),
            y=float(entry["y"]),
            visible=bool(entry.get("visible", True)),
        )
        for entry in raw
    ]


def load_dataset(manifest_path) -> Dataset:
    """Load and fully validate a dataset manifest.

    Structural violations are collected across all images and raised
    together as :class:`DatasetValidationError`; missing files surface as
    the usual I/O errors.
    """
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetValidationError([f"manifest is not valid JSON: {exc}"]) from None

    version = manifest.get("version")
    if version != MANIFEST_VERSION:
        raise DatasetValidationError([f"unsupported manifest version: {version!r}"])
    for key in ("n_filters", "class_names", "weights_file", "images"):
        if key not in manifest:
            raise DatasetValidationError([f"manifest missing required key {key!r}"])

    n_filters = int(manifest["n_filters"])
    class_names = [str(name) for name in manifest["class_names"]]
    weights = read_tensor_file(base / manifest["weights_file"])

    records = []
    for entry in manifest["images"]:
        if "id" not in entry or "pooled_file" not in entry:
            raise DatasetValidationError(
                [f"image entry missing id/pooled_file: {entry!r}"]
            )
        pooled = read_tensor_file(base / entry["pooled_file"])
        spatial = None
        if entry.get("spatial_file"):
            spatial = read_tensor_file(base / entry["spatial_file"])
        caption_file = None
        if entry.get("caption_file"):
            caption_file = base / entry["caption_file"]
        size = entry.get("image_size", [0, 0])
        records.append(
            ImageRecord(
                image_id=str(entry["id"]),
                pooled=pooled,
                true_class=int(entry["true_class"]),
                image_size=(int(size[0]), int(size[1])),
                spatial=spatial,
                predicted_class=(
                    int(entry["predicted_class"])
                    if entry.get("predicted_class") is not None
                    else None
                ),
                keypoints=_keypoints_from_json(entry.get("keypoints", [])),
                caption_file=caption_file,
            )
        )

    vocabulary_ref = None
    if manifest.get("vocabulary"):
        vocabulary_ref = base / manifest["vocabulary"]
    dataset = Dataset(
        images=records,
        class_names=class_names,
        weights=weights,
        n_filters=n_filters,
        vocabulary_ref=vocabulary_ref,
    )
    problems = validate_dataset(dataset)
    if problems:
        raise DatasetValidationError(problems)
    return dataset


def load_captions(dataset: Dataset) -> list[CaptionDoc]:
    """Read the caption docs referenced by a loaded dataset, in image order."""
    docs = []
    for record in dataset.images:
        if record.caption_file is None:
            continue
        lines = [
            line.strip()
            for line in record.caption_file.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        if not lines:
            raise ValueError(f"caption file {record.caption_file} is empty")
        docs.append(CaptionDoc(record.image_id, lines))
    return docs


# ---------------------------------------------------------------------------
# Synthetic planted datasets
# ---------------------------------------------------------------------------

GEN_ADJECTIVES = (
    "black", "white", "red", "orange", "yellow", "green", "blue", "purple",
    "brown", "gray", "pink", "tan", "golden", "silver", "olive", "rusty",
    "buff", "cream", "scarlet", "crimson", "turquoise", "teal", "maroon",
    "violet", "lavender", "beige", "ivory", "charcoal", "bright", "dark",
    "pale", "striped", "spotted", "speckled", "streaked", "barred",
    "mottled", "curved", "hooked", "slender",
)
GEN_NOUNS = (
    "beak", "bill", "head", "crown", "throat", "breast", "belly", "wing",
    "tail", "eye", "eyering", "eyebrow", "leg", "foot", "neck", "nape",
    "back", "chest", "feather", "stripe", "wingbar", "spot", "patch",
    "ring", "cheek", "flank", "rump", "crest", "chin", "shoulder",
    "collar", "mask", "band", "streak", "tip", "edge", "underside",
    "face", "forehead", "abdomen",
)

SYNTH_GRID = 14
SYNTH_IMAGE_PX = 224
_LOW_ACTIVATION = 0.1
_BUMP_SIGMA = 0.7
_CO_OCCUR_RATE = 0.3


def _bump_cells(grid: int) -> list[tuple[int, int]]:
    # bump sites sit on a stride-2 lattice so neighboring bumps never share
    # adjacent cells (keeps grounding peaks unambiguous); central sites come
    # first so small vocabularies get keypoints far from the image border
    center = (grid - 1) / 2
    cells = [(r, c) for r in range(0, grid, 2) for c in range(0, grid, 2)]
    cells.sort(key=lambda rc: ((rc[0] - center) ** 2 + (rc[1] - center) ** 2, rc))
    return cells


def _gaussian_map(grid: int, cell: tuple[int, int], mean_value: float) -> np.ndarray:
    rr, cc = np.meshgrid(np.arange(grid), np.arange(grid), indexing="ij")
    g = np.exp(-((rr - cell[0]) ** 2 + (cc - cell[1]) ** 2) / (2 * _BUMP_SIGMA**2))
    return g * (mean_value * grid * grid / g.sum())


def cell_center_px(cell: tuple[int, int], grid: int = SYNTH_GRID,
                   image_px: int = SYNTH_IMAGE_PX) -> tuple[float, float]:
    """Pixel-space center (x, y) of a grid cell under uniform scaling."""
    r, c = cell
    return ((c + 0.5) * image_px / grid, (r + 0.5) * image_px / grid)


def generate_synthetic(
    n_filters: int,
    n_attributes: int,
    n_images: int,
    n_classes: int,
    seed: int,
) -> tuple[Dataset, list[CaptionDoc], dict[int, Attribute]]:
    """Build a planted dataset where filter k stands for attribute k.

    Image i belongs to class (i mod n_classes) and always carries that
    class's attribute, plus a random sample of the attributes beyond the
    class range (each independently with probability 0.3). Pooled activation
    k is 1.0 plus uniform noise up to 0.05 when attribute k is present and
    0.1 otherwise; the spatial map for a present attribute is a Gaussian
    bump at the attribute's fixed keypoint cell, scaled so its mean equals
    the pooled value; classifier weight row m is one-hot on filter m.
    Captions read "a bird with {adjective} {noun}", one line per attribute.

    Returns (dataset, caption docs, planted filter->attribute map).
    """
    if n_filters != n_attributes:
        raise ValueError("n_filters must equal n_attributes (one filter per attribute)")
    if not 1 <= n_classes <= n_attributes:
        raise ValueError("need 1 <= n_classes <= n_attributes")
    if n_images < 1:
        raise ValueError("need at least one image")
    sites = _bump_cells(SYNTH_GRID)
    limit = min(len(GEN_ADJECTIVES), len(GEN_NOUNS), len(sites))
    if n_attributes > limit:
        raise ValueError(f"n_attributes must be at most {limit}")

    rng = np.random.default_rng(seed)
    attributes = [Attribute(GEN_ADJECTIVES[k], GEN_NOUNS[k]) for k in range(n_attributes)]
    cells = sites[:n_attributes]
    weights = np.zeros((n_classes, n_filters), dtype=np.float32)
    weights[np.arange(n_classes), np.arange(n_classes)] = 1.0

    records: list[ImageRecord] = []
    docs: list[CaptionDoc] = []
    n_extra = n_attributes - n_classes
    for i in range(n_images):
        cls = i % n_classes
        present = [cls]
        if n_extra:
            mask = rng.random(n_extra) < _CO_OCCUR_RATE
            present.extend(int(n_classes + j) for j in np.flatnonzero(mask))
        pooled = np.full(n_filters, _LOW_ACTIVATION, dtype=np.float64)
        pooled[present] = 1.0 + rng.uniform(0.0, 0.05, size=len(present))

        spatial = np.empty((n_filters, SYNTH_GRID, SYNTH_GRID), dtype=np.float64)
        for k in range(n_filters):
            if k in present:
                spatial[k] = _gaussian_map(SYNTH_GRID, cells[k], pooled[k])
            else:
                spatial[k] = pooled[k]

        keypoints = []
        captions = []
        for k in present:
            x, y = cell_center_px(cells[k])
            keypoints.append(Keypoint(GEN_NOUNS[k], x, y, True))
            captions.append(f"a bird with {attributes[k].adjective} {attributes[k].noun}")

        predicted = int(np.argmax(weights.astype(np.float64) @ pooled))
        image_id = f"img{i:05d}"
        records.append(
            ImageRecord(
                image_id=image_id,
                pooled=pooled.astype(np.float32),
                true_class=cls,
                image_size=(SYNTH_IMAGE_PX, SYNTH_IMAGE_PX),
                spatial=spatial.astype(np.float32),
                predicted_class=predicted,
                keypoints=keypoints,
            )
        )
        docs.append(CaptionDoc(image_id, captions))

    class_names = [f"class_{m:03d}" for m in range(n_classes)]
    dataset = Dataset(
        images=records, class_names=class_names, weights=weights, n_filters=n_filters
    )
    planted = {k: attributes[k] for k in range(n_filters)}
    return dataset, docs, planted


def write_dataset(dataset: Dataset, captions: list[CaptionDoc], out_dir) -> Path:
    """Write a dataset plus captions in the manifest/tensor layout.

    Returns the manifest path. Caption docs are matched to images by id;
    images without a caption doc get no caption_file entry.
    """
    out_dir = Path(out_dir)
    (out_dir / "tensors").mkdir(parents=True, exist_ok=True)
    (out_dir / "captions").mkdir(parents=True, exist_ok=True)
    docs_by_id = {doc.image_id: doc for doc in captions}

    write_tensor_file(dataset.weights, out_dir / "weights.ftns")
    entries = []
    for record in dataset.images:
        rid = record.image_id
        pooled_rel = f"tensors/{rid}.pooled.ftns"
        write_tensor_file(record.pooled, out_dir / pooled_rel)
        entry: dict = {
            "id": rid,
            "pooled_file": pooled_rel,
            "image_size": list(record.image_size),
            "true_class": record.true_class,
        }
        if record.spatial is not None:
            spatial_rel = f"tensors/{rid}.spatial.ftns"
            write_tensor_file(record.spatial, out_dir / spatial_rel)
            entry["spatial_file"] = spatial_rel
        if record.predicted_class is not None:
            entry["predicted_class"] = record.predicted_class
        if record.keypoints:
            entry["keypoints"] = [
                {"name": kp.name, "x": kp.x, "y": kp.y, "visible": kp.visible}
                for kp in record.keypoints
            ]
        doc = docs_by_id.get(rid)
        if doc is not None:
            caption_rel = f"captions/{rid}.txt"
            (out_dir / caption_rel).write_text(
                "\n".join(doc.captions) + "\n", encoding="utf-8"
            )
            entry["caption_file"] = caption_rel
        entries.append(entry)

    manifest = {
        "version": MANIFEST_VERSION,
        "n_filters": dataset.n_filters,
        "class_names": dataset.class_names,
        "weights_file": "weights.ftns",
        "images": entries,
    }
    manifest_path = out_dir / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path


def load_keypoint_mapping(path) -> dict[str, str]:
    """Read a noun<TAB>keypoint_name mapping file."""
    mapping: dict[str, str] = {}
    for line_no, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip() or line.startswith("#"):
            continue
        try:
            noun, keypoint = line.split("\t")
        except ValueError:
            raise ValueError(f"{path}:{line_no}: expected noun<TAB>keypoint") from None
        mapping[noun.strip().lower()] = keypoint.strip()
    return mapping
