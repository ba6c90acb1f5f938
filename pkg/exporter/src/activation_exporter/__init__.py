"""Bridge from a live PyTorch classifier to the filterlens exchange format."""

from .export import (
    ArchitectureMismatch,
    ExportConfig,
    ImageSpec,
    export,
    load_image_listing,
    load_keypoint_file,
    load_model,
    resolve_module,
)

__version__ = "0.1.0"
