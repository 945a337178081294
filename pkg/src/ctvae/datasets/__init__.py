from ctvae.datasets.synthetic import (
    render_synthetic,
    render_all,
    classify_factors,
    bounding_box,
)
from ctvae.datasets.store import ImageStore, IngestError
from ctvae.datasets.transitions import (
    build_transitions,
    transition_count,
    per_action_counts,
    split_of_combination,
)
from ctvae.datasets.export import export_synthetic, load_export
from ctvae.datasets.archives import ingest_archive

__all__ = [
    "render_synthetic",
    "render_all",
    "classify_factors",
    "bounding_box",
    "ImageStore",
    "IngestError",
    "build_transitions",
    "transition_count",
    "per_action_counts",
    "split_of_combination",
    "export_synthetic",
    "load_export",
    "ingest_archive",
]
