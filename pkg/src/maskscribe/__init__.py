"""maskscribe: change-mask transcription, loss numerics, and SCD metrics."""

__version__ = "0.1.0"

from .core_types import (
    BinaryMask,
    ChangeMask,
    ClassEntry,
    Direction,
    EmbeddingBatch,
    LossWeights,
    Quantity,
    ScdConfusion,
    SemanticQuadruple,
    TextDescription,
    validate_change_mask,
)
from .templates import (
    AttributeSelection,
    Vocabulary,
    parse_description,
    render,
    render_description,
    select_template,
)
from .transcriber import (
    QuantityThresholds,
    centroid,
    direction,
    quantity,
    region_stats,
    transcribe_mask,
)

__all__ = [
    "__version__",
    "AttributeSelection",
    "BinaryMask",
    "ChangeMask",
    "ClassEntry",
    "Direction",
    "EmbeddingBatch",
    "LossWeights",
    "Quantity",
    "QuantityThresholds",
    "ScdConfusion",
    "SemanticQuadruple",
    "TextDescription",
    "Vocabulary",
    "centroid",
    "direction",
    "parse_description",
    "quantity",
    "region_stats",
    "render",
    "render_description",
    "select_template",
    "transcribe_mask",
    "validate_change_mask",
]
