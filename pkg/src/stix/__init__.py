"""Memory-resident spatio-textual indices: learned (RSMI family) and R*-tree based."""

from stix.core import (
    Bitmap,
    CorruptInputError,
    Dataset,
    KeywordVocabulary,
    KnnQuery,
    ResultSet,
    SnapshotFormatError,
    SpatioTextualObject,
    StixError,
    TrainingDivergedError,
    UnsupportedOperationError,
    WindowQuery,
    build_vocabulary,
    encode_bitmap,
)
from stix.geometry import Mbr
from stix.queryengine import (
    VARIANTS,
    IndexHandle,
    IndexParams,
    build_index,
    execute_bkq,
    execute_bwq,
)

__version__ = "0.1.0"

__all__ = [
    "Bitmap",
    "CorruptInputError",
    "Dataset",
    "IndexHandle",
    "IndexParams",
    "KeywordVocabulary",
    "KnnQuery",
    "Mbr",
    "ResultSet",
    "SnapshotFormatError",
    "SpatioTextualObject",
    "StixError",
    "TrainingDivergedError",
    "UnsupportedOperationError",
    "VARIANTS",
    "WindowQuery",
    "build_index",
    "build_vocabulary",
    "encode_bitmap",
    "execute_bkq",
    "execute_bwq",
]
