"""Parameter-free compression for document images and visual token sequences."""
from .aps import ApsParams, BandSet, SlimResult, aps
from .dts import AggregationResult, ClusterSplit, DtsParams, dts, kmeans2
from .flexres import ResizePolicy, flexible_resize

__all__ = [
    "ApsParams",
    "BandSet",
    "SlimResult",
    "aps",
    "AggregationResult",
    "ClusterSplit",
    "DtsParams",
    "dts",
    "kmeans2",
    "ResizePolicy",
    "flexible_resize",
]

__version__ = "0.1.0"
