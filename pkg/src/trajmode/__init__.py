"""Travel mode identification from GPS trajectory scenes.

Pipeline: raw GPS segments -> cleaned, mode-labeled segments -> per-segment
kinematics -> rendered map scene (SVG) + structured movement narrative ->
per-modality embeddings -> combined scene embedding -> MLP travel-mode
classifier with an ablation harness.
"""

__version__ = "0.1.0"

from .trajectory import GpsPoint, LabelInterval, Mode, TrajectorySegment

__all__ = [
    "GpsPoint",
    "LabelInterval",
    "Mode",
    "TrajectorySegment",
    "__version__",
]
