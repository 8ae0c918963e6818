"""blockcast: multi-modal sensor fusion for proactive mmWave blockage prediction.

Preprocessing pipelines for camera/GPS/LiDAR/radar streams, compact
trainable per-modality predictors, softmax-weighted late fusion, a
synthetic scenario generator with a geometric occlusion oracle, and an
evaluation/latency harness.
"""

__version__ = "0.1.0"

from ._kernels import COMPILED as KERNELS_COMPILED

__all__ = ["KERNELS_COMPILED", "__version__"]
