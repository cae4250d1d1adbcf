"""Roadside traffic perception pipeline.

Camera models, landmark calibration, lookup-mask 3D localization,
detector-head numerical kernels, world-coordinate tracking, multi-camera
fusion, a synthetic roundabout simulator, and an evaluation suite.
"""

__version__ = "0.1.0"
