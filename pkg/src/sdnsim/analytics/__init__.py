"""Streaming analytics: features, clustering, decomposition, detection."""

from .detect import DetectionReport, cluster_sharpness, detect
from .features import FeatureVector, build_features
from .gaussian import (
    GaussComponent,
    decompose_gaussian_1d,
    density_minima,
    kernel_density,
    silverman_bandwidth,
)
from .kmeans import Clustering, compare_clusterings, kmeans

__all__ = [
    "Clustering",
    "DetectionReport",
    "FeatureVector",
    "GaussComponent",
    "build_features",
    "cluster_sharpness",
    "compare_clusterings",
    "decompose_gaussian_1d",
    "density_minima",
    "detect",
    "kernel_density",
    "kmeans",
    "silverman_bandwidth",
]
