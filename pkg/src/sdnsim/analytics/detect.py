"""Attack verdicts from aggregate volume plus cluster shape.

An attack is declared when the aggregate byte rate toward the target
strictly exceeds the configured limit. Under attack, clusters that are both
intense (centroid upstream byte rate at or above the across-cluster mean)
and sharp (mean per-dimension coefficient of variation at or below the
across-cluster median) are flagged; their members become the suspicious
sources. Homogeneous senders produce near-zero coefficients of variation,
which is what separates a botnet's cluster from dispersed legitimate users.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..telemetry import ip_key
from .kmeans import Clustering


@dataclass
class DetectionReport:
    target: str
    aggregate_byte_rate: float
    threshold: float
    attack: bool
    suspicious_clusters: list[int] = field(default_factory=list)
    suspicious_sources: list[str] = field(default_factory=list)
    rationale: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "aggregate_byte_rate": self.aggregate_byte_rate,
            "threshold": self.threshold,
            "attack": self.attack,
            "suspicious_clusters": self.suspicious_clusters,
            "suspicious_sources": self.suspicious_sources,
            "rationale": self.rationale,
        }


def cluster_sharpness(centroid, std) -> float:
    """Mean coefficient of variation over dimensions with nonzero centroid."""
    ratios = [s / c for c, s in zip(centroid, std) if c != 0.0]
    if not ratios:
        return 0.0
    return float(sum(ratios) / len(ratios))


def detect(
    aggregate_byte_rate: float,
    threshold: float,
    clustering: Clustering,
    target: str = "",
) -> DetectionReport:
    """Build the verdict for one poll interval.

    The volume check is strict: a rate exactly at the threshold is normal.
    """
    attack = aggregate_byte_rate > threshold
    report = DetectionReport(target, aggregate_byte_rate, threshold, attack)

    intensities = [c[2] for c in clustering.centroids]
    sharpness = [
        cluster_sharpness(clustering.centroids[i], clustering.stds[i])
        for i in range(clustering.k)
    ]
    report.rationale = {
        "clusters": [
            {
                "index": i,
                "size": len(clustering.members[i]),
                "intensity": intensities[i],
                "sharpness": sharpness[i],
                "flagged": False,
            }
            for i in range(clustering.k)
        ],
        "low_confidence": False,
    }
    if not attack:
        return report

    if clustering.k == 1:
        # No comparison set: the lone cluster is suspicious by default.
        flagged = [0]
        report.rationale["low_confidence"] = True
    else:
        mean_intensity = float(np.mean(intensities))
        median_sharpness = float(np.median(sharpness))
        flagged = [
            i
            for i in range(clustering.k)
            if intensities[i] >= mean_intensity and sharpness[i] <= median_sharpness
        ]

    for i in flagged:
        report.rationale["clusters"][i]["flagged"] = True
    report.suspicious_clusters = flagged
    sources: set[str] = set()
    for i in flagged:
        sources.update(clustering.members[i])
    report.suspicious_sources = sorted(sources, key=ip_key)
    return report
