"""Nominal-behavior learning and distance-calibrated anomaly detection.

Training folds telemetry vectors into axis-aligned boxes in normalized
space: a vector within the formation epsilon of its nearest box extends
that box, otherwise it seeds a new point box. Scoring measures Euclidean
distance from a vector to the nearest box (zero inside). Calibration holds
out nominal vectors, records their distance distribution, and places the
anomaly threshold at an empirical quantile of it, so the declared
false-alarm rate is assumption-free.

Training is single-pass and therefore order-dependent; the input order is
part of the learned model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class AnomalyError(Exception):
    pass


NOMINAL = "NOMINAL"
ANOMALY = "ANOMALY"


@dataclass(frozen=True)
class ClusterSet:
    parameter_ids: tuple[str, ...]
    offsets: np.ndarray  # per-dimension normalization offset (training mean)
    scales: np.ndarray  # per-dimension normalization scale (training std, > 0)
    boxes: np.ndarray  # (n_clusters, dim, 2) lo/hi in normalized space
    formation_epsilon: float
    training_count: int

    @property
    def dimension(self) -> int:
        return len(self.parameter_ids)

    def normalize(self, vector: np.ndarray) -> np.ndarray:
        return (vector - self.offsets) / self.scales


@dataclass(frozen=True)
class MmsCalibration:
    distances: np.ndarray  # sorted ascending
    quantile_threshold: float
    threshold_distance: float


@dataclass(frozen=True)
class Score:
    verdict: str
    distance: float
    empirical_quantile: float


def _as_matrix(vectors, dim: int | None = None) -> np.ndarray:
    arr = np.asarray(vectors, dtype=float)
    if arr.ndim != 2 or arr.shape[0] == 0:
        raise AnomalyError("need a non-empty 2-D array of vectors")
    if dim is not None and arr.shape[1] != dim:
        raise AnomalyError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr


def _box_distances(boxes: np.ndarray, point: np.ndarray) -> np.ndarray:
    """Euclidean distance from a normalized point to each box (0 inside)."""
    below = boxes[:, :, 0] - point
    above = point - boxes[:, :, 1]
    gap = np.maximum(np.maximum(below, above), 0.0)
    return np.sqrt((gap * gap).sum(axis=1))


def train(vectors, epsilon: float, parameter_ids: list[str] | None = None) -> ClusterSet:
    data = _as_matrix(vectors)
    n, dim = data.shape
    if parameter_ids is None:
        parameter_ids = [f"x{i}" for i in range(dim)]
    if len(parameter_ids) != dim:
        raise AnomalyError("parameter_ids length must match vector dimension")
    if epsilon < 0:
        raise AnomalyError("epsilon must be >= 0")

    offsets = data.mean(axis=0)
    stds = data.std(axis=0)
    scales = np.where(stds > 0, stds, 1.0)
    normalized = (data - offsets) / scales

    boxes: list[np.ndarray] = []
    for row in normalized:
        if boxes:
            stack = np.stack(boxes)
            dists = _box_distances(stack, row)
            best = int(np.argmin(dists))
            if dists[best] <= epsilon:
                boxes[best] = np.stack(
                    [np.minimum(boxes[best][:, 0], row), np.maximum(boxes[best][:, 1], row)],
                    axis=1,
                )
                continue
        boxes.append(np.stack([row, row], axis=1))

    return ClusterSet(
        parameter_ids=tuple(parameter_ids),
        offsets=offsets,
        scales=scales,
        boxes=np.stack(boxes),
        formation_epsilon=epsilon,
        training_count=n,
    )


def distance(cluster_set: ClusterSet, vector) -> float:
    point = np.asarray(vector, dtype=float)
    if point.shape != (cluster_set.dimension,):
        raise AnomalyError(f"dimension mismatch: expected {cluster_set.dimension}")
    return float(_box_distances(cluster_set.boxes, cluster_set.normalize(point)).min())


def _empirical_quantile(sorted_values: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics at rank q*(n-1)."""
    n = len(sorted_values)
    pos = q * (n - 1)
    lo = int(np.floor(pos))
    hi = int(np.ceil(pos))
    if lo == hi:
        return float(sorted_values[lo])
    frac = pos - lo
    return float(sorted_values[lo] * (1 - frac) + sorted_values[hi] * frac)


def calibrate(cluster_set: ClusterSet, held_out_vectors, quantile: float) -> MmsCalibration:
    data = _as_matrix(held_out_vectors, cluster_set.dimension)
    if len(data) < 50:
        raise AnomalyError("calibration requires at least 50 held-out vectors")
    if not 0 < quantile < 1:
        raise AnomalyError("quantile must be in (0, 1)")
    normalized = (data - cluster_set.offsets) / cluster_set.scales
    dists = np.sort(
        np.array([_box_distances(cluster_set.boxes, row).min() for row in normalized])
    )
    return MmsCalibration(
        distances=dists,
        quantile_threshold=quantile,
        threshold_distance=_empirical_quantile(dists, quantile),
    )


def score(cluster_set: ClusterSet, calibration: MmsCalibration, vector) -> Score:
    d = distance(cluster_set, vector)
    quantile = float(np.searchsorted(calibration.distances, d, side="right")) / len(
        calibration.distances
    )
    verdict = ANOMALY if d > calibration.threshold_distance else NOMINAL
    return Score(verdict, d, quantile)


# -- serialization ------------------------------------------------------------
#
# Structured text: [parameters], [normalization], [clusters], [calibration].


def save_model(path: str, cluster_set: ClusterSet, calibration: MmsCalibration | None = None) -> None:
    lines = ["[parameters]"]
    lines += list(cluster_set.parameter_ids)
    lines.append("[normalization]")
    for i in range(cluster_set.dimension):
        lines.append(f"{cluster_set.offsets[i]:.12g} {cluster_set.scales[i]:.12g}")
    lines.append(f"[clusters] epsilon={cluster_set.formation_epsilon:.12g} "
                 f"training_count={cluster_set.training_count}")
    for box in cluster_set.boxes:
        flat = " ".join(f"{v:.12g}" for pair in box for v in pair)
        lines.append(flat)
    if calibration is not None:
        lines.append(f"[calibration] quantile={calibration.quantile_threshold:.12g}")
        lines.append(" ".join(f"{d:.12g}" for d in calibration.distances))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> tuple[ClusterSet, MmsCalibration | None]:
    params: list[str] = []
    norms: list[tuple[float, float]] = []
    boxes: list[list[float]] = []
    cal_dists: list[float] = []
    epsilon = 0.0
    training_count = 0
    quantile = 0.0
    section = ""
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("["):
                head, *rest = line.split()
                section = head.strip("[]")
                for part in rest:
                    k, _, v = part.partition("=")
                    if k == "epsilon":
                        epsilon = float(v)
                    elif k == "training_count":
                        training_count = int(v)
                    elif k == "quantile":
                        quantile = float(v)
                continue
            if section == "parameters":
                params.append(line)
            elif section == "normalization":
                a, b = line.split()
                norms.append((float(a), float(b)))
            elif section == "clusters":
                boxes.append([float(v) for v in line.split()])
            elif section == "calibration":
                cal_dists.extend(float(v) for v in line.split())
    dim = len(params)
    cluster_set = ClusterSet(
        parameter_ids=tuple(params),
        offsets=np.array([n[0] for n in norms]),
        scales=np.array([n[1] for n in norms]),
        boxes=np.array(boxes).reshape(len(boxes), dim, 2),
        formation_epsilon=epsilon,
        training_count=training_count,
    )
    calibration = None
    if cal_dists:
        dists = np.array(cal_dists)
        calibration = MmsCalibration(dists, quantile, _empirical_quantile(dists, quantile))
    return cluster_set, calibration
