"""Point-cloud ingestion: height-thresholded occupancy grids and labels.

Input format: one plain-text file per frame with one `x y h` point per
line (meters), plus a label file with one action letter per line. The
action alphabet is A (accelerate), D (decelerate), R (lane change right),
C (constant speed), mapped to indices 0 to 3.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ObservationSet

ACTION_LETTERS = "ADRC"
ACTION_INDEX = {letter: i for i, letter in enumerate(ACTION_LETTERS)}
DEFAULT_HEIGHT_THRESHOLD = -1.5


@dataclass
class PointCloud:
    """One frame of (x, y, h) samples in meters."""

    points: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.timestamp = float(self.timestamp)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if not math.isfinite(self.timestamp):
            raise ValueError("timestamp must be finite")


@dataclass
class GridSpec:
    """Extent and resolution of the occupancy discretization."""

    x_range: tuple
    y_range: tuple
    cells_x: int
    cells_y: int
    height_threshold: float = DEFAULT_HEIGHT_THRESHOLD

    def __post_init__(self):
        self.x_range = (float(self.x_range[0]), float(self.x_range[1]))
        self.y_range = (float(self.y_range[0]), float(self.y_range[1]))
        self.cells_x = int(self.cells_x)
        self.cells_y = int(self.cells_y)
        self.height_threshold = float(self.height_threshold)
        for name, (lo, hi) in (("x_range", self.x_range),
                               ("y_range", self.y_range)):
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"{name} must satisfy min < max, got ({lo}, {hi})")
        if self.cells_x < 1 or self.cells_y < 1:
            raise ValueError("cell counts must be at least 1")
        if not math.isfinite(self.height_threshold):
            raise ValueError("height_threshold must be finite")

    @property
    def resolution_x(self) -> float:
        return (self.x_range[1] - self.x_range[0]) / self.cells_x

    @property
    def resolution_y(self) -> float:
        return (self.y_range[1] - self.y_range[0]) / self.cells_y


@dataclass
class OccupancyGrid:
    """cells_y x cells_x matrix of maximum heights above the threshold."""

    values: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.timestamp = float(self.timestamp)
        if self.values.ndim != 2:
            raise ValueError("grid values must form a 2-D matrix")
        if np.any(self.values < 0) or not np.all(np.isfinite(self.values)):
            raise ValueError("grid values must be finite and nonnegative")


def points_to_grid(cloud: PointCloud, spec: GridSpec) -> OccupancyGrid:
    """Bin a frame into a grid of maximum shifted heights.

    Points below the height threshold or outside the ranges are dropped;
    each occupied cell holds max(h - height_threshold) over its points and
    empty cells are exactly 0. Points on the far range edge fall into the
    last cell.
    """
    values = np.zeros((spec.cells_y, spec.cells_x))
    pts = cloud.points
    if pts.shape[0]:
        x, y, h = pts[:, 0], pts[:, 1], pts[:, 2]
        keep = ((h >= spec.height_threshold)
                & (x >= spec.x_range[0]) & (x <= spec.x_range[1])
                & (y >= spec.y_range[0]) & (y <= spec.y_range[1]))
        x, y, h = x[keep], y[keep], h[keep]
        ix = np.minimum(((x - spec.x_range[0]) / spec.resolution_x).astype(np.int64),
                        spec.cells_x - 1)
        iy = np.minimum(((y - spec.y_range[0]) / spec.resolution_y).astype(np.int64),
                        spec.cells_y - 1)
        np.maximum.at(values, (iy, ix), h - spec.height_threshold)
    return OccupancyGrid(values=values, timestamp=cloud.timestamp)


def stack_frames(current: OccupancyGrid, previous: OccupancyGrid) -> np.ndarray:
    """Concatenate two frames into one observation vector, current first."""
    if current.values.shape != previous.values.shape:
        raise ValueError(f"grid shapes differ: {current.values.shape} vs "
                         f"{previous.values.shape}")
    return np.concatenate([current.values.ravel(), previous.values.ravel()])


def min_resolvable_velocity(resolution: float, f_s: float) -> float:
    """Smallest speed that moves an object by one cell between frames."""
    resolution = float(resolution)
    f_s = float(f_s)
    if resolution <= 0 or f_s <= 0:
        raise ValueError("resolution and sampling rate must be positive")
    return resolution * f_s


def load_point_file(path, timestamp: float = 0.0) -> PointCloud:
    """Parse one frame file of `x y h` lines."""
    rows = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            parts = text.split()
            if len(parts) != 3:
                raise ValueError(f"{path}: line {i}: expected 'x y h', "
                                 f"got {text!r}")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise ValueError(f"{path}: line {i}: non-numeric coordinate "
                                 f"in {text!r}") from None
    return PointCloud(points=np.asarray(rows, dtype=np.float64).reshape(-1, 3),
                      timestamp=timestamp)


def load_labels(path) -> np.ndarray:
    """Parse the one-letter-per-line action file."""
    labels = []
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if text not in ACTION_INDEX:
                raise ValueError(f"{path}: line {i}: unknown action {text!r}, "
                                 f"expected one of {ACTION_LETTERS}")
            labels.append(ACTION_INDEX[text])
    return np.asarray(labels, dtype=np.int64)


def load_labeled_sequence(frame_files, label_file, spec: GridSpec) -> ObservationSet:
    """Turn T frame files plus T-1 labels into stacked observations.

    Observation n pairs frame n+1 (current) with frame n (previous) and
    carries the nth label.
    """
    frame_files = list(frame_files)
    if len(frame_files) < 2:
        raise ValueError("need at least 2 frames to form an observation")
    labels = load_labels(label_file)
    if len(labels) != len(frame_files) - 1:
        raise ValueError(f"got {len(frame_files)} frames and {len(labels)} "
                         f"labels, need exactly {len(frame_files) - 1} labels")

    grids = [points_to_grid(load_point_file(path, timestamp=float(t)), spec)
             for t, path in enumerate(frame_files)]
    Z = np.stack([stack_frames(grids[t], grids[t - 1])
                  for t in range(1, len(grids))])
    return ObservationSet(Z=Z, u=labels, n_actions=len(ACTION_LETTERS))
