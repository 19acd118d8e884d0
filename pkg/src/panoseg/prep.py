"""Scan preparation: alignment, cropping, outlier removal and scan-center choice."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from ._accel import resolve_threads
from .cloud import Aabb, PointCloud, SegmentedCloud, bounding_box
from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

_ROT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Proper rotation (3x3) followed by a translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (np.isfinite(r).all() and np.isfinite(t).all()):
            raise ValidationError("transform entries must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > _ROT_TOL:
            raise ValidationError("rotation is not orthonormal (R^T R != I)")
        if abs(np.linalg.det(r) - 1.0) > _ROT_TOL:
            raise ValidationError("rotation determinant is not +1")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, t):
        return cls(np.eye(3), t)

    @classmethod
    def about_z(cls, angle, translation=(0.0, 0.0, 0.0)):
        c, s = np.cos(angle), np.sin(angle)
        return cls([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]], translation)

    def apply(self, positions):
        return np.asarray(positions, dtype=np.float64) @ self.rotation.T + self.translation

    def inverse(self):
        rt = self.rotation.T
        return RigidTransform(rt, -(rt @ self.translation))

    def compose(self, other):
        """``self ∘ other``: apply ``other`` first."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def to_dict(self):
        return {"rotation": [float(v) for v in self.rotation.ravel()],
                "translation": [float(v) for v in self.translation]}

    @classmethod
    def from_dict(cls, d):
        try:
            rot = d["rotation"]
            tr = d["translation"]
        except (KeyError, TypeError):
            raise ValidationError("transform needs 'rotation' and 'translation'") from None
        if len(rot) != 9 or len(tr) != 3:
            raise ValidationError("transform needs 9 rotation and 3 translation numbers")
        return cls(np.array(rot, dtype=np.float64).reshape(3, 3), tr)


def load_transform(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos, path=path) from None
    return RigidTransform.from_dict(d)


def _as_segmented(cloud):
    return cloud if isinstance(cloud, SegmentedCloud) else SegmentedCloud(cloud)


def _like(original, seg):
    return seg if isinstance(original, SegmentedCloud) else seg.cloud


def apply_rigid_transform(cloud, transform):
    seg = _as_segmented(cloud)
    moved = PointCloud(transform.apply(seg.positions), seg.colors)
    return _like(cloud, SegmentedCloud(moved, seg.labels))


def crop_aabb(cloud, box):
    """Keep points inside the closed box; returns ``(cloud, kept_indices)``."""
    seg = _as_segmented(cloud)
    kept = np.flatnonzero(box.contains(seg.positions))
    return _like(cloud, seg.subset(kept)), kept


@dataclass(frozen=True)
class SorParams:
    k: int = 8
    alpha: float = 2.0

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"SOR k must be a positive integer, got {self.k}")
        if not (self.alpha >= 0):
            raise ValidationError(f"SOR alpha must be >= 0, got {self.alpha}")


def mean_knn_distances(positions, k, threads=None):
    """Mean Euclidean distance from each point to its k nearest other points."""
    positions = np.asarray(positions, dtype=np.float64)
    tree = cKDTree(positions)
    d, _ = tree.query(positions, k=k + 1, workers=resolve_threads(threads))
    # column 0 is the point itself (or a coincident duplicate, also at 0)
    return d[:, 1:].mean(axis=1)


def remove_statistical_outliers(cloud, params, threads=None):
    """Drop points whose mean k-NN distance exceeds ``mu + alpha * sigma``.

    ``sigma`` is the population standard deviation.  Returns
    ``(cloud, removed_indices)``.
    """
    seg = _as_segmented(cloud)
    n = len(seg)
    if not 1 <= params.k < n:
        raise ValidationError(f"SOR needs 1 <= k < point count, got k={params.k}, n={n}")
    if np.isinf(params.alpha):
        return cloud, np.zeros(0, dtype=np.int64)
    d = mean_knn_distances(seg.positions, params.k, threads)
    mu = d.mean()
    sigma = d.std()
    removed = np.flatnonzero(d > mu + params.alpha * sigma)
    keep = np.ones(n, dtype=bool)
    keep[removed] = False
    logger.info("SOR k=%d alpha=%g removed %d of %d points", params.k, params.alpha,
                removed.size, n)
    return _like(cloud, seg.subset(np.flatnonzero(keep))), removed


CENTER_MODES = ("origin", "centroid", "bbox_center", "explicit")


def estimate_scan_center(cloud, mode="origin", point=None):
    """Viewpoint for the panorama.

    ``mode`` is one of origin, centroid, bbox_center or explicit (with ``point``).
    """
    if mode == "origin":
        return np.zeros(3)
    if mode == "explicit":
        if point is None:
            raise ValidationError("explicit center mode needs a point")
        p = np.asarray(point, dtype=np.float64).reshape(3)
        if not np.isfinite(p).all():
            raise ValidationError("explicit center must be finite")
        return p
    if mode not in CENTER_MODES:
        raise ValidationError(f"unknown center mode {mode!r}")
    if len(cloud) == 0:
        raise ValidationError(f"center mode {mode!r} needs a non-empty cloud")
    if mode == "centroid":
        return np.asarray(cloud.positions).mean(axis=0)
    return np.array(bounding_box(cloud).center)


def parse_center(text):
    """Parse a ``--center`` value: origin, centroid, bbox or ``x,y,z``."""
    text = str(text).strip()
    if text in ("origin", "centroid"):
        return text, None
    if text in ("bbox", "bbox_center"):
        return "bbox_center", None
    parts = text.split(",")
    if len(parts) != 3:
        raise ValidationError(f"center must be origin|centroid|bbox|x,y,z, got {text!r}")
    try:
        return "explicit", tuple(float(v) for v in parts)
    except ValueError:
        raise ValidationError(f"bad center coordinates {text!r}") from None


def parse_box(text):
    """Parse ``minx,miny,minz,maxx,maxy,maxz`` into an Aabb."""
    parts = str(text).split(",")
    if len(parts) != 6:
        raise ValidationError(f"crop box needs 6 comma-separated numbers, got {text!r}")
    try:
        v = [float(p) for p in parts]
    except ValueError:
        raise ValidationError(f"bad crop box {text!r}") from None
    return Aabb(v[:3], v[3:])


def prepare(seg, transform=None, box=None, sor=None, threads=None):
    """Transform, crop, then SOR.  Returns ``(seg, kept_indices, stats)``."""
    kept = np.arange(len(seg))
    stats = {"input_points": len(seg)}
    if transform is not None:
        seg = apply_rigid_transform(seg, transform)
    if box is not None:
        seg, idx = crop_aabb(seg, box)
        kept = kept[idx]
        stats["cropped_points"] = int(stats["input_points"] - len(seg))
    if sor is not None:
        seg, removed = remove_statistical_outliers(seg, sor, threads)
        mask = np.ones(kept.size, dtype=bool)
        mask[removed] = False
        kept = kept[mask]
        stats["sor_removed_points"] = int(removed.size)
    stats["output_points"] = len(seg)
    return seg, kept, stats
