"""2D label maps and their transfer onto the point cloud."""

import re
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from ._accel import resolve_threads
from .cloud import SegmentedCloud
from .errors import ParseError, ValidationError
from .evaluation import greedy_instance_match
from .projection import _netpbm_header, project_points


@dataclass(eq=False)
class LabelMap:
    """Per-pixel uint32 labels, shape (height, width); 0 = unlabeled."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 2:
            raise ValidationError(f"label map must be 2D, got shape {lab.shape}")
        if lab.size and (lab.min() < 0 or lab.max() > 0xFFFFFFFF):
            raise ValidationError("labels must fit in uint32")
        self.labels = np.ascontiguousarray(lab, dtype=np.uint32)

    @property
    def width(self):
        return self.labels.shape[1]

    @property
    def height(self):
        return self.labels.shape[0]

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self.labels, other.labels)


_LBL_HEADER = re.compile(rb"LBL1 (\d+) (\d+)\n")


def write_label_map(lmap, fmt="lbl1"):
    """Serialize as ``lbl1`` (default) or 8-bit ``pgm``."""
    if fmt == "lbl1":
        head = f"LBL1 {lmap.width} {lmap.height}\n".encode("ascii")
        return head + lmap.labels.astype("<u4").tobytes()
    if fmt == "pgm":
        if lmap.labels.size and lmap.labels.max() > 255:
            raise ValidationError("PGM label maps hold at most label 255")
        head = f"P5\n{lmap.width} {lmap.height}\n255\n".encode("ascii")
        return head + lmap.labels.astype(np.uint8).tobytes()
    raise ValidationError(f"unknown label map format {fmt!r}")


def parse_label_map(data):
    """Read an LBL1 or P5 (PGM, maxval <= 255) label map."""
    data = bytes(data)
    if data.startswith(b"P5"):
        w, h, maxval, off = _netpbm_header(data, b"P5")
        if maxval > 255:
            raise ParseError(f"only 8-bit PGM label maps are supported (maxval {maxval})",
                             offset=0)
        need = w * h
        if len(data) - off < need:
            raise ParseError(f"truncated label data: expected {need} bytes, found "
                             f"{len(data) - off}", offset=len(data))
        lab = np.frombuffer(data, dtype=np.uint8, count=need, offset=off)
        return LabelMap(lab.reshape(h, w).astype(np.uint32))
    if not data.startswith(b"LBL1"):
        raise ParseError("bad magic, expected LBL1 or P5", offset=0)
    m = _LBL_HEADER.match(data)
    if m is None:
        raise ParseError("malformed LBL1 header", offset=0)
    w, h = int(m.group(1)), int(m.group(2))
    off = m.end()
    need = w * h * 4
    have = len(data) - off
    if have != need:
        what = "truncated" if have < need else "oversized"
        raise ParseError(f"{what} label data: expected {need} bytes, found {have}",
                         offset=len(data) if have < need else off + need)
    lab = np.frombuffer(data, dtype="<u4", count=w * h, offset=off)
    return LabelMap(lab.reshape(h, w).astype(np.uint32))


@dataclass(frozen=True)
class FusionParams:
    mode: str = "visible"
    frustum_epsilon: float = 0.01
    fill_radius: float = 0.0
    fill_k: int = 5

    def __post_init__(self):
        if self.mode not in ("visible", "frustum"):
            raise ValidationError(f"fusion mode must be visible or frustum, got {self.mode!r}")
        if not self.frustum_epsilon >= 0:
            raise ValidationError("frustum_epsilon must be >= 0")
        if not self.fill_radius >= 0:
            raise ValidationError("fill_radius must be >= 0")
        if int(self.fill_k) != self.fill_k or self.fill_k < 1:
            raise ValidationError("fill_k must be a positive integer")


def backproject_labels(cloud, pmap, lmap, params=FusionParams(), spec=None):
    """Carry pixel labels onto points through the pixel-to-point map.

    Visible mode labels only z-buffer winners.  Frustum mode also labels any
    point falling on the same pixel within ``winner_depth * (1 + eps)``,
    which needs the ProjectionSpec used to build the map.
    """
    if isinstance(cloud, SegmentedCloud):
        cloud = cloud.cloud
    if (pmap.height, pmap.width) != (lmap.height, lmap.width):
        raise ValidationError(
            f"map is {pmap.width}x{pmap.height} but labels are {lmap.width}x{lmap.height}")
    n = len(cloud)
    idx = pmap.index.ravel()
    if idx.size and idx.max() >= n:
        raise ValidationError(f"map references point {int(idx.max())} but cloud has {n}")
    lab = lmap.labels.ravel().astype(np.int64)
    out = np.zeros(n, dtype=np.int64)
    hit = (idx >= 0) & (lab > 0)
    out[idx[hit]] = lab[hit]
    if params.mode == "frustum":
        if spec is None:
            raise ValidationError("frustum mode needs the projection spec")
        if (spec.height, spec.width) != (pmap.height, pmap.width):
            raise ValidationError("projection spec size differs from the map")
        u, v, r, valid = project_points(cloud.positions, spec)
        pix = np.where(valid, v * spec.width + u, 0)
        win = np.where(valid, idx[pix], -1)
        ok = valid & (win >= 0) & (lab[pix] > 0)
        # the winner's depth is recomputed, so maps read back from file behave the same
        ok[ok] = r[ok] <= r[win[ok]] * (1.0 + params.frustum_epsilon)
        out[ok] = lab[pix[ok]]
    return SegmentedCloud(cloud, out)


def majority_vote(votes):
    """Row-wise most frequent nonzero value; ties go to the smallest value.

    ``votes`` is an (n, m) integer array; rows with no nonzero entry give 0.
    """
    votes = np.asarray(votes, dtype=np.int64)
    n, m = votes.shape
    out = np.zeros(n, dtype=np.int64)
    if m == 0 or n == 0:
        return out
    chunk = max(1, 4_000_000 // (m * m))
    for s in range(0, n, chunk):
        v = votes[s:s + chunk]
        valid = v > 0
        counts = ((v[:, :, None] == v[:, None, :]) & valid[:, None, :]).sum(axis=2)
        # larger count first, then smaller label
        score = np.where(valid, counts.astype(np.int64) * (1 << 33) - v, np.iinfo(np.int64).min)
        best = np.argmax(score, axis=1)
        pick = v[np.arange(v.shape[0]), best]
        out[s:s + chunk] = np.where(valid.any(axis=1), pick, 0)
    return out


def _neighbor_labels(tree, labeled_pos, labeled_lab, queries, radius, k, workers):
    """Labels of the <= k nearest labeled points within ``radius`` (0 padding).

    Ties at the k-th distance are resolved by the smaller labeled-point index.
    """
    m = labeled_lab.size
    kq = min(k + 1, m)
    d, j = tree.query(queries, k=kq, distance_upper_bound=np.nextafter(radius, np.inf),
                      workers=workers)
    d = d.reshape(len(queries), kq)
    j = j.reshape(len(queries), kq)
    kk = min(k, m)
    found = np.isfinite(d[:, :kk])
    lab = np.where(found, labeled_lab[np.minimum(j[:, :kk], m - 1)], 0)
    if kq > kk:
        tied = np.isfinite(d[:, kk]) & (d[:, kk] == d[:, kk - 1])
        for row in np.flatnonzero(tied):
            # widened ball: the tree's own rounding may drop a point sitting exactly on it
            cand = np.array(tree.query_ball_point(queries[row], d[row, kk - 1] * (1 + 1e-9)),
                            dtype=np.int64)
            diff = labeled_pos[cand] - queries[row]
            dist = np.sqrt((diff * diff).sum(axis=1))
            inside = dist <= radius
            cand, dist = cand[inside], dist[inside]
            keep = cand[np.lexsort((cand, dist))[:kk]]
            lab[row] = 0
            lab[row, :keep.size] = labeled_lab[keep]
    return lab


def propagate_labels(seg, fill_radius, fill_k=5, threads=None):
    """One fill pass: unlabeled points take the majority label of nearby labeled points.

    Neighbors are the ``fill_k`` nearest labeled points within ``fill_radius``
    taken from a snapshot of the input, so the result does not depend on
    processing order.  Labeled points are never changed.
    """
    if not fill_radius >= 0:
        raise ValidationError("fill_radius must be >= 0")
    if int(fill_k) != fill_k or fill_k < 1:
        raise ValidationError("fill_k must be a positive integer")
    labels = seg.labels
    lab_mask = labels != 0
    if fill_radius == 0 or lab_mask.all() or not lab_mask.any():
        return seg
    pos = seg.positions
    labeled_pos = pos[lab_mask]
    labeled_lab = labels[lab_mask]
    targets = np.flatnonzero(~lab_mask)
    tree = cKDTree(labeled_pos)
    votes = _neighbor_labels(tree, labeled_pos, labeled_lab, pos[targets], float(fill_radius),
                             int(fill_k), resolve_threads(threads))
    out = labels.copy()
    out[targets] = majority_vote(votes)
    return seg.with_labels(out)


def merge_views(views, match_threshold=0.25):
    """Fuse several labelings of the same cloud into one.

    View 0 is the reference.  Each other view is renamed onto reference ids by
    greedy IoU matching; its unmatched segments receive fresh ids above the
    largest id handed out so far, in ascending source-label order.  Then each
    point takes the majority nonzero label across views (ties: smallest id).
    """
    views = list(views)
    if not views:
        raise ValidationError("merge_views needs at least one view")
    ref = views[0]
    for v in views[1:]:
        if len(v) != len(ref) or not np.array_equal(v.positions, ref.positions):
            raise ValidationError("all views must label the same cloud")
    if len(views) == 1:
        return ref
    # canonical processing order keeps fresh ids independent of how views 1.. are ordered
    others = sorted(views[1:], key=lambda v: v.labels.tobytes())
    next_id = int(ref.labels.max()) + 1 if len(ref) else 1
    aligned = [ref.labels]
    for v in others:
        mapping = greedy_instance_match(v, ref, match_threshold).mapping()
        src_ids = np.unique(v.labels[v.labels != 0])
        lut_ids = []
        for s in src_ids:
            s = int(s)
            if s not in mapping:
                mapping[s] = next_id
                next_id += 1
            lut_ids.append(mapping[s])
        pos = np.searchsorted(src_ids, v.labels)
        new = np.zeros(len(v), dtype=np.int64)
        nz = v.labels != 0
        new[nz] = np.asarray(lut_ids, dtype=np.int64)[pos[nz]]
        aligned.append(new)
    return ref.with_labels(majority_vote(np.column_stack(aligned)))
