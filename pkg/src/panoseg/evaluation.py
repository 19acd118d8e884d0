"""Segmentation quality metrics for labeled clouds.

Label 0 means "unlabeled".  Class metrics only look at points labeled in
both inputs; how many points carry a label at all is reported separately as
coverage.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .cloud import SegmentedCloud
from .errors import ValidationError


def _labels(x):
    return x.labels if isinstance(x, SegmentedCloud) else np.asarray(x, dtype=np.int64)


def _check_same(a, b):
    if isinstance(a, SegmentedCloud) and isinstance(b, SegmentedCloud):
        if len(a) != len(b) or not np.array_equal(a.positions, b.positions):
            raise ValidationError("labelings refer to different clouds")
    la, lb = _labels(a), _labels(b)
    if la.shape != lb.shape:
        raise ValidationError(f"labelings differ in length ({la.size} vs {lb.size})")
    return la, lb


def coverage(seg):
    labels = _labels(seg)
    if labels.size == 0:
        raise ValidationError("coverage of an empty cloud is undefined")
    return float(np.count_nonzero(labels)) / labels.size


@dataclass
class ConfusionMatrix:
    class_ids: list
    counts: np.ndarray  # counts[i, j]: ground truth class_ids[i], predicted class_ids[j]

    @property
    def total(self):
        return int(self.counts.sum())

    def to_dict(self):
        return {"class_ids": [int(c) for c in self.class_ids],
                "counts": [int(c) for c in self.counts.ravel()]}


def confusion(pred, gt):
    lp, lg = _check_same(pred, gt)
    ids = np.union1d(lp[lp != 0], lg[lg != 0])
    both = (lp != 0) & (lg != 0)
    gi = np.searchsorted(ids, lg[both])
    pi = np.searchsorted(ids, lp[both])
    k = ids.size
    counts = np.bincount(gi * k + pi, minlength=k * k).reshape(k, k).astype(np.int64)
    return ConfusionMatrix([int(c) for c in ids], counts)


def iou_report(pred, gt):
    """Per-class IoU over points labeled in both inputs, and their mean.

    The mean runs over classes that occur in the ground truth; returns
    ``(dict class -> iou, mean)`` with mean None when there is no such class.
    """
    lp, lg = _check_same(pred, gt)
    both = (lp != 0) & (lg != 0)
    p, g = lp[both], lg[both]
    classes = np.union1d(p, g)
    per_class = {}
    for c in classes:
        pc, gc = p == c, g == c
        inter = np.count_nonzero(pc & gc)
        union = np.count_nonzero(pc | gc)
        per_class[int(c)] = inter / union
    gt_classes = np.unique(g)
    # fsum is exactly rounded, so the mean does not depend on class-id order
    mean = (math.fsum(per_class[int(c)] for c in gt_classes) / gt_classes.size
            if gt_classes.size else None)
    return per_class, mean


def _pairs(x):
    return x * (x - 1) // 2


def rand_index(a, b):
    """Fraction of point pairs on which two labelings agree (same vs different segment)."""
    la, lb = _check_same(a, b)
    both = (la != 0) & (lb != 0)
    la, lb = la[both], lb[both]
    n = la.size
    if n < 2:
        raise ValidationError("rand index needs at least 2 points labeled in both inputs")
    _, ia = np.unique(la, return_inverse=True)
    _, ib = np.unique(lb, return_inverse=True)
    nb = int(ib.max()) + 1
    cont = np.bincount(ia.astype(np.int64) * nb + ib, minlength=(int(ia.max()) + 1) * nb)
    same_both = int(_pairs(cont.astype(np.int64)).sum())
    same_a = int(_pairs(np.bincount(ia).astype(np.int64)).sum())
    same_b = int(_pairs(np.bincount(ib).astype(np.int64)).sum())
    total = n * (n - 1) // 2
    agree = total + 2 * same_both - same_a - same_b
    return agree / total


@dataclass
class InstanceMatch:
    pred_id: int
    gt_id: int
    iou: float


@dataclass
class MatchResult:
    matches: list
    matched_mean_iou: float
    precision: float
    recall: float
    n_pred: int
    n_gt: int

    def mapping(self):
        return {m.pred_id: m.gt_id for m in self.matches}


def segment_ious(pred, gt):
    """IoU for every (pred segment, gt segment) pair that overlaps.

    Segment sets use all points carrying that label.  Returns parallel arrays
    ``(pred_ids, gt_ids, ious)`` plus the sorted segment id lists.
    """
    lp, lg = _check_same(pred, gt)
    pids, psize = np.unique(lp[lp != 0], return_counts=True)
    gids, gsize = np.unique(lg[lg != 0], return_counts=True)
    both = (lp != 0) & (lg != 0)
    pi = np.searchsorted(pids, lp[both])
    gi = np.searchsorted(gids, lg[both])
    ng = max(gids.size, 1)
    key, inter = np.unique(pi.astype(np.int64) * ng + gi, return_counts=True)
    kp, kg = np.divmod(key, ng)
    union = psize[kp] + gsize[kg] - inter
    return pids[kp], gids[kg], inter / union, pids, gids


def greedy_instance_match(pred, gt, iou_threshold=0.5):
    """Greedy one-to-one matching of segments by descending IoU.

    Ties are broken by smaller pred id, then smaller gt id; pairs with
    ``iou >= iou_threshold`` are accepted.
    """
    p_ids, g_ids, ious, pids, gids = segment_ious(pred, gt)
    order = np.lexsort((g_ids, p_ids, -ious))
    used_p, used_g = set(), set()
    matches = []
    for j in order:
        if ious[j] < iou_threshold:
            break
        p, g = int(p_ids[j]), int(g_ids[j])
        if p in used_p or g in used_g:
            continue
        used_p.add(p)
        used_g.add(g)
        matches.append(InstanceMatch(p, g, float(ious[j])))
    m = len(matches)
    return MatchResult(
        matches=matches,
        matched_mean_iou=math.fsum(x.iou for x in matches) / m if m else 0.0,
        precision=m / pids.size if pids.size else 0.0,
        recall=m / gids.size if gids.size else 0.0,
        n_pred=int(pids.size),
        n_gt=int(gids.size),
    )


@dataclass
class EvalReport:
    coverage: float
    per_class_iou: dict
    mean_iou: float
    rand_index: float
    instance_matches: list
    matched_mean_iou: float
    precision: float
    recall: float
    confusion: dict = field(default_factory=dict)
    gt_coverage: float = None

    def to_dict(self):
        d = asdict(self)
        d["per_class_iou"] = {str(k): v for k, v in sorted(self.per_class_iou.items())}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"


def evaluate(pred, gt, iou_threshold=0.5):
    """Full report comparing a predicted labeling to ground truth."""
    lp, lg = _check_same(pred, gt)
    per_class, mean = iou_report(lp, lg)
    try:
        ri = rand_index(lp, lg)
    except ValidationError:
        ri = None
    match = greedy_instance_match(lp, lg, iou_threshold)
    return EvalReport(
        coverage=coverage(lp),
        per_class_iou=per_class,
        mean_iou=mean,
        rand_index=ri,
        instance_matches=[asdict(m) for m in match.matches],
        matched_mean_iou=match.matched_mean_iou,
        precision=match.precision,
        recall=match.recall,
        confusion=confusion(lp, lg).to_dict(),
        gt_coverage=coverage(lg),
    )


def coverage_of_class(pred, gt, gt_label):
    """Fraction of points with ground truth ``gt_label`` that carry any predicted label."""
    lp, lg = _check_same(pred, gt)
    sel = lg == gt_label
    if not sel.any():
        raise ValidationError(f"ground truth has no points labeled {gt_label}")
    return float(np.count_nonzero(lp[sel])) / np.count_nonzero(sel)
