"""Built-in graph-based color segmentation of a panorama.

A deterministic stand-in for an external 2D segmenter: pixels are vertices
of a 4-connected grid, edges are weighted by RGB distance, and components
are merged greedily in the style of Felzenszwalb and Huttenlocher.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError
from .fusion import LabelMap


@dataclass(frozen=True)
class FhParams:
    k: float = 100.0
    min_size: int = 50

    def __post_init__(self):
        if not self.k > 0:
            raise ValidationError(f"segmenter k must be > 0, got {self.k}")
        if int(self.min_size) != self.min_size or self.min_size < 1:
            raise ValidationError(f"min_size must be a positive integer, got {self.min_size}")


def grid_edges(pixels):
    """Sorted 4-neighbor edges of an (h, w, 3) image.

    Sort key is (weight, row-major index of the first endpoint, right edge
    before down edge).  Returns ``(a, b, weight)``.
    """
    h, w = pixels.shape[:2]
    rgb = pixels.reshape(-1, 3).astype(np.int64)
    ids = np.arange(h * w, dtype=np.int64).reshape(h, w)
    # edge key 2*p for the right edge of p, 2*p + 1 for its down edge
    ra = ids[:, :-1].ravel()
    da = ids[:-1, :].ravel()
    a = np.concatenate([ra, da])
    b = np.concatenate([ra + 1, da + w])
    key = np.concatenate([2 * ra, 2 * da + 1])
    diff = rgb[a] - rgb[b]
    weight = np.sqrt((diff * diff).sum(axis=1).astype(np.float64))
    order = np.lexsort((key, weight))
    return a[order], b[order], weight[order]


def segment_color_graph(pano, params=FhParams(), backend=None):
    """Label every pixel with a segment id in 1..K.

    Ids are assigned in order of each segment's first pixel in row-major
    order.  No edges cross the left/right panorama seam.
    """
    px = pano.pixels
    h, w = px.shape[:2]
    if h < 1 or w < 1:
        raise ValidationError("cannot segment an empty image")
    a, b, weight = grid_edges(px)
    roots = kernels.graph_merge(h * w, a, b, weight, params.k, params.min_size, backend=backend)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(first.size, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(1, first.size + 1)
    return LabelMap(rank[inverse].reshape(h, w))
