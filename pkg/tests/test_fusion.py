import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panoseg.errors import ParseError, ValidationError
from panoseg.fusion import (FusionParams, LabelMap, backproject_labels, majority_vote,
                            merge_views, parse_label_map, propagate_labels, write_label_map)
from panoseg.projection import ProjectionSpec, parse_pixel_map, project_equirectangular, write_pixel_map

from conftest import make_cloud

O = (0.0, 0.0, 0.0)


def test_lbl1_round_trip_single():
    m = LabelMap([[7]])
    data = write_label_map(m)
    assert data == b"LBL1 1 1\n" + bytes.fromhex("07000000")
    assert parse_label_map(data) == m


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_lbl1_round_trip_random(w, h, seed):
    rng = np.random.default_rng(seed)
    m = LabelMap(rng.integers(0, 2**32, (h, w), dtype=np.uint64))
    data = write_label_map(m)
    assert parse_label_map(data) == m
    assert write_label_map(parse_label_map(data)) == data


def test_pgm_label_map():
    assert parse_label_map(b"P5\n2 1\n255\n\x00\xff").labels.tolist() == [[0, 255]]
    m = LabelMap([[1, 2], [3, 250]])
    assert parse_label_map(write_label_map(m, "pgm")) == m
    with pytest.raises(ValidationError):
        write_label_map(LabelMap([[256]]), "pgm")


def test_label_map_errors():
    with pytest.raises(ParseError, match="truncated"):
        parse_label_map(b"LBL1 2 1\n" + bytes(7))
    with pytest.raises(ParseError, match="oversized"):
        parse_label_map(b"LBL1 1 1\n" + bytes(5))
    with pytest.raises(ParseError, match="magic"):
        parse_label_map(b"LBL2 1 1\n" + bytes(4))
    with pytest.raises(ParseError, match="truncated"):
        parse_label_map(b"P5\n2 2\n255\n\x00")


def _scene():
    seg = make_cloud([(2, 0, 0), (2.01, 0, 0), (2.05, 0, 0), (0, 3, 0)])
    spec = ProjectionSpec(O, 360, 180)
    _, pmap, _ = project_equirectangular(seg, spec)
    lab = np.zeros((180, 360), dtype=np.uint32)
    lab[90, 180] = 9
    return seg, spec, pmap, LabelMap(lab)


def test_all_zero_labels():
    seg, spec, pmap, _ = _scene()
    out = backproject_labels(seg, pmap, LabelMap(np.zeros((180, 360))))
    assert out.labels.tolist() == [0, 0, 0, 0]


def test_visible_labels_only_the_winner():
    seg, spec, pmap, lmap = _scene()
    assert backproject_labels(seg, pmap, lmap).labels.tolist() == [9, 0, 0, 0]


def test_frustum_labels_within_relative_depth():
    seg, spec, pmap, lmap = _scene()
    out = backproject_labels(seg, pmap, lmap, FusionParams("frustum", 0.01), spec)
    assert out.labels.tolist() == [9, 9, 0, 0]  # 2.01 <= 2*1.01 < 2.05


def test_frustum_same_result_from_map_file():
    seg, spec, pmap, lmap = _scene()
    reread = parse_pixel_map(write_pixel_map(pmap))
    params = FusionParams("frustum", 0.01)
    assert backproject_labels(seg, reread, lmap, params, spec) == \
        backproject_labels(seg, pmap, lmap, params, spec)


def test_backproject_errors():
    seg, spec, pmap, lmap = _scene()
    with pytest.raises(ValidationError):
        backproject_labels(seg, pmap, LabelMap(np.zeros((2, 2))))
    with pytest.raises(ValidationError):
        backproject_labels(seg, pmap, lmap, FusionParams("frustum"))
    with pytest.raises(ValidationError):
        backproject_labels(seg.subset([0]), pmap, LabelMap(np.ones((180, 360))))


@pytest.mark.parametrize("seed", range(6))
def test_visible_and_frustum_invariants(seed):
    rng = np.random.default_rng(seed)
    seg = make_cloud(rng.normal(size=(800, 3)))
    spec = ProjectionSpec(O, 24, 12)
    _, pmap, _ = project_equirectangular(seg, spec)
    lmap = LabelMap(rng.integers(0, 4, (12, 24)))
    vis = backproject_labels(seg, pmap, lmap)
    fr = backproject_labels(seg, pmap, lmap, FusionParams("frustum", 0.3), spec)
    assert np.count_nonzero(vis.labels) <= 24 * 12
    # each labeled point is a labeled pixel's winner carrying the same label
    for i in np.flatnonzero(vis.labels):
        v, u = np.argwhere(pmap.index == i)[0]
        assert lmap.labels[v, u] == vis.labels[i]
    assert np.array_equal(fr.labels[vis.labels != 0], vis.labels[vis.labels != 0])
    assert np.count_nonzero(fr.labels) >= np.count_nonzero(vis.labels)


def test_majority_vote():
    votes = [[1, 1, 2], [4, 2, 0], [0, 0, 0], [3, 3, 5], [7, 0, 7]]
    assert majority_vote(votes).tolist() == [1, 2, 0, 3, 7]


def test_propagate_radius_zero_is_identity():
    seg = make_cloud([(0, 0, 0), (1, 0, 0)], labels=[1, 0])
    assert propagate_labels(seg, 0.0) == seg


def test_propagate_strict_majority():
    pts = [(0.1, 0, 0), (0, 0.1, 0), (0, 0, 0.1), (0, 0, 0)]
    seg = make_cloud(pts, labels=[2, 2, 3, 0])
    assert propagate_labels(seg, 1.0, 3).labels.tolist() == [2, 2, 3, 2]


def test_propagate_tie_goes_to_smaller_label():
    seg = make_cloud([(1, 0, 0), (-1, 0, 0), (0, 0, 0)], labels=[4, 2, 0])
    assert propagate_labels(seg, 5.0, 2).labels[2] == 2


def test_propagate_without_neighbors_stays_zero():
    seg = make_cloud([(0, 0, 0), (10, 0, 0)], labels=[1, 0])
    assert propagate_labels(seg, 1.0).labels.tolist() == [1, 0]


def test_propagate_uses_snapshot():
    # the middle point would be reachable only through a freshly filled point
    seg = make_cloud([(0, 0, 0), (1, 0, 0), (2, 0, 0)], labels=[5, 0, 0])
    assert propagate_labels(seg, 1.0).labels.tolist() == [5, 5, 0]


def _propagate_oracle(pos, labels, radius, k):
    out = labels.copy()
    lab_idx = np.flatnonzero(labels)
    for i in np.flatnonzero(labels == 0):
        d = np.sqrt(((pos[lab_idx] - pos[i]) ** 2).sum(axis=1))
        cand = sorted((dd, j) for dd, j in zip(d, lab_idx) if dd <= radius)[:k]
        if cand:
            counts = {}
            for _, j in cand:
                counts[labels[j]] = counts.get(labels[j], 0) + 1
            out[i] = min(counts, key=lambda c: (-counts[c], c))
    return out


@pytest.mark.parametrize("seed", range(6))
def test_propagate_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    # integer grid coordinates give many exactly equal distances
    pos = rng.integers(0, 6, (300, 3)).astype(float)
    labels = np.where(rng.random(300) < 0.4, rng.integers(1, 4, 300), 0)
    seg = make_cloud(pos, labels=labels)
    k = int(rng.integers(1, 6))
    out = propagate_labels(seg, 1.5, k)
    assert np.array_equal(out.labels, _propagate_oracle(pos, labels, 1.5, k))
    assert np.count_nonzero(out.labels) >= np.count_nonzero(labels)


def test_merge_single_and_identical_views():
    seg = make_cloud(np.eye(3), labels=[1, 2, 0])
    assert merge_views([seg]) == seg
    assert merge_views([seg, seg]) == seg


def test_merge_majority_after_alignment():
    pos = np.arange(12.0).reshape(4, 3)
    ref = make_cloud(pos, labels=[1, 1, 2, 2])
    a = make_cloud(pos, labels=[1, 1, 2, 2])
    b = make_cloud(pos, labels=[7, 7, 7, 3])  # 7 aligns with 1, 3 with 2
    out = merge_views([ref, a, b])
    assert out.labels.tolist() == [1, 1, 2, 2]
    c = make_cloud(pos, labels=[5, 5, 6, 6])
    d = make_cloud(pos, labels=[2, 2, 2, 2])
    # d's single segment ties at IoU 0.5 with both reference ids and takes 1,
    # so point 2 sees aligned votes 2, 2, 1 and point 0 sees 1, 1, 1
    out = merge_views([ref, c, d])
    assert out.labels.tolist() == [1, 1, 2, 2]


def test_merge_votes_one_one_two():
    pos = np.arange(9.0).reshape(3, 3)
    ref = make_cloud(pos, labels=[1, 2, 2])
    a = make_cloud(pos, labels=[1, 2, 2])
    b = make_cloud(pos, labels=[2, 2, 2])  # aligns onto 2
    assert merge_views([ref, a, b]).labels[0] == 1


def test_merge_fresh_ids_for_unmatched():
    pos = np.arange(12.0).reshape(4, 3)
    ref = make_cloud(pos, labels=[1, 1, 0, 0])
    other = make_cloud(pos, labels=[0, 0, 9, 8])
    # 8 and 9 get 2 and 3 in ascending source order
    assert merge_views([ref, other]).labels.tolist() == [1, 1, 3, 2]


def test_merge_rejects_different_clouds():
    with pytest.raises(ValidationError):
        merge_views([make_cloud(np.eye(3)), make_cloud(np.eye(3) * 2)])
    with pytest.raises(ValidationError):
        merge_views([])


@pytest.mark.parametrize("seed", range(5))
def test_merge_invariant_under_view_permutation(seed):
    rng = np.random.default_rng(seed)
    pos = rng.normal(size=(60, 3))
    views = [make_cloud(pos, labels=rng.integers(0, 5, 60)) for _ in range(4)]
    ref = merge_views(views)
    for perm in itertools.permutations(views[1:]):
        assert merge_views([views[0], *perm]) == ref
