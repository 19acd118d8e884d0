import json
import math

import numpy as np
import pytest

from panoseg.cloud import bounding_box, write_ply
from panoseg.errors import ValidationError
from panoseg.prep import RigidTransform
from panoseg.synth import (ROOM_CENTER, ROOM_LABELS, Primitive, SceneSpec, builtin_room_scene,
                           generate_scene, load_scene_spec, sample_primitive)

import oracles


def test_plane_count():
    seg = generate_scene(SceneSpec([Primitive("plane", (4, 4), label=3)], 0.1))
    assert len(seg) == 1681
    assert set(seg.labels.tolist()) == {3}


def test_cylinder_count():
    assert len(sample_primitive(Primitive("cylinder", (0.1, 2.0)), 0.1)) == 147


@pytest.mark.parametrize("dims, spacing", [((1, 1, 1), 0.1), ((2, 0.5, 1.3), 0.25), ((0.1, 0.1, 0.1), 1.0)])
def test_box_count_closed_form(dims, spacing):
    n = [math.ceil(d / spacing - 1e-9) + 1 for d in dims]
    inner = [max(0, k - 2) for k in n]
    pts = sample_primitive(Primitive("box_surface", dims), spacing)
    assert len(pts) == n[0] * n[1] * n[2] - inner[0] * inner[1] * inner[2]
    assert np.unique(pts, axis=0).shape[0] == len(pts)


def test_generation_is_deterministic():
    spec = builtin_room_scene(occluder=True, sample_spacing=0.05)
    assert write_ply(generate_scene(spec)) == write_ply(generate_scene(spec))
    noisy = SceneSpec(spec.primitives, 0.05, noise_sigma=0.01, seed=42)
    assert write_ply(generate_scene(noisy)) == write_ply(generate_scene(noisy))
    other = SceneSpec(spec.primitives, 0.05, noise_sigma=0.01, seed=43)
    assert write_ply(generate_scene(other)) != write_ply(generate_scene(noisy))


def test_noise_uses_documented_generator():
    prim = Primitive("plane", (1, 1))
    clean = generate_scene(SceneSpec([prim], 0.5))
    noisy = generate_scene(SceneSpec([prim], 0.5, noise_sigma=0.2, seed=7))
    draw = np.random.Generator(np.random.PCG64(7)).standard_normal((9, 3))
    assert np.array_equal(noisy.positions, clean.positions + 0.2 * draw)


def test_plane_points_satisfy_plane_equation():
    pose = RigidTransform.about_z(0.7, (1, 2, 3)).compose(
        RigidTransform([[1, 0, 0], [0, 0, -1], [0, 1, 0]], (0, 0, 0)))
    seg = generate_scene(SceneSpec([Primitive("plane", (2, 3), pose)], 0.1))
    normal = pose.rotation[:, 2]
    assert np.abs((seg.positions - pose.translation) @ normal).max() <= 1e-12


def test_invalid_primitives():
    with pytest.raises(ValidationError):
        Primitive("plane", (0, 1))
    with pytest.raises(ValidationError):
        Primitive("sphere", (1,))
    with pytest.raises(ValidationError):
        Primitive("plane", (1, 1), label=0)
    with pytest.raises(ValidationError):
        SceneSpec([], 0)


def test_room_labels():
    plain = generate_scene(builtin_room_scene(sample_spacing=0.05))
    occl = generate_scene(builtin_room_scene(occluder=True, sample_spacing=0.05))
    assert sorted(set(plain.labels.tolist())) == [1, 2, 3, 4, 5]
    assert sorted(set(occl.labels.tolist())) == [1, 2, 3, 4, 5, 6]
    assert bounding_box(plain).contains(np.array([ROOM_CENTER]))[0]


def test_occluder_hides_every_box_sample():
    spec = builtin_room_scene(occluder=True, sample_spacing=0.02)
    seg = generate_scene(spec)
    panel = spec.primitives[-1]
    assert panel.label == ROOM_LABELS["occluder"]
    r = panel.pose.rotation
    origin = np.array(ROOM_CENTER)
    box = seg.positions[seg.labels == ROOM_LABELS["box"]]
    hits = [oracles.ray_hits_rectangle(origin, p, panel.pose.translation, r[:, 0], r[:, 1],
                                       panel.dimensions[0] / 2, panel.dimensions[1] / 2)
            for p in box]
    assert all(hits)


def test_scene_spec_json(tmp_path):
    spec = builtin_room_scene(occluder=True, sample_spacing=0.1)
    f = tmp_path / "scene.json"
    f.write_text(json.dumps(spec.to_dict()))
    back = load_scene_spec(f)
    assert write_ply(generate_scene(back)) == write_ply(generate_scene(spec))


def test_grid_ignores_float_noise_in_length():
    # 3 * 0.1 == 0.30000000000000004, still three steps of 0.1
    pts = sample_primitive(Primitive("plane", (3 * 0.1, 0.1)), 0.1)
    assert len(pts) == 4 * 2
