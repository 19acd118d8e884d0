"""Synthetic construction-like scenes with ground-truth labels.

Surfaces are sampled on regular grids so point counts follow closed forms.
Optional position noise is isotropic Gaussian drawn from numpy's PCG64 bit
generator seeded with ``SceneSpec.seed`` (``Generator(PCG64(seed))
.standard_normal((n, 3))``, one draw for the whole scene after sampling).
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import PointCloud, SegmentedCloud
from .errors import ParseError, ValidationError
from .prep import RigidTransform

SHAPES = ("plane", "box_surface", "cylinder")
_NDIMS = {"plane": 2, "box_surface": 3, "cylinder": 2}
_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class Primitive:
    """One labeled surface.

    Local frames are centered on the origin: a plane spans x and y at z=0,
    a box spans all three axes, a cylinder (dimensions = radius, length)
    runs along z.
    """

    shape: str
    dimensions: tuple
    pose: RigidTransform = field(default_factory=RigidTransform.identity)
    color: tuple = (128, 128, 128)
    label: int = 1

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise ValidationError(f"unknown primitive shape {self.shape!r}")
        dims = tuple(float(d) for d in self.dimensions)
        if len(dims) != _NDIMS[self.shape]:
            raise ValidationError(f"{self.shape} needs {_NDIMS[self.shape]} dimensions")
        if not all(d > 0 for d in dims):
            raise ValidationError(f"primitive dimensions must be positive, got {dims}")
        if int(self.label) != self.label or self.label < 1:
            raise ValidationError("primitive labels must be integers >= 1")
        col = tuple(int(c) for c in self.color)
        if len(col) != 3 or not all(0 <= c <= 255 for c in col):
            raise ValidationError(f"bad primitive color {self.color}")
        object.__setattr__(self, "dimensions", dims)
        object.__setattr__(self, "color", col)
        object.__setattr__(self, "label", int(self.label))


@dataclass(frozen=True, eq=False)
class SceneSpec:
    primitives: tuple
    sample_spacing: float = 0.05
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.sample_spacing > 0:
            raise ValidationError("sample_spacing must be > 0")
        if not self.noise_sigma >= 0:
            raise ValidationError("noise_sigma must be >= 0")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")
        object.__setattr__(self, "primitives", tuple(self.primitives))

    def to_dict(self):
        return {
            "sample_spacing": self.sample_spacing,
            "noise_sigma": self.noise_sigma,
            "seed": int(self.seed),
            "primitives": [
                {"shape": p.shape, "dimensions": list(p.dimensions), "pose": p.pose.to_dict(),
                 "color": list(p.color), "label": p.label}
                for p in self.primitives
            ],
        }

    @classmethod
    def from_dict(cls, d):
        prims = []
        for p in d.get("primitives", []):
            pose = RigidTransform.from_dict(p["pose"]) if "pose" in p else RigidTransform.identity()
            prims.append(Primitive(p["shape"], p["dimensions"], pose,
                                   tuple(p.get("color", (128, 128, 128))), p.get("label", 1)))
        return cls(prims, d.get("sample_spacing", 0.05), d.get("noise_sigma", 0.0),
                   d.get("seed", 0))


def load_scene_spec(path):
    path = Path(path)
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", offset=exc.pos, path=path) from None
    try:
        return SceneSpec.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: bad scene spec ({exc})") from None


def _axis(length, spacing):
    """Inclusive grid over [-length/2, length/2] with steps no larger than spacing."""
    steps = max(1, math.ceil(length / spacing - _EPS))
    return np.linspace(-length / 2.0, length / 2.0, steps + 1)


def sample_primitive(prim, spacing):
    """Local-frame samples of one primitive (before its pose)."""
    if prim.shape == "plane":
        x, y = (_axis(d, spacing) for d in prim.dimensions)
        gx, gy = np.meshgrid(x, y, indexing="ij")
        return np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    if prim.shape == "box_surface":
        axes = [_axis(d, spacing) for d in prim.dimensions]
        ii = np.meshgrid(*[np.arange(a.size) for a in axes], indexing="ij")
        on_face = np.zeros(ii[0].shape, dtype=bool)
        for idx, a in zip(ii, axes):
            on_face |= (idx == 0) | (idx == a.size - 1)
        return np.column_stack([a[idx[on_face]] for a, idx in zip(axes, ii)])
    radius, length = prim.dimensions
    n_ang = max(3, math.ceil(2.0 * math.pi * radius / spacing - _EPS))
    ang = 2.0 * math.pi * np.arange(n_ang) / n_ang
    z = _axis(length, spacing)
    ga, gz = np.meshgrid(ang, z, indexing="ij")
    return np.column_stack([radius * np.cos(ga.ravel()), radius * np.sin(ga.ravel()), gz.ravel()])


def generate_scene(spec):
    parts, colors, labels = [], [], []
    for prim in spec.primitives:
        local = sample_primitive(prim, spec.sample_spacing)
        parts.append(prim.pose.apply(local))
        colors.append(np.tile(np.array(prim.color, dtype=np.uint8), (local.shape[0], 1)))
        labels.append(np.full(local.shape[0], prim.label, dtype=np.int64))
    if not parts:
        return SegmentedCloud(PointCloud.empty())
    pos = np.concatenate(parts)
    if spec.noise_sigma > 0:
        rng = np.random.Generator(np.random.PCG64(int(spec.seed)))
        pos = pos + spec.noise_sigma * rng.standard_normal(pos.shape)
    return SegmentedCloud(PointCloud(pos, np.concatenate(colors)), np.concatenate(labels))


# --------------------------------------------------------------------------
# canonical room

ROOM_CENTER = (0.3, 0.3, 1.5)
ROOM_LABELS = {"floor": 1, "wall_x": 2, "wall_y": 3, "box": 4, "pipe": 5, "occluder": 6}

# local z -> world x, local x -> world y, local y -> world z
_FACING_X = [[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]
# local x -> world x, local y -> world z, local z -> world -y
_FACING_Y = [[1.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]

_BOX_CENTER = (1.5, 1.5, 0.5)
_OCCLUDER_GAP = 0.05


def _diagonal_panel_pose(dist):
    """Panel normal along the horizontal diagonal (1, 1, 0), centered ``dist`` along it."""
    s = 1.0 / math.sqrt(2.0)
    rot = np.array([[-s, 0.0, s],
                    [s, 0.0, s],
                    [0.0, 1.0, 0.0]])
    return RigidTransform(rot, (dist * s, dist * s, 1.0))


def builtin_room_scene(occluder=False, sample_spacing=0.01):
    """A small room: floor, two walls, a box, an overhead pipe.

    The box is turned 45 degrees so one face looks straight at the default
    scan center ``ROOM_CENTER``.  With ``occluder`` a 2 x 2 m panel stands
    5 cm in front of that face and hides the whole box from the center.
    Colors are far apart in RGB so the built-in segmenter separates them.
    """
    prims = [
        Primitive("plane", (4.0, 4.0), RigidTransform.from_translation((1.0, 1.0, 0.0)),
                  (128, 128, 128), ROOM_LABELS["floor"]),
        Primitive("plane", (4.0, 3.0), RigidTransform(_FACING_X, (3.0, 1.0, 1.5)),
                  (0, 200, 0), ROOM_LABELS["wall_x"]),
        Primitive("plane", (4.0, 3.0), RigidTransform(_FACING_Y, (1.0, 3.0, 1.5)),
                  (230, 230, 0), ROOM_LABELS["wall_y"]),
        Primitive("box_surface", (1.0, 1.0, 1.0),
                  RigidTransform.about_z(math.pi / 4.0, _BOX_CENTER),
                  (255, 0, 0), ROOM_LABELS["box"]),
        Primitive("cylinder", (0.1, 2.0), RigidTransform(_FACING_X, (1.5, 2.5, 2.2)),
                  (0, 0, 255), ROOM_LABELS["pipe"]),
    ]
    if occluder:
        # distance along the diagonal from the world origin to the box's near face
        near_face = (_BOX_CENTER[0] + _BOX_CENTER[1]) / math.sqrt(2.0) - 0.5
        prims.append(Primitive("plane", (2.0, 2.0),
                               _diagonal_panel_pose(near_face - _OCCLUDER_GAP),
                               (255, 0, 255), ROOM_LABELS["occluder"]))
    return SceneSpec(prims, sample_spacing=sample_spacing)
