"""Point cloud value types and PLY / XYZRGB readers and writers."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError

logger = logging.getLogger(__name__)

DEFAULT_COLOR = (128, 128, 128)


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Positions (n, 3) float64 in meters and colors (n, 3) uint8."""

    positions: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        col = np.asarray(self.colors)
        if col.size == 0:
            col = col.reshape(-1, 3)
        if col.ndim != 2 or col.shape[1] != 3:
            raise ValidationError(f"colors must have shape (n, 3), got {col.shape}")
        if col.shape[0] != pos.shape[0]:
            raise ValidationError(
                f"positions and colors differ in length ({pos.shape[0]} vs {col.shape[0]})")
        if not np.isfinite(pos).all():
            raise ValidationError("positions must be finite")
        if col.dtype != np.uint8:
            if np.any((col < 0) | (col > 255)) or not np.all(np.equal(np.mod(col, 1), 0)):
                raise ValidationError("colors must be integers in 0..255")
            col = col.astype(np.uint8)
        object.__setattr__(self, "positions", _frozen(pos))
        object.__setattr__(self, "colors", _frozen(col))

    def __len__(self):
        return self.positions.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (np.array_equal(self.positions, other.positions)
                and np.array_equal(self.colors, other.colors))

    def subset(self, indices):
        return PointCloud(self.positions[indices], self.colors[indices])

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.uint8))


@dataclass(frozen=True, eq=False)
class SegmentedCloud:
    """A cloud plus one non-negative integer label per point (0 = unlabeled)."""

    cloud: PointCloud
    labels: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.cloud)
        if self.labels is None:
            labels = np.zeros(n, dtype=np.int64)
        else:
            labels = np.asarray(self.labels)
            if labels.size and not np.issubdtype(labels.dtype, np.integer):
                raise ValidationError("labels must be integers")
            labels = labels.astype(np.int64).reshape(-1)
        if labels.shape[0] != n:
            raise ValidationError(f"labels length {labels.shape[0]} != cloud length {n}")
        if labels.size and labels.min() < 0:
            raise ValidationError("labels must be non-negative")
        object.__setattr__(self, "labels", _frozen(labels))

    def __len__(self):
        return len(self.cloud)

    @property
    def positions(self):
        return self.cloud.positions

    @property
    def colors(self):
        return self.cloud.colors

    def __eq__(self, other):
        if not isinstance(other, SegmentedCloud):
            return NotImplemented
        return self.cloud == other.cloud and np.array_equal(self.labels, other.labels)

    def with_labels(self, labels):
        return SegmentedCloud(self.cloud, labels)

    def subset(self, indices):
        return SegmentedCloud(self.cloud.subset(indices), self.labels[indices])


@dataclass(frozen=True)
class Aabb:
    min: tuple
    max: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in self.min)
        hi = tuple(float(v) for v in self.max)
        if len(lo) != 3 or len(hi) != 3:
            raise ValidationError("Aabb corners must have 3 components")
        if any(a > b for a, b in zip(lo, hi)):
            raise ValidationError(f"Aabb min {lo} exceeds max {hi}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def contains(self, positions):
        p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        return np.all((p >= np.array(self.min)) & (p <= np.array(self.max)), axis=1)

    @property
    def center(self):
        return tuple((a + b) / 2.0 for a, b in zip(self.min, self.max))


def bounding_box(cloud):
    pos = cloud.positions
    if pos.shape[0] == 0:
        raise ValidationError("bounding box of an empty cloud is undefined")
    return Aabb(tuple(pos.min(axis=0)), tuple(pos.max(axis=0)))


# --------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


@dataclass
class PlyInfo:
    """Side information gathered while parsing a PLY file."""

    encoding: str
    vertex_count: int
    properties: list
    trailing_bytes: int = 0
    colors_defaulted: bool = False


@dataclass
class _Element:
    name: str
    count: int
    props: list = field(default_factory=list)  # (name, dtype str) or (name, None) for lists


def _parse_ply_header(data):
    if not data.startswith(b"ply"):
        raise ParseError("missing 'ply' magic", offset=0)
    pos = 0
    fmt = None
    elements = []
    n = len(data)
    lineno = 0
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError("header ends without 'end_header'", offset=n)
        raw = data[pos:nl]
        line_offset = pos
        pos = nl + 1
        lineno += 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise ParseError("non-ASCII bytes in header (missing 'end_header'?)",
                             offset=line_offset) from None
        if lineno == 1:
            if line != "ply":
                raise ParseError("missing 'ply' magic", offset=0)
            continue
        if not line or line.startswith(("comment", "obj_info")):
            continue
        words = line.split()
        key = words[0]
        if key == "end_header":
            break
        if key == "format":
            if len(words) != 3:
                raise ParseError(f"malformed format line {line!r}", offset=line_offset)
            if words[1] not in ("ascii", "binary_little_endian") or words[2] != "1.0":
                raise ParseError(f"unsupported PLY format {words[1]} {words[2]}",
                                 offset=line_offset)
            fmt = words[1]
        elif key == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise ParseError(f"malformed element line {line!r}", offset=line_offset)
            elements.append(_Element(words[1], int(words[2])))
        elif key == "property":
            if not elements:
                raise ParseError("property before any element", offset=line_offset)
            if len(words) == 5 and words[1] == "list":
                elements[-1].props.append((words[4], None))
            elif len(words) == 3 and words[1] in _PLY_TYPES:
                elements[-1].props.append((words[2], _PLY_TYPES[words[1]]))
            else:
                raise ParseError(f"unsupported property line {line!r}", offset=line_offset)
        else:
            raise ParseError(f"unknown header keyword {key!r}", offset=line_offset)
    if fmt is None:
        raise ParseError("header has no format line", offset=0)
    return fmt, elements, pos


def _check_vertex_props(vertex):
    names = [p[0] for p in vertex.props]
    types = dict(vertex.props)
    if any(t is None for t in types.values()):
        raise ParseError("list properties are not supported on the vertex element")
    for axis in "xyz":
        if axis not in types:
            raise ParseError(f"vertex element lacks property {axis!r}")
        if types[axis] not in ("f4", "f8"):
            raise ParseError(f"vertex property {axis!r} must be float or double")
    has_color = all(c in types for c in ("red", "green", "blue"))
    if has_color:
        for c in ("red", "green", "blue"):
            if types[c] != "u1":
                raise ParseError(f"color property {c!r} must be uchar")
    label_name = next((n for n in ("label", "scalar_label") if n in types), None)
    if label_name is not None and types[label_name] not in ("u4", "i4", "u2", "i2", "u1", "i1"):
        raise ParseError(f"label property {label_name!r} must be an integer type")
    return names, has_color, label_name


def parse_ply_with_info(data):
    """Parse PLY bytes into ``(SegmentedCloud, PlyInfo)``."""
    data = bytes(data)
    fmt, elements, body = _parse_ply_header(data)
    vi = next((i for i, e in enumerate(elements) if e.name == "vertex"), None)
    if vi is None:
        raise ParseError("no vertex element in header")
    vertex = elements[vi]
    names, has_color, label_name = _check_vertex_props(vertex)

    if fmt == "binary_little_endian":
        offset = body
        for e in elements[:vi]:
            if any(t is None for _, t in e.props):
                raise ParseError(f"cannot skip list-valued element {e.name!r} before vertices")
            offset += e.count * np.dtype([(nm, "<" + t) for nm, t in e.props]).itemsize
        dtype = np.dtype([(nm, "<" + t) for nm, t in vertex.props])
        need = vertex.count * dtype.itemsize
        have = len(data) - offset
        if have < need:
            raise ParseError(
                f"truncated vertex data: expected {need} bytes, found {max(have, 0)}",
                offset=len(data))
        rec = np.frombuffer(data, dtype=dtype, count=vertex.count, offset=offset)
        cols = {nm: rec[nm] for nm in names}
        trailing = have - need
    else:
        text = data[body:].decode("ascii", errors="replace")
        lines = text.split("\n")
        skip = sum(e.count for e in elements[:vi])
        rows = []
        li = 0
        while len(rows) < vertex.count + skip and li < len(lines):
            s = lines[li].strip()
            li += 1
            if s:
                rows.append((li, s))
        rows = rows[skip:]
        if len(rows) < vertex.count:
            raise ParseError(
                f"truncated vertex data: expected {vertex.count} lines, found {len(rows)}",
                offset=len(data))
        table = np.empty((vertex.count, len(names)), dtype=np.float64)
        for r, (lineno, s) in enumerate(rows):
            toks = s.split()
            if len(toks) != len(names):
                raise ParseError(f"expected {len(names)} values, found {len(toks)}",
                                 line=lineno)
            try:
                table[r] = [float(t) for t in toks]
            except ValueError:
                raise ParseError(f"non-numeric value in {s!r}", line=lineno) from None
        cols = {}
        for j, (nm, t) in enumerate(vertex.props):
            col = table[:, j]
            if t[0] != "f":
                if not np.all(col == np.floor(col)):
                    raise ParseError(f"property {nm!r} expects integers")
                info = np.iinfo(t)
                if col.size and (col.min() < info.min or col.max() > info.max):
                    raise ParseError(f"property {nm!r} out of range for its type")
            cols[nm] = col
        rest = "\n".join(lines[li:])
        trailing = len(rest.strip().encode())

    positions = np.column_stack([np.asarray(cols[a], dtype=np.float64) for a in "xyz"]) \
        if vertex.count else np.zeros((0, 3))
    if not np.isfinite(positions).all():
        raise ParseError("non-finite vertex position")
    if has_color:
        colors = np.column_stack([np.asarray(cols[c]).astype(np.uint8)
                                  for c in ("red", "green", "blue")]) \
            if vertex.count else np.zeros((0, 3), dtype=np.uint8)
    else:
        colors = np.tile(np.array(DEFAULT_COLOR, dtype=np.uint8), (vertex.count, 1))
    if label_name is not None:
        raw = np.asarray(cols[label_name]).astype(np.int64)
        if raw.size and raw.min() < 0:
            bad = int(np.flatnonzero(raw < 0)[0])
            raise ParseError(f"negative label {int(raw[bad])} at vertex {bad}")
        labels = raw
    else:
        labels = np.zeros(vertex.count, dtype=np.int64)

    info = PlyInfo(fmt, vertex.count, names, trailing_bytes=int(trailing),
                   colors_defaulted=not has_color)
    return SegmentedCloud(PointCloud(positions, colors), labels), info


def parse_ply(data):
    cloud, info = parse_ply_with_info(data)
    if info.colors_defaulted:
        logger.warning("PLY has no red/green/blue; assigned %s to %d points",
                       DEFAULT_COLOR, info.vertex_count)
    if info.trailing_bytes:
        logger.warning("ignored %d trailing bytes after vertex data", info.trailing_bytes)
    return cloud


def write_ply(seg, encoding="binary_le", with_labels=True, position_type="double"):
    """Serialize a SegmentedCloud (or plain PointCloud) to PLY bytes.

    ``position_type`` is ``"double"`` or ``"float"``.
    """
    if isinstance(seg, PointCloud):
        seg = SegmentedCloud(seg)
    if encoding not in ("ascii", "binary_le"):
        raise ValidationError(f"unknown PLY encoding {encoding!r}")
    if position_type not in ("double", "float"):
        raise ValidationError("position_type must be 'double' or 'float'")
    n = len(seg)
    if with_labels and n and seg.labels.max() > 0xFFFFFFFF:
        raise ValidationError("labels exceed the uint32 range")
    fmt = "ascii" if encoding == "ascii" else "binary_little_endian"
    header = [
        "ply",
        f"format {fmt} 1.0",
        "comment written by panoseg",
        f"element vertex {n}",
        f"property {position_type} x",
        f"property {position_type} y",
        f"property {position_type} z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
    ]
    if with_labels:
        header.append("property uint label")
    header.append("end_header")
    head = ("\n".join(header) + "\n").encode("ascii")

    pdt = "<f8" if position_type == "double" else "<f4"
    if encoding == "binary_le":
        fields = [("x", pdt), ("y", pdt), ("z", pdt),
                  ("red", "u1"), ("green", "u1"), ("blue", "u1")]
        if with_labels:
            fields.append(("label", "<u4"))
        rec = np.empty(n, dtype=np.dtype(fields))
        for j, a in enumerate("xyz"):
            rec[a] = seg.positions[:, j]
        for j, c in enumerate(("red", "green", "blue")):
            rec[c] = seg.colors[:, j]
        if with_labels:
            rec["label"] = seg.labels
        return head + rec.tobytes()

    pos = seg.positions.astype(pdt).astype(np.float64)
    fmt_pos = "%.17g" if position_type == "double" else "%.9g"
    lines = []
    for i in range(n):
        parts = [fmt_pos % v for v in pos[i]]
        parts += [str(int(c)) for c in seg.colors[i]]
        if with_labels:
            parts.append(str(int(seg.labels[i])))
        lines.append(" ".join(parts))
    body = ("\n".join(lines) + "\n") if lines else ""
    return head + body.encode("ascii")


# --------------------------------------------------------------------------
# XYZRGB text

def parse_xyzrgb(text):
    """Parse ``x y z r g b`` lines; ``#`` starts a comment."""
    if isinstance(text, (bytes, bytearray)):
        text = bytes(text).decode("utf-8")
    pos, col = [], []
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        toks = s.split()
        if len(toks) != 6:
            raise ParseError(f"expected 6 fields (x y z r g b), found {len(toks)}", line=lineno)
        try:
            xyz = [float(t) for t in toks[:3]]
            rgb = [int(t) for t in toks[3:]]
        except ValueError:
            raise ParseError(f"non-numeric field in {s!r}", line=lineno) from None
        if not all(np.isfinite(xyz)):
            raise ParseError("non-finite coordinate", line=lineno)
        if any(c < 0 or c > 255 for c in rgb):
            raise ParseError(f"color component outside 0..255 in {s!r}", line=lineno)
        pos.append(xyz)
        col.append(rgb)
    if not pos:
        return SegmentedCloud(PointCloud.empty())
    return SegmentedCloud(PointCloud(np.array(pos), np.array(col, dtype=np.uint8)))


def write_xyzrgb(cloud):
    if isinstance(cloud, SegmentedCloud):
        cloud = cloud.cloud
    out = []
    for p, c in zip(cloud.positions, cloud.colors):
        out.append("%.17g %.17g %.17g %d %d %d" % (p[0], p[1], p[2], c[0], c[1], c[2]))
    return ("\n".join(out) + ("\n" if out else "")).encode("ascii")


# --------------------------------------------------------------------------
# path helpers

_XYZ_SUFFIXES = {".xyz", ".xyzrgb", ".txt", ".pts"}


def read_cloud(path):
    """Read a PLY or XYZRGB file, choosing the parser by suffix."""
    path = Path(path)
    data = path.read_bytes()
    try:
        if path.suffix.lower() in _XYZ_SUFFIXES:
            return parse_xyzrgb(data)
        return parse_ply(data)
    except ParseError as exc:
        exc.path = path
        raise


def write_cloud(path, seg, encoding="binary_le", with_labels=True):
    path = Path(path)
    if path.suffix.lower() in _XYZ_SUFFIXES:
        data = write_xyzrgb(seg)
    else:
        data = write_ply(seg, encoding=encoding, with_labels=with_labels)
    path.write_bytes(data)
    return path
