"""Equirectangular projection with a z-buffered pixel-to-point map.

Convention: z is up, azimuth is measured from +x toward +y, column 0
starts at azimuth -pi (the seam, +pi wraps onto it), row 0 is the zenith.
"""

import math
import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ParseError, ValidationError

DEFAULT_NEAR_CLIP = 1e-6


@dataclass(frozen=True, eq=False)
class ProjectionSpec:
    center: np.ndarray
    width: int = 2048
    height: int = 1024
    near_clip: float = DEFAULT_NEAR_CLIP

    def __post_init__(self):
        c = np.asarray(self.center, dtype=np.float64).reshape(3)
        if not np.isfinite(c).all():
            raise ValidationError("projection center must be finite")
        if int(self.width) != self.width or int(self.height) != self.height:
            raise ValidationError("panorama size must be integral")
        if self.width < 2 or self.height < 2:
            raise ValidationError(
                f"panorama must be at least 2x2, got {self.width}x{self.height}")
        if not self.near_clip > 0:
            raise ValidationError(f"near_clip must be > 0, got {self.near_clip}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))
        object.__setattr__(self, "near_clip", float(self.near_clip))


@dataclass(eq=False)
class PanoramaImage:
    """RGB image stored as an (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValidationError(f"panorama pixels must be (h, w, 3), got {px.shape}")
        self.pixels = px

    @property
    def width(self):
        return self.pixels.shape[1]

    @property
    def height(self):
        return self.pixels.shape[0]

    def __eq__(self, other):
        return isinstance(other, PanoramaImage) and np.array_equal(self.pixels, other.pixels)


@dataclass(eq=False)
class PixelPointMap:
    """Winning point per pixel.

    ``index`` is (height, width) int64 with -1 for empty pixels, ``depth`` is
    the winner's distance from the center (0.0 where empty).
    """

    index: np.ndarray
    depth: np.ndarray

    def __post_init__(self):
        self.index = np.ascontiguousarray(self.index, dtype=np.int64)
        self.depth = np.ascontiguousarray(self.depth, dtype=np.float64)
        if self.index.ndim != 2 or self.index.shape != self.depth.shape:
            raise ValidationError("map index and depth must be equal-shaped 2D arrays")

    @property
    def width(self):
        return self.index.shape[1]

    @property
    def height(self):
        return self.index.shape[0]

    @property
    def occupied(self):
        return self.index >= 0

    def __eq__(self, other):
        return (isinstance(other, PixelPointMap)
                and np.array_equal(self.index, other.index)
                and np.array_equal(self.depth, other.depth))

    def entry(self, u, v):
        i = int(self.index[v, u])
        return None if i < 0 else (i, float(self.depth[v, u]))


def project_points(positions, spec):
    """Vectorized projection.

    Returns ``(u, v, depth, valid)``; u and v are -1 where ``valid`` is False.
    Every other routine that needs a pixel for a point goes through here.
    """
    d = np.asarray(positions, dtype=np.float64).reshape(-1, 3) - spec.center
    r = np.sqrt(d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1] + d[:, 2] * d[:, 2])
    valid = r >= spec.near_clip
    safe_r = np.where(valid, r, 1.0)
    theta = np.arctan2(d[:, 1], d[:, 0])  # atan2(0, 0) == 0 at the poles
    phi = np.arcsin(np.clip(d[:, 2] / safe_r, -1.0, 1.0))
    # fraction first so exact half-turns land exactly on integer columns
    u = np.floor(spec.width * ((theta + np.pi) / (2.0 * np.pi))).astype(np.int64) % spec.width
    v = np.minimum(np.floor(spec.height * ((np.pi / 2.0 - phi) / np.pi)).astype(np.int64),
                   spec.height - 1)
    u = np.where(valid, u, -1)
    v = np.where(valid, v, -1)
    return u, v, r, valid


def point_to_pixel(p, spec):
    """``(u, v, depth)`` for one point, or None when it is inside near_clip."""
    u, v, r, valid = project_points(np.asarray(p, dtype=np.float64).reshape(1, 3), spec)
    if not valid[0]:
        return None
    return int(u[0]), int(v[0]), float(r[0])


def pixel_to_ray(u, v, width, height):
    """Unit direction through the center of pixel (u, v)."""
    if not (0 <= u < width and 0 <= v < height):
        raise ValidationError(f"pixel ({u}, {v}) outside {width}x{height}")
    theta = 2.0 * math.pi * (u + 0.5) / width - math.pi
    phi = math.pi / 2.0 - math.pi * (v + 0.5) / height
    c = math.cos(phi)
    return np.array([c * math.cos(theta), c * math.sin(theta), math.sin(phi)])


def pixel_rays(width, height):
    """All pixel-center rays as an (height, width, 3) array."""
    theta = 2.0 * np.pi * (np.arange(width) + 0.5) / width - np.pi
    phi = np.pi / 2.0 - np.pi * (np.arange(height) + 0.5) / height
    c = np.cos(phi)[:, None]
    return np.stack([c * np.cos(theta)[None, :],
                     c * np.sin(theta)[None, :],
                     np.broadcast_to(np.sin(phi)[:, None], (height, width))], axis=-1)


def project_equirectangular(cloud, spec, backend=None):
    """Render ``cloud`` from ``spec.center``.

    Returns ``(PanoramaImage, PixelPointMap, skipped_count)`` where skipped
    points are those closer than ``near_clip`` to the center.
    """
    n = len(cloud)
    if n == 0:
        raise ValidationError("cannot project an empty cloud")
    u, v, r, valid = project_points(cloud.positions, spec)
    pix = np.where(valid, v * spec.width + u, -1)
    best, best_depth = kernels.zbuffer(pix, r, spec.width * spec.height, backend=backend)
    pixels = np.zeros((spec.width * spec.height, 3), dtype=np.uint8)
    occ = best >= 0
    pixels[occ] = cloud.colors[best[occ]]
    shape = (spec.height, spec.width)
    return (PanoramaImage(pixels.reshape(spec.height, spec.width, 3)),
            PixelPointMap(best.reshape(shape), best_depth.reshape(shape)),
            int(n - valid.sum()))


def dilate_empty_pixels(pano, pmap, radius, backend=None):
    """Fill empty pixels with the color of the nearest occupied pixel.

    Distance is Chebyshev, capped at ``radius``; ties go to the smallest
    row-major index.  The map is not touched.
    """
    if radius < 0:
        raise ValidationError(f"dilation radius must be >= 0, got {radius}")
    if (pano.height, pano.width) != (pmap.height, pmap.width):
        raise ValidationError("panorama and map sizes differ")
    if radius == 0:
        return PanoramaImage(pano.pixels.copy())
    src = kernels.nearest_occupied(pmap.occupied, int(radius), backend=backend)
    flat = pano.pixels.reshape(-1, 3)
    out = flat.copy()
    fill = (src >= 0) & ~pmap.occupied.ravel()
    out[fill] = flat[src[fill]]
    return PanoramaImage(out.reshape(pano.pixels.shape))


# --------------------------------------------------------------------------
# file formats

def _netpbm_header(data, magic):
    """Parse a P5/P6 header; returns (width, height, maxval, body_offset)."""
    if data[:2] != magic:
        raise ParseError(f"bad magic, expected {magic.decode()}", offset=0)
    pos = 2
    fields = []
    n = len(data)
    while len(fields) < 3:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and data[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise ParseError("malformed header field", offset=start)
        fields.append(int(data[start:pos]))
    if pos >= n or not data[pos:pos + 1].isspace():
        raise ParseError("header not terminated by whitespace", offset=pos)
    return fields[0], fields[1], fields[2], pos + 1


def write_ppm(pano):
    head = f"P6\n{pano.width} {pano.height}\n255\n".encode("ascii")
    return head + pano.pixels.tobytes()


def parse_ppm(data):
    data = bytes(data)
    w, h, maxval, off = _netpbm_header(data, b"P6")
    if maxval != 255:
        raise ParseError(f"only maxval 255 is supported, got {maxval}", offset=0)
    need = w * h * 3
    if len(data) - off < need:
        raise ParseError(f"truncated pixel data: expected {need} bytes, found {len(data) - off}",
                         offset=len(data))
    px = np.frombuffer(data, dtype=np.uint8, count=need, offset=off).reshape(h, w, 3)
    return PanoramaImage(px.copy())


_MAP_MAGIC = b"PPMAP1\n"
_EMPTY = 0xFFFFFFFF
_MAP_ENTRY = np.dtype([("index", "<u4"), ("depth", "<f4")])


def write_pixel_map(pmap):
    if pmap.index.size and pmap.index.max() >= _EMPTY:
        raise ValidationError("point index does not fit the map file's 32-bit field")
    rec = np.empty(pmap.index.size, dtype=_MAP_ENTRY)
    idx = pmap.index.ravel()
    rec["index"] = np.where(idx >= 0, idx, _EMPTY)
    rec["depth"] = np.where(idx >= 0, pmap.depth.ravel(), 0.0)
    return _MAP_MAGIC + struct.pack("<II", pmap.width, pmap.height) + rec.tobytes()


def parse_pixel_map(data):
    data = bytes(data)
    if not data.startswith(_MAP_MAGIC):
        raise ParseError("bad magic, expected PPMAP1", offset=0)
    off = len(_MAP_MAGIC)
    if len(data) < off + 8:
        raise ParseError("truncated map header", offset=len(data))
    w, h = struct.unpack_from("<II", data, off)
    off += 8
    need = w * h * _MAP_ENTRY.itemsize
    if len(data) - off < need:
        raise ParseError(f"truncated map entries: expected {need} bytes, found {len(data) - off}",
                         offset=len(data))
    rec = np.frombuffer(data, dtype=_MAP_ENTRY, count=w * h, offset=off)
    idx = rec["index"].astype(np.int64)
    empty = idx == _EMPTY
    idx[empty] = -1
    depth = rec["depth"].astype(np.float64)
    depth[empty] = 0.0
    return PixelPointMap(idx.reshape(h, w), depth.reshape(h, w))
