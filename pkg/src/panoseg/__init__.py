"""Laser-scan panoramas, 2D-to-3D label transfer and segmentation metrics."""

from ._accel import BACKEND
from .cloud import (Aabb, PointCloud, SegmentedCloud, bounding_box, parse_ply, parse_xyzrgb,
                    read_cloud, write_cloud, write_ply)
from .errors import PanosegError, ParseError, ValidationError
from .evaluation import (EvalReport, coverage, confusion, evaluate, greedy_instance_match,
                         iou_report, rand_index)
from .fusion import (FusionParams, LabelMap, backproject_labels, merge_views, parse_label_map,
                     propagate_labels, write_label_map)
from .prep import (RigidTransform, SorParams, apply_rigid_transform, crop_aabb,
                   estimate_scan_center, remove_statistical_outliers)
from .projection import (PanoramaImage, PixelPointMap, ProjectionSpec, dilate_empty_pixels,
                         parse_pixel_map, parse_ppm, pixel_to_ray, point_to_pixel,
                         project_equirectangular, write_pixel_map, write_ppm)
from .segmenter import FhParams, segment_color_graph
from .synth import SceneSpec, builtin_room_scene, generate_scene

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Aabb",
    "PointCloud",
    "SegmentedCloud",
    "bounding_box",
    "parse_ply",
    "parse_xyzrgb",
    "read_cloud",
    "write_cloud",
    "write_ply",
    "PanosegError",
    "ParseError",
    "ValidationError",
    "EvalReport",
    "coverage",
    "confusion",
    "evaluate",
    "greedy_instance_match",
    "iou_report",
    "rand_index",
    "FusionParams",
    "LabelMap",
    "backproject_labels",
    "merge_views",
    "parse_label_map",
    "propagate_labels",
    "write_label_map",
    "RigidTransform",
    "SorParams",
    "apply_rigid_transform",
    "crop_aabb",
    "estimate_scan_center",
    "remove_statistical_outliers",
    "PanoramaImage",
    "PixelPointMap",
    "ProjectionSpec",
    "dilate_empty_pixels",
    "parse_pixel_map",
    "parse_ppm",
    "pixel_to_ray",
    "point_to_pixel",
    "project_equirectangular",
    "write_pixel_map",
    "write_ppm",
    "FhParams",
    "segment_color_graph",
    "SceneSpec",
    "builtin_room_scene",
    "generate_scene",
]
