"""Point clouds, maps, transforms, geodesics, synthetic data and file formats."""

from .generator import gen_dataset, gen_pair, gen_shape, make_template
from .geodesic import DEFAULT_KNN, GeodesicField, geodesics, path_field
from .io import load_cloud, load_map, load_pair, save_cloud, save_map, save_pair
from .transforms import flip, random_rotation, rotate, subsample
from .types import IndexMap, PointCloud, ShapePairSample

__all__ = [
    "DEFAULT_KNN",
    "GeodesicField",
    "IndexMap",
    "PointCloud",
    "ShapePairSample",
    "flip",
    "gen_dataset",
    "gen_pair",
    "gen_shape",
    "geodesics",
    "load_cloud",
    "load_map",
    "load_pair",
    "make_template",
    "path_field",
    "random_rotation",
    "rotate",
    "save_cloud",
    "save_map",
    "save_pair",
    "subsample",
]
