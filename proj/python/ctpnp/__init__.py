"""Cone-beam CT reconstruction with a learned plug-and-play prior.

Volumes are numpy arrays shaped (nz, ny, nx); projections are shaped
(views, rows, cols). Geometries and configurations are plain dicts.
"""

import json

from . import _ctpnp
from ._ctpnp import Error, FormatError, GeometryError, ShapeError, SpecError  # noqa: F401
from ._ctpnp import nrmse, otsu_split, otsu_threshold, set_thread_count, ssim  # noqa: F401


def default_config():
    return json.loads(_ctpnp.default_config())


def with_views(geometry, kind, n_views):
    return json.loads(_ctpnp.with_views(json.dumps(geometry), kind, n_views))


def forward_project(volume, geometry):
    return _ctpnp.forward_project(volume, json.dumps(geometry))


def back_project(projections, geometry):
    return _ctpnp.back_project(projections, json.dumps(geometry))


def fdk(projections, geometry, window="ramlak"):
    return _ctpnp.fdk(projections, json.dumps(geometry), window)


def simulate(config=None):
    out = _ctpnp.simulate(json.dumps(config if config is not None else default_config()))
    out["input_geometry"] = json.loads(out["input_geometry"])
    out["reference_geometry"] = json.loads(out["reference_geometry"])
    return out


def denoise(volume, checkpoint):
    return _ctpnp.denoise(volume, str(checkpoint))


def pnp(projections, geometry, checkpoint, config=None):
    cfg = config if config is not None else default_config()
    return _ctpnp.pnp(projections, json.dumps(geometry), str(checkpoint), json.dumps(cfg))


def read_volume(path):
    return _ctpnp.read_volume(str(path))


def write_volume(path, volume, voxel_size_mm=1.0):
    _ctpnp.write_volume(str(path), volume, voxel_size_mm)
