"""Reader for ABI L1b radiance files (netCDF4/HDF5 layout) via h5py."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptFile
from .projection import GeosProjection

J2000_EPOCH_UTC = 946728000  # 2000-01-01T12:00:00Z as unix seconds


@dataclass
class AbiFrame:
    band: int
    t_epoch: int
    x: np.ndarray  # scan angle, radians, 1-d (columns)
    y: np.ndarray  # scan angle, radians, 1-d (rows)
    reflectance: np.ndarray  # (len(y), len(x)), NaN where fill
    projection: GeosProjection


def _attr(obj, name):
    try:
        value = obj.attrs[name]
    except KeyError as exc:
        raise CorruptFile(f"missing attribute {name!r}") from exc
    if isinstance(value, bytes):
        return value.decode("utf-8")
    arr = np.asarray(value)
    return arr.reshape(-1)[0] if arr.ndim else arr[()]


def _scaled(dataset) -> np.ndarray:
    raw = dataset[()]
    scale = float(_attr(dataset, "scale_factor")) if "scale_factor" in dataset.attrs else 1.0
    offset = float(_attr(dataset, "add_offset")) if "add_offset" in dataset.attrs else 0.0
    out = raw.astype(np.float64) * scale + offset
    if "_FillValue" in dataset.attrs:
        fill = np.asarray(dataset.attrs["_FillValue"]).reshape(-1)[0]
        out = np.where(raw == fill, np.nan, out)
    return out


def read_abi_file(path: Path) -> AbiFrame:
    import h5py

    try:
        fh = h5py.File(path, "r")
    except OSError as exc:
        raise CorruptFile(f"{path}: {exc}") from exc
    with fh:
        try:
            rad = _scaled(fh["Rad"])
            x = _scaled(fh["x"])
            y = _scaled(fh["y"])
            kappa0 = float(np.asarray(fh["kappa0"][()]).reshape(-1)[0])
            band = int(np.asarray(fh["band_id"][()]).reshape(-1)[0])
            t = float(np.asarray(fh["t"][()]).reshape(-1)[0])
            proj_var = fh["goes_imager_projection"]
            projection = GeosProjection(
                longitude_origin_deg=float(_attr(proj_var, "longitude_of_projection_origin")),
                perspective_height_m=float(_attr(proj_var, "perspective_point_height")),
                semi_major_m=float(_attr(proj_var, "semi_major_axis")),
                semi_minor_m=float(_attr(proj_var, "semi_minor_axis")),
                sweep=str(_attr(proj_var, "sweep_angle_axis")),
            )
        except KeyError as exc:
            raise CorruptFile(f"{path}: missing variable {exc}") from exc

    if rad.ndim != 2 or rad.shape != (y.size, x.size):
        raise CorruptFile(f"{path}: Rad shape {rad.shape} vs grid {(y.size, x.size)}")
    with np.errstate(invalid="ignore"):
        reflectance = np.clip(rad * kappa0, 0.0, 1.0)
    return AbiFrame(
        band=band,
        t_epoch=int(round(t + J2000_EPOCH_UTC)),
        x=x,
        y=y,
        reflectance=reflectance,
        projection=projection,
    )
