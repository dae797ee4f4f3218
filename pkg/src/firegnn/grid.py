"""Grid geometry, land masks, min-max scaling and grid data files."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Channel order of every feature tensor in the package.
FEATURES = ("T", "Hum", "R", "L", "P")
CLIMATE_FEATURES = FEATURES[:4]


@dataclass(frozen=True)
class GridSpec:
    lat_count: int
    lon_count: int

    def __post_init__(self):
        if self.lat_count < 1 or self.lon_count < 1:
            raise ValueError(f"grid dimensions must be positive, got {self.shape}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.lat_count, self.lon_count)

    def contains(self, row: int, col: int) -> bool:
        return 0 <= row < self.lat_count and 0 <= col < self.lon_count


@dataclass(frozen=True, eq=False)
class LandMask:
    """Boolean land mask plus the land-cell <-> node bijection.

    Nodes are numbered by a row-major scan of the land cells.
    """

    spec: GridSpec
    is_land: np.ndarray
    node_to_cell: np.ndarray = field(init=False, repr=False)
    cell_to_node: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        is_land = np.array(self.is_land, dtype=bool)
        if is_land.shape != self.spec.shape:
            raise ValueError(f"mask shape {is_land.shape} does not match grid {self.spec.shape}")
        rows, cols = np.nonzero(is_land)  # row-major order
        node_to_cell = np.stack([rows, cols], axis=1).astype(np.int64)
        cell_to_node = np.full(self.spec.shape, -1, dtype=np.int64)
        cell_to_node[rows, cols] = np.arange(rows.size)
        for name, arr in (("is_land", is_land), ("node_to_cell", node_to_cell),
                          ("cell_to_node", cell_to_node)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @classmethod
    def from_array(cls, is_land) -> "LandMask":
        is_land = np.asarray(is_land, dtype=bool)
        return cls(GridSpec(*is_land.shape), is_land)

    @classmethod
    def full(cls, lat_count: int, lon_count: int) -> "LandMask":
        return cls.from_array(np.ones((lat_count, lon_count), dtype=bool))

    @property
    def node_count(self) -> int:
        return int(self.node_to_cell.shape[0])

    def __eq__(self, other):
        if not isinstance(other, LandMask):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.is_land, other.is_land)

    __hash__ = None


@dataclass(frozen=True)
class NormalizationParams:
    min: float
    max: float

    def __post_init__(self):
        if self.max < self.min:
            raise ValueError(f"max ({self.max}) < min ({self.min})")


@dataclass(frozen=True)
class SnapshotSeries:
    """Time-major stack of images for one variable."""

    spec: GridSpec
    variable: str
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3 or data.shape[1:] != self.spec.shape:
            raise ValueError(f"series of shape {data.shape} does not fit grid {self.spec.shape}")
        object.__setattr__(self, "data", data)

    @property
    def time_len(self) -> int:
        return int(self.data.shape[0])


@dataclass(frozen=True)
class EnsembleMember:
    id: int
    fire: np.ndarray  # node x time
    role: str = "train"

    def __post_init__(self):
        if self.role not in ("train", "validation", "test"):
            raise ValueError(f"unknown role {self.role!r}")


def mask_snapshot(image, mask: LandMask) -> np.ndarray:
    """Select land cells of ``image`` in node order.

    Leading axes are kept, so a ``(time, lat, lon)`` stack becomes ``(time, N)``.
    """
    image = np.asarray(image)
    if image.shape[-2:] != mask.spec.shape:
        raise ValueError(f"image shape {image.shape} does not match mask {mask.spec.shape}")
    return image[..., mask.node_to_cell[:, 0], mask.node_to_cell[:, 1]]


def inflate(vec, mask: LandMask, fill=0.0) -> np.ndarray:
    """Scatter node values back onto the grid; non-land cells get ``fill``.

    Leading axes are kept: ``(time, N)`` becomes ``(time, lat, lon)``.
    """
    vec = np.asarray(vec)
    if vec.ndim == 0 or vec.shape[-1] != mask.node_count:
        raise ValueError(f"vector length {vec.shape[-1:]} does not match node count {mask.node_count}")
    out = np.full(vec.shape[:-1] + mask.spec.shape, fill, dtype=vec.dtype)
    out[..., mask.node_to_cell[:, 0], mask.node_to_cell[:, 1]] = vec
    return out


def fit_normalization(*arrays) -> NormalizationParams:
    """Pool min and max over every value of every array given."""
    if not arrays or any(np.asarray(a).size == 0 for a in arrays):
        raise ValueError("cannot fit normalization on empty data")
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    return NormalizationParams(lo, hi)


def apply_normalization(x, params: NormalizationParams) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    span = params.max - params.min
    if span == 0:
        return np.zeros_like(x)
    return (x - params.min) / span


def normalize(series):
    """Min-max scale a series to [0, 1] using its own extremes.

    Accepts a :class:`SnapshotSeries` or a bare array and returns the same
    kind together with the :class:`NormalizationParams` used. A constant
    series maps to all zeros.
    """
    data = series.data if isinstance(series, SnapshotSeries) else np.asarray(series)
    if data.size == 0:
        raise ValueError("cannot normalize an empty series")
    params = fit_normalization(data)
    out = apply_normalization(data, params)
    if isinstance(series, SnapshotSeries):
        return SnapshotSeries(series.spec, series.variable, out), params
    return out, params


def denormalize(series, params: NormalizationParams):
    data = series.data if isinstance(series, SnapshotSeries) else np.asarray(series, dtype=np.float64)
    out = data * (params.max - params.min) + params.min
    if isinstance(series, SnapshotSeries):
        return SnapshotSeries(series.spec, series.variable, out)
    return out


def clip_rows(images, top: int = 16, bottom: int = 16) -> np.ndarray:
    """Drop ``top`` leading and ``bottom`` trailing latitude rows."""
    images = np.asarray(images)
    rows = images.shape[-2]
    if top < 0 or bottom < 0 or top + bottom >= rows:
        raise ValueError(f"cannot clip {top}+{bottom} rows from {rows}")
    return images[..., top:rows - bottom, :]


def stack_features(climate, fire) -> np.ndarray:
    """Stack four climate node series and the fire series into ``(N, 5, time)``."""
    climate = [np.asarray(c, dtype=np.float64) for c in climate]
    fire = np.asarray(fire, dtype=np.float64)
    if len(climate) != 4:
        raise ValueError(f"expected 4 climate series, got {len(climate)}")
    shapes = {c.shape for c in climate} | {fire.shape}
    if len(shapes) != 1 or fire.ndim != 2:
        raise ValueError(f"node series must share one (N, time) shape, got {sorted(shapes)}")
    return np.stack(climate + [fire], axis=1)


def build_feature_tensor(climate, fire, t_start: int, window: int) -> np.ndarray:
    """Input block ``X[node, feature, step]`` covering months ``t_start - window .. t_start - 1``.

    Feature order is ``FEATURES``.
    """
    series = stack_features(climate, fire)
    return feature_window(series, t_start, window)


def feature_window(series: np.ndarray, t_start: int, window: int) -> np.ndarray:
    if window < 1:
        raise ValueError("window must be >= 1")
    lo = t_start - window
    if lo < 0 or t_start > series.shape[-1]:
        raise IndexError(f"window [{lo}, {t_start}) outside series of length {series.shape[-1]}")
    return series[..., lo:t_start].copy()


# --- files -----------------------------------------------------------------

def _descriptor_path(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def _payload_path(path) -> Path:
    return Path(path).with_suffix(".bin")


def write_grid(path, data, variable: str) -> None:
    """Write a ``(time, lat, lon)`` stack as ``<path>.bin`` (little-endian f4) plus ``<path>.json``."""
    data = np.asarray(data)
    if data.ndim != 3:
        raise ValueError(f"grid data must be (time, lat, lon), got {data.shape}")
    desc = {"variable": variable, "lat_count": data.shape[1], "lon_count": data.shape[2],
            "time_len": data.shape[0], "order": "time,row,col", "dtype": "<f4"}
    _payload_path(path).write_bytes(data.astype("<f4").tobytes(order="C"))
    _descriptor_path(path).write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")


def read_descriptor(path) -> dict:
    desc_path = _descriptor_path(path)
    if not desc_path.exists():
        raise FileNotFoundError(f"missing descriptor {desc_path}")
    return json.loads(desc_path.read_text())


def read_grid(path) -> tuple[np.ndarray, str]:
    desc = read_descriptor(path)
    if desc.get("order") != "time,row,col":
        raise ValueError(f"unsupported grid order {desc.get('order')!r}")
    payload = _payload_path(path)
    if not payload.exists():
        raise FileNotFoundError(f"missing payload {payload}")
    shape = (desc["time_len"], desc["lat_count"], desc["lon_count"])
    raw = np.frombuffer(payload.read_bytes(), dtype="<f4")
    if raw.size != int(np.prod(shape)):
        raise ValueError(f"{payload}: {raw.size} values, descriptor promises {shape}")
    return raw.reshape(shape).astype(np.float64), desc["variable"]


def write_mask(path, mask: LandMask) -> None:
    desc = {"variable": "land_mask", "lat_count": mask.spec.lat_count,
            "lon_count": mask.spec.lon_count, "time_len": 1, "order": "time,row,col",
            "dtype": "u1"}
    _payload_path(path).write_bytes(mask.is_land.astype(np.uint8).tobytes(order="C"))
    _descriptor_path(path).write_text(json.dumps(desc, indent=2, sort_keys=True) + "\n")


def read_mask(path) -> LandMask:
    desc = read_descriptor(path)
    payload = _payload_path(path)
    if not payload.exists():
        raise FileNotFoundError(f"missing payload {payload}")
    raw = np.frombuffer(payload.read_bytes(), dtype=np.uint8)
    shape = (desc["lat_count"], desc["lon_count"])
    if raw.size != shape[0] * shape[1]:
        raise ValueError(f"{payload}: {raw.size} bytes, descriptor promises {shape}")
    if not np.isin(raw, (0, 1)).all():
        raise ValueError(f"{payload}: mask bytes must be 0 or 1")
    return LandMask.from_array(raw.reshape(shape).astype(bool))


def read_grid_csv(path, spec: GridSpec | None = None) -> np.ndarray:
    """Read a ``time,row,col,value`` CSV into a dense ``(time, lat, lon)`` array.

    Cells absent from the file are 0. Without ``spec`` the extent is taken
    from the largest indices present.
    """
    entries = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["time", "row", "col", "value"]:
            raise ValueError(f"{path}: expected header time,row,col,value, got {reader.fieldnames}")
        for rec in reader:
            entries.append((int(rec["time"]), int(rec["row"]), int(rec["col"]), float(rec["value"])))
    if not entries:
        raise ValueError(f"{path}: no data rows")
    t_max = max(e[0] for e in entries) + 1
    if spec is None:
        spec = GridSpec(max(e[1] for e in entries) + 1, max(e[2] for e in entries) + 1)
    out = np.zeros((t_max,) + spec.shape)
    for t, r, c, v in entries:
        if t < 0 or not spec.contains(r, c):
            raise IndexError(f"{path}: cell ({t}, {r}, {c}) outside grid {spec.shape}")
        out[t, r, c] = v
    return out
