"""
Comparison metrics and slice export.
"""
from __future__ import annotations

import enum
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import ndimage

from .core import Volume3D, check_same_grid
from .errors import InvariantError, MalformedHeaderError, UndefinedCorrelationError
from .io import atomic_write_bytes

ArrayOrVolume = Union[Volume3D, np.ndarray]


def _values(v: ArrayOrVolume) -> np.ndarray:
    return np.asarray(v.values if isinstance(v, Volume3D) else v, dtype=np.float64)


def ncc(a: ArrayOrVolume, b: ArrayOrVolume) -> float:
    """
    Zero-mean normalized (Pearson) cross-correlation over all voxels.

    :raises UndefinedCorrelationError: either volume is constant
    """
    if isinstance(a, Volume3D) and isinstance(b, Volume3D):
        check_same_grid(a.grid, b.grid)
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise InvariantError(f"shapes differ: {x.shape} vs {y.shape}")
    # checked on the raw values: rounding in the mean leaves residue on a constant array
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant volume")
    x = x - x.mean()
    y = y - y.mean()
    nx, ny = np.sqrt(np.sum(x * x)), np.sqrt(np.sum(y * y))
    return float(np.clip(np.sum(x * y) / (nx * ny), -1.0, 1.0))


def exterior_mask(object_mask: np.ndarray, guard_voxels: int = 1) -> np.ndarray:
    """voxels outside ``object_mask`` dilated by ``guard_voxels`` (cube element)"""
    if guard_voxels < 1:
        raise ValueError("guard_voxels must be >= 1")
    mask = np.asarray(object_mask, dtype=bool)
    grown = ndimage.binary_dilation(mask, structure=np.ones((3,) * mask.ndim, bool),
                                    iterations=int(guard_voxels))
    return ~grown


def ringing_energy(vol: ArrayOrVolume, object_mask: np.ndarray, guard_voxels: int = 1,
                   offset: float = 0.0) -> float:
    """
    Mean squared value outside the object mask grown by a guard shell.

    :param offset: subtracted before squaring, e.g. the medium index for RI volumes
    """
    v = _values(vol)
    if np.shape(object_mask) != v.shape:
        raise InvariantError("object mask does not match the volume shape")
    ext = exterior_mask(object_mask, guard_voxels)
    if not ext.any():
        raise InvariantError("no voxels remain outside the guarded object mask")
    d = v[ext] - offset
    return float(np.mean(d * d))


def edge_contrast_ratio(vol: ArrayOrVolume, interior: np.ndarray, shell: np.ndarray,
                        offset: float = 0.0) -> float:
    """mean |v - offset| over the boundary shell divided by the same over the interior"""
    v = _values(vol)
    interior = np.asarray(interior, bool)
    shell = np.asarray(shell, bool)
    if not interior.any() or not shell.any():
        raise InvariantError("interior and shell masks must be non-empty")
    inner = np.mean(np.abs(v[interior] - offset))
    if inner == 0:
        raise InvariantError("interior mean magnitude is zero")
    return float(np.mean(np.abs(v[shell] - offset)) / inner)


@dataclass
class MetricReport:
    """
    Summary metrics of a run. Absent metrics are ``None``; ``extra`` holds any
    further named scalars.
    """
    ncc: Optional[float] = None
    ringing_energy: Optional[float] = None
    edge_contrast_ratio: Optional[float] = None
    clamped_voxels: int = 0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ncc is not None and not -1.0 <= self.ncc <= 1.0:
            raise InvariantError(f"ncc {self.ncc} outside [-1, 1]")
        if self.ringing_energy is not None and self.ringing_energy < 0:
            raise InvariantError("ringing energy must be non-negative")
        if self.edge_contrast_ratio is not None and not self.edge_contrast_ratio > 0:
            raise InvariantError("edge contrast ratio must be positive")
        if self.clamped_voxels < 0:
            raise InvariantError("clamped voxel count must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


# slice export

class Plane(str, enum.Enum):
    XY = "XY"
    XZ = "XZ"
    YZ = "YZ"


_PLANE_AXIS = {Plane.XY: 2, Plane.XZ: 1, Plane.YZ: 0}


def take_slice(vol: ArrayOrVolume, plane: Union[Plane, str], index: int) -> np.ndarray:
    """2D slice with the first remaining axis along image columns"""
    v = _values(vol)
    ax = _PLANE_AXIS[Plane(plane)]
    if not 0 <= index < v.shape[ax]:
        raise IndexError(f"slice index {index} outside [0, {v.shape[ax]})")
    return np.take(v, index, axis=ax).T


def quantize(image: np.ndarray, value_range: Optional[tuple[float, float]] = None) -> tuple[np.ndarray, float, float]:
    """
    Linear map of ``value_range`` (default: image min/max) onto 0..255, clipped.
    A degenerate range maps everything to 128.
    """
    lo, hi = (float(image.min()), float(image.max())) if value_range is None else map(float, value_range)
    if hi < lo:
        raise ValueError(f"value range ({lo}, {hi}) is reversed")
    if hi == lo:
        return np.full(image.shape, 128, np.uint8), lo, hi
    q = np.rint((image - lo) / (hi - lo) * 255.0)
    return np.clip(q, 0, 255).astype(np.uint8), lo, hi


def export_slice(vol: ArrayOrVolume, plane: Union[Plane, str], index: int, path,
                 value_range: Optional[tuple[float, float]] = None) -> np.ndarray:
    """
    Write one slice as a binary 8-bit PGM plus a ``<path>.json`` sidecar holding
    the plane, index and mapping range.

    :return: the quantized image as written (rows along the second remaining axis)
    """
    plane = Plane(plane)
    img, lo, hi = quantize(take_slice(vol, plane, index), value_range)
    h, w = img.shape
    path = Path(path)
    atomic_write_bytes(path, b"P5\n%d %d\n255\n" % (w, h) + img.tobytes())
    side = {"plane": plane.value, "index": int(index), "range": [lo, hi],
            "mapping": "round((v - lo) / (hi - lo) * 255), clipped; 128 if hi == lo",
            "width": w, "height": h}
    if isinstance(vol, Volume3D):
        side["pitch"] = vol.grid.pitch
        side["kind"] = vol.kind.value
    atomic_write_bytes(path.with_name(path.name + ".json"), (json.dumps(side, indent=1) + "\n").encode())
    return img


# single whitespace byte after maxval, then raw pixels
_PGM_HEADER = re.compile(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s")


def read_pgm(path) -> np.ndarray:
    """read a binary 8-bit PGM (P5) without comments"""
    data = Path(path).read_bytes()
    m = _PGM_HEADER.match(data)
    if m is None:
        raise MalformedHeaderError(f"{path}: not a binary 8-bit PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise MalformedHeaderError(f"{path}: only 8-bit PGM is supported")
    body = data[m.end():]
    if len(body) != w * h:
        raise MalformedHeaderError(f"{path}: expected {w * h} pixel bytes, found {len(body)}")
    return np.frombuffer(body, np.uint8).reshape(h, w).copy()
