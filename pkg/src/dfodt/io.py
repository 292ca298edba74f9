"""
Binary container for volumes, spectra, field stacks and interferogram stacks.

Layout of every file::

    bytes 0-5    magic  b"DFODT\\0"
    bytes 6-9    uint32 little-endian length H of the header
    bytes 10..   H bytes of UTF-8 JSON header
    remainder    little-endian raw payload, C order

Header keys common to all objects: ``format_version``, ``object``, ``shape``,
``pitch``, ``dtype`` (``float32``/``float64``/``complex64``/``complex128``),
``endianness`` (always ``"little"``) and optional ``config`` (an
:class:`OpticalConfig` as a dict). Complex payloads are interleaved re/im.
Spectra append a float64 weights block after the values. Stacks carry a
``frames`` list of per-frame metadata.
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import (ComplexField2D, GridSpec, OpticalConfig, RytovField, Spectrum3D,
                   Volume3D, VolumeKind)
from .errors import MalformedHeaderError, PayloadLengthError, UnsupportedVersionError

MAGIC = b"DFODT\0"
FORMAT_VERSION = 1
_DTYPES = {"float32": "<f4", "float64": "<f8", "complex64": "<c8", "complex128": "<c16", "uint8": "u1"}

PathLike = Union[str, os.PathLike]


def atomic_write_bytes(path: PathLike, data: bytes):
    """write via a temporary file in the target directory, then rename"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dtype_name(arr: np.ndarray) -> str:
    for name, code in _DTYPES.items():
        if np.dtype(code).newbyteorder("=") == arr.dtype.newbyteorder("="):
            return name
    raise TypeError(f"unsupported dtype {arr.dtype}")


def _pack(header: dict, *arrays: np.ndarray) -> bytes:
    header = {"format_version": FORMAT_VERSION, "endianness": "little", **header}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(hbytes)), hbytes]
    for a in arrays:
        code = _DTYPES[_dtype_name(a)]
        parts.append(np.ascontiguousarray(a, dtype=code).tobytes())
    return b"".join(parts)


def _unpack(path: PathLike) -> tuple[dict, memoryview]:
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[:len(MAGIC)] != MAGIC:
        raise MalformedHeaderError(f"{path}: bad magic bytes")
    (hlen,) = struct.unpack("<I", raw[len(MAGIC):len(MAGIC) + 4])
    start = len(MAGIC) + 4
    if start + hlen > len(raw):
        raise MalformedHeaderError(f"{path}: header length {hlen} exceeds file size")
    try:
        header = json.loads(raw[start:start + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise MalformedHeaderError(f"{path}: header is not valid JSON ({e})") from e
    if not isinstance(header, dict):
        raise MalformedHeaderError(f"{path}: header must be a JSON object")
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: format version {version!r} is not supported")
    for key in ("object", "shape", "dtype", "endianness"):
        if key not in header:
            raise MalformedHeaderError(f"{path}: header lacks {key!r}")
    if header["endianness"] != "little":
        raise MalformedHeaderError(f"{path}: unsupported endianness {header['endianness']!r}")
    if header["dtype"] not in _DTYPES:
        raise MalformedHeaderError(f"{path}: unsupported dtype {header['dtype']!r}")
    shape = header["shape"]
    if not (isinstance(shape, list) and all(isinstance(s, int) and s >= 0 for s in shape)):
        raise MalformedHeaderError(f"{path}: shape must be a list of non-negative integers")
    return header, memoryview(raw)[start + hlen:]


def _take(payload: memoryview, offset: int, dtype: str, shape: Sequence[int], path) -> tuple[np.ndarray, int]:
    dt = np.dtype(_DTYPES[dtype])
    nbytes = int(np.prod(shape)) * dt.itemsize
    if offset + nbytes > len(payload):
        raise PayloadLengthError(f"{path}: payload holds {len(payload) - offset} bytes, "
                                 f"header shape {list(shape)} needs {nbytes}")
    arr = np.frombuffer(payload, dtype=dt, count=int(np.prod(shape)), offset=offset).reshape(shape)
    return arr.astype(dt.newbyteorder("="), copy=True), offset + nbytes


def _finish(payload: memoryview, offset: int, path):
    if offset != len(payload):
        raise PayloadLengthError(f"{path}: {len(payload) - offset} trailing payload bytes")


def _grid_from(header: dict, shape: Sequence[int], path) -> GridSpec:
    if "pitch" not in header:
        raise MalformedHeaderError(f"{path}: header lacks 'pitch'")
    if len(shape) != 3:
        raise MalformedHeaderError(f"{path}: volume shape must have three entries")
    return GridSpec(*shape, pitch=float(header["pitch"]))


def _config_from(header: dict) -> Optional[OpticalConfig]:
    cfg = header.get("config")
    if not cfg:
        return None
    try:
        return OpticalConfig(**cfg)
    except (TypeError, ValueError) as e:
        raise MalformedHeaderError(f"invalid optical config in header: {e}") from None


def _check_object(header: dict, expected: str, path):
    if header["object"] != expected:
        raise MalformedHeaderError(f"{path}: expected a {expected!r} file, found {header['object']!r}")


def _real_dtype(arr: np.ndarray) -> np.ndarray:
    return arr if arr.dtype in (np.float32, np.float64) else arr.astype(np.float64)


def _complex_dtype(arr: np.ndarray) -> np.ndarray:
    return arr if arr.dtype in (np.complex64, np.complex128) else arr.astype(np.complex128)


# volumes

def write_volume(path: PathLike, vol: Volume3D, config: Optional[OpticalConfig] = None):
    """
    Write a volume. Float32 and float64 values are stored at their own precision,
    so the round trip is bit-exact.
    """
    vals = _real_dtype(vol.values)
    header = {"object": "volume", "shape": list(vol.grid.shape), "pitch": vol.grid.pitch,
              "kind": vol.kind.value, "dtype": _dtype_name(vals),
              "config": config.to_dict() if config else None}
    atomic_write_bytes(path, _pack(header, vals))


def read_volume(path: PathLike) -> Volume3D:
    header, payload = _unpack(path)
    _check_object(header, "volume", path)
    if header.get("kind") not in {k.value for k in VolumeKind}:
        raise MalformedHeaderError(f"{path}: missing or unknown volume kind {header.get('kind')!r}")
    grid = _grid_from(header, header["shape"], path)
    vals, off = _take(payload, 0, header["dtype"], grid.shape, path)
    _finish(payload, off, path)
    return Volume3D(grid, vals, VolumeKind(header["kind"]))


def read_volume_config(path: PathLike) -> Optional[OpticalConfig]:
    """optical config stored alongside a volume, if any"""
    header, _ = _unpack(path)
    return _config_from(header)


# spectra

def write_spectrum(path: PathLike, spec: Spectrum3D, config: Optional[OpticalConfig] = None):
    vals = _complex_dtype(spec.values)
    header = {"object": "spectrum", "shape": list(spec.grid.shape), "pitch": spec.grid.pitch,
              "dtype": _dtype_name(vals), "weights_dtype": "float64",
              "config": config.to_dict() if config else None}
    atomic_write_bytes(path, _pack(header, vals, spec.weights.astype(np.float64)))


def read_spectrum(path: PathLike) -> Spectrum3D:
    header, payload = _unpack(path)
    _check_object(header, "spectrum", path)
    grid = _grid_from(header, header["shape"], path)
    vals, off = _take(payload, 0, header["dtype"], grid.shape, path)
    wts, off = _take(payload, off, header.get("weights_dtype", "float64"), grid.shape, path)
    _finish(payload, off, path)
    return Spectrum3D(grid, vals, wts)


# field stacks

def write_field_stack(path: PathLike, fields: Sequence[ComplexField2D],
                      config: Optional[OpticalConfig] = None):
    """
    Write a list of fields sharing one lateral grid. ``RytovField`` stacks are
    tagged so they read back as such.
    """
    if not fields:
        raise ValueError("cannot write an empty field stack")
    f0 = fields[0]
    for f in fields:
        if (f.nx, f.ny) != (f0.nx, f0.ny) or f.pitch != f0.pitch:
            raise ValueError("all frames in a stack must share shape and pitch")
    stack = np.stack([f.values for f in fields])
    header = {"object": "field_stack", "shape": list(stack.shape), "pitch": f0.pitch,
              "dtype": _dtype_name(stack), "rytov": isinstance(f0, RytovField),
              "frames": [{"k_illum": list(f.k_illum)} for f in fields],
              "config": config.to_dict() if config else None}
    atomic_write_bytes(path, _pack(header, stack))


def read_field_stack(path: PathLike) -> list[ComplexField2D]:
    header, payload = _unpack(path)
    _check_object(header, "field_stack", path)
    shape = header["shape"]
    frames = header.get("frames")
    if len(shape) != 3 or not isinstance(frames, list) or len(frames) != shape[0]:
        raise MalformedHeaderError(f"{path}: frame list does not match stack shape")
    stack, off = _take(payload, 0, header["dtype"], shape, path)
    _finish(payload, off, path)
    cls = RytovField if header.get("rytov") else ComplexField2D
    return [cls(shape[1], shape[2], float(header["pitch"]), stack[i], tuple(fr["k_illum"]))
            for i, fr in enumerate(frames)]


def read_stack_config(path: PathLike) -> Optional[OpticalConfig]:
    header, _ = _unpack(path)
    return _config_from(header)


# interferogram stacks

def write_interferogram_stack(path: PathLike, holos: Sequence, config: Optional[OpticalConfig] = None):
    """
    :param holos: sequence of :class:`dfodt.holography.Interferogram`
    """
    if not holos:
        raise ValueError("cannot write an empty interferogram stack")
    stack = np.stack([h.intensity for h in holos])
    header = {"object": "interferogram_stack", "shape": list(stack.shape), "pitch": holos[0].pitch,
              "dtype": _dtype_name(stack),
              "frames": [{"reference_tilt": list(h.reference_tilt), "ref_amplitude": h.ref_amplitude,
                          "k_illum": list(h.k_illum)} for h in holos],
              "config": config.to_dict() if config else None}
    atomic_write_bytes(path, _pack(header, stack))


def read_interferogram_stack(path: PathLike) -> list:
    from .holography import Interferogram

    header, payload = _unpack(path)
    _check_object(header, "interferogram_stack", path)
    shape = header["shape"]
    frames = header.get("frames")
    if len(shape) != 3 or not isinstance(frames, list) or len(frames) != shape[0]:
        raise MalformedHeaderError(f"{path}: frame list does not match stack shape")
    stack, off = _take(payload, 0, header["dtype"], shape, path)
    _finish(payload, off, path)
    return [Interferogram(shape[1], shape[2], float(header["pitch"]), stack[i],
                          tuple(fr["reference_tilt"]), fr.get("ref_amplitude", 1.0),
                          tuple(fr.get("k_illum", (0.0, 0.0, 0.0))))
            for i, fr in enumerate(frames)]


# support masks

def write_support_mask(path: PathLike, mask):
    """
    :param mask: :class:`dfodt.darkfield.SupportMask3D`, stored as a 0/1 uint8 payload
    """
    header = {"object": "support_mask", "shape": list(mask.grid.shape), "pitch": mask.grid.pitch,
              "dtype": "uint8", "modality": mask.modality.value, "epsilon": mask.epsilon,
              "cutoff": mask.cutoff}
    atomic_write_bytes(path, _pack(header, mask.mask.astype(np.uint8)))


def read_support_mask(path: PathLike):
    from .darkfield import Modality, SupportMask3D

    header, payload = _unpack(path)
    _check_object(header, "support_mask", path)
    grid = _grid_from(header, header["shape"], path)
    arr, off = _take(payload, 0, header["dtype"], grid.shape, path)
    _finish(payload, off, path)
    return SupportMask3D(grid, arr.astype(bool), Modality(header["modality"]),
                         header.get("epsilon"), header.get("cutoff"))
