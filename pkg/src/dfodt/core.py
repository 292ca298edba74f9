"""
Shared optical types, grid coordinates and Fourier transform helpers.

Array layout is ``(x, y, z)`` for volumes and ``(x, y)`` for fields. Real-space
coordinates are ``(i - n/2) * pitch`` so the origin sits on the center voxel, and
every Fourier array uses a centered-DC layout where index ``n/2`` is zero
frequency. All transforms are unitary (``norm="ortho"``).

Units: lengths in um, spatial frequencies ``xi`` in cycles/um, wavevectors ``k``
in rad/um (``k = 2*pi*xi``).
"""
from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.fft as sfft

from .errors import GridMismatchError, InvariantError

_logger = logging.getLogger(__name__)

# relative tolerance for the |k_illum| = k0 sphere constraint
K_SPHERE_RTOL = 1e-9


@dataclass(frozen=True)
class OpticalConfig:
    """
    Illumination and imaging parameters.

    :param wavelength_vacuum: vacuum wavelength in um
    :param n_medium: refractive index of the surrounding medium
    :param na_condenser: numerical aperture of the illumination side
    :param na_objective: numerical aperture of the detection side
    """
    wavelength_vacuum: float = 0.532
    n_medium: float = 1.337
    na_condenser: float = 1.2
    na_objective: float = 1.2

    def __post_init__(self):
        if not self.wavelength_vacuum > 0:
            raise InvariantError(f"wavelength must be positive, got {self.wavelength_vacuum}")
        if not self.n_medium >= 1:
            raise InvariantError(f"n_medium must be >= 1, got {self.n_medium}")
        for name in ("na_condenser", "na_objective"):
            na = getattr(self, name)
            if not 0 < na <= self.n_medium:
                raise InvariantError(f"{name}={na} must lie in (0, n_medium={self.n_medium}]")

    @property
    def k0(self) -> float:
        """wavenumber in the medium, rad/um"""
        return 2 * np.pi * self.n_medium / self.wavelength_vacuum

    def k_na_r(self, which: str = "objective") -> float:
        """lateral wavevector cutoff 2*pi*NA/lambda for ``which`` in {"objective", "condenser"}"""
        na = self.na_objective if which == "objective" else self.na_condenser
        return 2 * np.pi * na / self.wavelength_vacuum

    def k_na_z(self, which: str = "objective") -> float:
        """axial wavevector at the NA edge, sqrt(k0^2 - k_NAr^2)"""
        kr = self.k_na_r(which)
        return float(np.sqrt(self.k0 ** 2 - kr ** 2))

    def to_dict(self) -> dict:
        return {"wavelength_vacuum": self.wavelength_vacuum,
                "n_medium": self.n_medium,
                "na_condenser": self.na_condenser,
                "na_objective": self.na_objective}


@dataclass(frozen=True)
class GridSpec:
    """
    Isotropic voxel grid.

    :param nx: voxel count along x
    :param ny: voxel count along y
    :param nz: voxel count along z
    :param pitch: voxel size in um
    """
    nx: int
    ny: int
    nz: int
    pitch: float

    def __post_init__(self):
        for name in ("nx", "ny", "nz"):
            n = getattr(self, name)
            if int(n) != n or n < 8 or n % 2:
                raise InvariantError(f"{name}={n} must be an even integer >= 8")
        if not self.pitch > 0:
            raise InvariantError(f"pitch must be positive, got {self.pitch}")

    @classmethod
    def cube(cls, n: int, pitch: float) -> "GridSpec":
        return cls(n, n, n, pitch)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz)

    @property
    def size(self) -> int:
        return self.nx * self.ny * self.nz

    @property
    def fov(self) -> tuple[float, float, float]:
        return (self.nx * self.pitch, self.ny * self.pitch, self.nz * self.pitch)

    @property
    def min_fov(self) -> float:
        return min(self.fov)

    @property
    def dxi(self) -> tuple[float, float, float]:
        """frequency step 1/FOV per axis, cycles/um"""
        return tuple(1 / f for f in self.fov)

    @property
    def nyquist(self) -> float:
        return 1 / (2 * self.pitch)

    def axis(self, ax: int) -> np.ndarray:
        """real-space coordinates along one axis, um"""
        n = self.shape[ax]
        return (np.arange(n) - n // 2) * self.pitch

    def freq_axis(self, ax: int) -> np.ndarray:
        """centered frequencies along one axis, cycles/um"""
        n = self.shape[ax]
        return (np.arange(n) - n // 2) / self.fov[ax]

    def coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """broadcastable real-space coordinate arrays"""
        return tuple(np.ix_(self.axis(0), self.axis(1), self.axis(2)))

    def freq_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """broadcastable frequency coordinate arrays"""
        return tuple(np.ix_(self.freq_axis(0), self.freq_axis(1), self.freq_axis(2)))

    def freq_radius(self) -> np.ndarray:
        """|xi| at every voxel, cycles/um"""
        fx, fy, fz = self.freq_coords()
        return np.sqrt(fx ** 2 + fy ** 2 + fz ** 2)

    def check_sampling(self, config: OpticalConfig) -> bool:
        """
        Warn if the lateral band edge 2*NA_obj/lambda is not below Nyquist.

        :return: True if alias-free
        """
        edge = 2 * config.na_objective / config.wavelength_vacuum
        ok = self.nyquist > edge
        if not ok:
            warnings.warn(f"grid Nyquist {self.nyquist:.3f} cycles/um does not exceed the lateral band "
                          f"edge {edge:.3f} cycles/um; reconstruction will alias", stacklevel=2)
        return ok

    def to_dict(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "nz": self.nz, "pitch": self.pitch}


class VolumeKind(str, enum.Enum):
    REFRACTIVE_INDEX = "RefractiveIndex"
    SCATTERING_POTENTIAL = "ScatteringPotential"
    FILTERED = "Filtered"


@dataclass(frozen=True, eq=False)
class Volume3D:
    """
    Real scalar volume on a grid.

    ``meta`` carries diagnostics from the stage that produced it (clamp counts,
    iteration history) and is not serialized.
    """
    grid: GridSpec
    values: np.ndarray
    kind: VolumeKind = VolumeKind.REFRACTIVE_INDEX
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = np.array(self.values)
        if np.iscomplexobj(vals):
            raise InvariantError("volume values must be real")
        if vals.dtype not in (np.float32, np.float64):
            vals = vals.astype(np.float64)
        if vals.shape != self.grid.shape:
            raise GridMismatchError(f"values shape {vals.shape} != grid shape {self.grid.shape}")
        kind = VolumeKind(self.kind)
        if kind is VolumeKind.REFRACTIVE_INDEX and vals.size and vals.min() < 1:
            raise InvariantError(f"refractive index volume has value {vals.min()} < 1")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "kind", kind)

    def require_kind(self, *kinds: VolumeKind):
        if self.kind not in kinds:
            raise InvariantError(f"operation needs a volume of kind {[k.value for k in kinds]}, "
                                 f"got {self.kind.value}")


@dataclass(frozen=True, eq=False)
class Spectrum3D:
    """
    Centered unitary 3D spectrum with per-voxel sample weights.

    A voxel with zero weight is unmeasured and holds zero.
    """
    grid: GridSpec
    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        wts = np.array(self.weights, dtype=float)
        if vals.shape != self.grid.shape or wts.shape != self.grid.shape:
            raise GridMismatchError("spectrum arrays must match the grid shape")
        if np.any(wts < 0):
            raise InvariantError("weights must be non-negative")
        if np.any(vals[wts == 0] != 0):
            raise InvariantError("unweighted voxels must hold zero")
        vals.flags.writeable = False
        wts.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "weights", wts)

    @property
    def measured(self) -> np.ndarray:
        return self.weights > 0


@dataclass(frozen=True, eq=False)
class ComplexField2D:
    """
    Complex field sampled on the lateral grid at the z=0 focal plane.

    :param k_illum: illumination wavevector (kx, ky, kz) in rad/um
    """
    nx: int
    ny: int
    pitch: float
    values: np.ndarray
    k_illum: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        vals = np.array(self.values, dtype=complex)
        if vals.shape != (self.nx, self.ny):
            raise GridMismatchError(f"field shape {vals.shape} != ({self.nx}, {self.ny})")
        if not self.pitch > 0:
            raise InvariantError("pitch must be positive")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "k_illum", tuple(float(v) for v in self.k_illum))

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = (np.arange(self.nx) - self.nx // 2) * self.pitch
        y = (np.arange(self.ny) - self.ny // 2) * self.pitch
        return x[:, None], y[None, :]

    def freq_coords(self) -> tuple[np.ndarray, np.ndarray]:
        fx = (np.arange(self.nx) - self.nx // 2) / (self.nx * self.pitch)
        fy = (np.arange(self.ny) - self.ny // 2) / (self.ny * self.pitch)
        return fx[:, None], fy[None, :]

    def incident(self) -> np.ndarray:
        """plane-wave illumination exp(i k_illum . r) at z=0"""
        x, y = self.coords()
        return np.exp(1j * (self.k_illum[0] * x + self.k_illum[1] * y))

    def with_values(self, values: np.ndarray) -> "ComplexField2D":
        return type(self)(self.nx, self.ny, self.pitch, values, self.k_illum)

    def matches(self, grid: GridSpec) -> bool:
        return (self.nx, self.ny) == (grid.nx, grid.ny) and np.isclose(self.pitch, grid.pitch, rtol=1e-12)


class RytovField(ComplexField2D):
    """
    Complex Rytov phase psi = ln|U/U_i| + i * unwrapped arg(U/U_i).
    """

    def __post_init__(self):
        super().__post_init__()
        if not np.all(np.isfinite(self.values)):
            raise InvariantError("Rytov field contains non-finite values")


def check_illumination(k_illum: Sequence[float], config: OpticalConfig, which: str = "condenser"):
    """
    Raise if ``k_illum`` is off the k0 sphere, backward-propagating, or outside the NA.
    """
    k = np.asarray(k_illum, dtype=float)
    k0 = config.k0
    if abs(np.linalg.norm(k) - k0) > K_SPHERE_RTOL * k0:
        raise InvariantError(f"|k_illum|={np.linalg.norm(k)} differs from k0={k0}")
    if not k[2] > 0:
        raise InvariantError("k_illum must propagate towards +z")
    kr = np.hypot(k[0], k[1])
    if kr > config.k_na_r(which) * (1 + 1e-12):
        raise InvariantError(f"lateral |k_illum|={kr} exceeds the {which} NA cutoff {config.k_na_r(which)}")


def frequency_coordinate(grid: GridSpec, voxel_index: Sequence[int]) -> tuple[float, float, float]:
    """
    Signed frequency of a voxel in the centered layout, cycles/um.
    """
    if len(voxel_index) != 3:
        raise ValueError("voxel_index needs three entries")
    out = []
    for ax, i in enumerate(voxel_index):
        n = grid.shape[ax]
        if int(i) != i or not 0 <= i < n:
            raise IndexError(f"index {i} out of range for axis {ax} of size {n}")
        out.append((int(i) - n // 2) / grid.fov[ax])
    return tuple(out)


def mirror_index(arr: np.ndarray, axes: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Return ``arr`` evaluated at -xi on a centered grid.

    Index i maps to (n - i) mod n; the most negative row (index 0) maps to itself
    and has no true partner.
    """
    if axes is None:
        axes = tuple(range(arr.ndim))
    return np.roll(np.flip(arr, axis=axes), 1, axis=axes)


def unpaired_mask(shape: Sequence[int]) -> np.ndarray:
    """True on voxels lying on any index-0 (unpaired Nyquist) plane."""
    mask = np.zeros(shape, dtype=bool)
    for ax in range(len(shape)):
        sl = [slice(None)] * len(shape)
        sl[ax] = 0
        mask[tuple(sl)] = True
    return mask


def fftc(arr: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """centered unitary n-D FFT"""
    return sfft.fftshift(sfft.fftn(sfft.ifftshift(arr), norm="ortho", workers=workers))


def ifftc(arr: np.ndarray, workers: Optional[int] = None) -> np.ndarray:
    """centered unitary n-D inverse FFT"""
    return sfft.fftshift(sfft.ifftn(sfft.ifftshift(arr), norm="ortho", workers=workers))


def ri_to_potential(n: np.ndarray, config: OpticalConfig) -> np.ndarray:
    """F = k0^2 (n^2/n_m^2 - 1) / 4 pi, in um^-2"""
    return config.k0 ** 2 * (np.asarray(n) ** 2 / config.n_medium ** 2 - 1) / (4 * np.pi)


def potential_to_ri(potential: np.ndarray, config: OpticalConfig) -> tuple[np.ndarray, int]:
    """
    Inverse of :func:`ri_to_potential`. Radicands that would give an index below
    vacuum (n < 1, including negative radicands) are clamped to n = 1.

    :return: refractive index, number of clamped voxels
    """
    radicand = 1 + 4 * np.pi * np.asarray(potential) / config.k0 ** 2
    floor = 1 / config.n_medium ** 2
    bad = radicand < floor
    nclamp = int(np.count_nonzero(bad))
    if nclamp:
        radicand = np.where(bad, floor, radicand)
    return config.n_medium * np.sqrt(radicand), nclamp


def to_potential(vol: Volume3D, config: OpticalConfig) -> Volume3D:
    """convert an RI volume to scattering potential"""
    vol.require_kind(VolumeKind.REFRACTIVE_INDEX, VolumeKind.SCATTERING_POTENTIAL)
    if vol.kind is VolumeKind.SCATTERING_POTENTIAL:
        return vol
    return Volume3D(vol.grid, ri_to_potential(vol.values, config), VolumeKind.SCATTERING_POTENTIAL)


def check_same_grid(a: GridSpec, b: GridSpec):
    if a.shape != b.shape or not np.isclose(a.pitch, b.pitch, rtol=1e-12):
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")
