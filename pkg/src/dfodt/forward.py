"""
First-order (Rytov) forward model.

The scattered Rytov phase at the z=0 plane is synthesized from the phantom's
scattering-potential spectrum sampled on the Ewald cap of each illumination,
using the same cap geometry :func:`dfodt.tomography.map_ewald` inverts. The two
are exact mutual inverses on the sampled voxels.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import (ComplexField2D, GridSpec, OpticalConfig, RytovField, Volume3D, VolumeKind,
                   check_illumination, check_same_grid, fftc, ifftc, ri_to_potential)
from .errors import EvanescentError

# relative index contrast above which the first-order model is flagged
WEAK_SCATTERING_LIMIT = 0.05


@dataclass(frozen=True)
class EwaldCap:
    """
    Geometry of one illumination's cap on the lateral frequency grid.

    ``valid`` marks lateral samples that map onto a paired spectrum voxel;
    ``iz`` is that voxel's z index and ``kz`` the scattered axial wavenumber.
    """
    valid: np.ndarray
    iz: np.ndarray
    kz: np.ndarray
    n_evanescent: int
    n_outside: int

    @property
    def ix(self) -> np.ndarray:
        return np.nonzero(self.valid)[0]


def ewald_cap(config: OpticalConfig, grid: GridSpec, k_illum: Sequence[float]) -> EwaldCap:
    """
    Map each lateral frequency q of a Rytov field to its spectrum voxel.

    The scattered wavevector is k = (q + k_i,lat, kz) with kz = sqrt(k0^2 - |k_lat|^2),
    and the sample lands at K = k - k_i, rounded to the nearest z voxel. Samples
    outside the objective NA, evanescent samples and samples landing outside the
    grid or on an unpaired index-0 plane are excluded.
    """
    k0 = config.k0
    kix, kiy, kiz = k_illum
    fx = grid.freq_axis(0)[:, None]
    fy = grid.freq_axis(1)[None, :]
    kx = 2 * np.pi * fx + kix
    ky = 2 * np.pi * fy + kiy
    kr2 = kx ** 2 + ky ** 2
    evanescent = kr2 >= k0 ** 2
    kz = np.sqrt(np.where(evanescent, 0.0, k0 ** 2 - kr2))
    in_na = (kr2 <= config.k_na_r("objective") ** 2) & ~evanescent
    iz = np.rint((kz - kiz) / (2 * np.pi) * grid.fov[2]).astype(np.int64) + grid.nz // 2
    in_grid = (iz >= 1) & (iz < grid.nz)
    in_grid[0, :] = False
    in_grid[:, 0] = False
    valid = in_na & in_grid
    return EwaldCap(valid, iz, kz, int(np.count_nonzero(evanescent)),
                    int(np.count_nonzero(in_na & ~in_grid)))


def field_spectrum_scale(grid: GridSpec) -> float:
    """
    Ratio between the unitary 2D field spectrum and the unitary 3D potential
    spectrum beyond the 2*pi*i/kz factor: pitch * sqrt(nz).
    """
    return grid.pitch * np.sqrt(grid.nz)


class ForwardModel:
    """
    Cache of a phantom's potential spectrum for repeated field synthesis.

    :param phantom: refractive-index or scattering-potential volume
    :param config: optical parameters
    """

    def __init__(self, phantom: Volume3D, config: OpticalConfig, workers: Optional[int] = None):
        phantom.require_kind(VolumeKind.REFRACTIVE_INDEX, VolumeKind.SCATTERING_POTENTIAL)
        if phantom.kind is VolumeKind.REFRACTIVE_INDEX:
            contrast = np.max(np.abs(phantom.values - config.n_medium)) / config.n_medium
            if contrast >= WEAK_SCATTERING_LIMIT:
                warnings.warn(f"relative index contrast {contrast:.3f} exceeds {WEAK_SCATTERING_LIMIT}; "
                              "the first-order model is unreliable", stacklevel=2)
            potential = ri_to_potential(phantom.values, config)
        else:
            potential = np.asarray(phantom.values, dtype=float)
        self.grid = phantom.grid
        self.config = config
        self.spectrum = fftc(potential, workers=workers)

    def rytov(self, k_illum: Sequence[float]) -> RytovField:
        """complex Rytov phase of the scattered field for one illumination"""
        k = np.asarray(k_illum, dtype=float)
        if np.hypot(k[0], k[1]) >= self.config.k0:
            raise EvanescentError("illumination is evanescent")
        check_illumination(k, self.config)
        grid = self.grid
        cap = ewald_cap(self.config, grid, k)
        ix, iy = np.nonzero(cap.valid)
        psi_ft = np.zeros((grid.nx, grid.ny), dtype=complex)
        psi_ft[ix, iy] = (2j * np.pi / cap.kz[ix, iy] * field_spectrum_scale(grid)
                          * self.spectrum[ix, iy, cap.iz[ix, iy]])
        return RytovField(grid.nx, grid.ny, grid.pitch, ifftc(psi_ft), tuple(k))

    def field(self, k_illum: Sequence[float]) -> ComplexField2D:
        """total field U = U_i exp(psi) at z=0"""
        psi = self.rytov(k_illum)
        base = ComplexField2D(psi.nx, psi.ny, psi.pitch, np.ones((psi.nx, psi.ny)), psi.k_illum)
        return base.with_values(base.incident() * np.exp(psi.values))


def simulate_scattered_field(phantom: Volume3D, config: OpticalConfig, k_illum: Sequence[float],
                             grid: Optional[GridSpec] = None) -> ComplexField2D:
    """
    Total field U = U_i exp(psi_s) at the focal plane for one plane-wave illumination.
    """
    if grid is not None:
        check_same_grid(grid, phantom.grid)
    return ForwardModel(phantom, config).field(k_illum)


def simulate_fields(phantom: Volume3D, config: OpticalConfig, illuminations: Iterable[Sequence[float]],
                    rytov: bool = False, workers: int = 1) -> list:
    """
    Simulate a stack of fields, one per illumination, in illumination order.

    :param rytov: return the internal Rytov phases instead of total fields
    :param workers: thread count; results do not depend on it
    """
    model = ForwardModel(phantom, config)
    fn = model.rytov if rytov else model.field
    ks = [tuple(k) for k in illuminations]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, ks))
    return [fn(k) for k in ks]
