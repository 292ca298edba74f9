"""
Isotropic high-pass filtering of tomograms and binary transfer-function supports
of label-free imaging modalities.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.signal import fftconvolve

from .core import (GridSpec, OpticalConfig, Volume3D, VolumeKind, check_same_grid, fftc, ifftc,
                   mirror_index, unpaired_mask)
from .errors import InvariantError

LN2 = np.log(2)


class FilterShape(str, enum.Enum):
    STEP = "step"
    GAUSSIAN = "gaussian"


class CutoffUnits(str, enum.Enum):
    CYCLES_PER_UM = "cycles_per_um"
    INVERSE_FOV = "fov"


@dataclass(frozen=True)
class FilterSpec:
    """
    :param shape: step or Gaussian
    :param cutoff: step rise (step) or half-response frequency (Gaussian)
    :param units: ``cycles_per_um`` or ``fov`` (multiples of the inverse of the
      smallest field-of-view axis)
    """
    shape: FilterShape
    cutoff: float
    units: CutoffUnits = CutoffUnits.CYCLES_PER_UM

    def __post_init__(self):
        object.__setattr__(self, "shape", FilterShape(self.shape))
        object.__setattr__(self, "units", CutoffUnits(self.units))
        if not self.cutoff > 0:
            raise InvariantError("cutoff must be positive")

    def cutoff_frequency(self, grid: GridSpec) -> float:
        """cutoff in cycles/um on ``grid``"""
        if self.units is CutoffUnits.INVERSE_FOV:
            return self.cutoff / grid.min_fov
        return float(self.cutoff)


@dataclass(frozen=True, eq=False)
class Filter3D:
    grid: GridSpec
    response: np.ndarray
    cutoff: Optional[float] = None


def step_response(xi, xi_c: float):
    """1 where |xi| >= xi_c, else 0"""
    return (np.abs(xi) >= xi_c).astype(float)


def gaussian_response(xi, xi_c: float):
    """1 - 2^(-|xi|^2 / xi_c^2); equals 1/2 at the cutoff"""
    xi = np.asarray(xi, dtype=float)
    return 1 - 0.5 ** (xi * xi / (xi_c * xi_c))


def make_filter(spec: FilterSpec, grid: GridSpec) -> Filter3D:
    """realize a filter on the centered frequency grid"""
    xi_c = spec.cutoff_frequency(grid)
    if xi_c >= grid.nyquist:
        raise InvariantError(f"cutoff {xi_c:.4f} cycles/um is at or beyond Nyquist {grid.nyquist:.4f}")
    r = grid.freq_radius()
    resp = step_response(r, xi_c) if spec.shape is FilterShape.STEP else gaussian_response(r, xi_c)
    return Filter3D(grid, resp, xi_c)


def all_pass(grid: GridSpec) -> Filter3D:
    return Filter3D(grid, np.ones(grid.shape))


def apply_darkfield(vol: Volume3D, filt: Filter3D, workers: Optional[int] = None) -> Volume3D:
    """
    Multiply the volume's spectrum by the filter response.

    The result is tagged ``Filtered``: its values are contrast, not refractive index.
    """
    vol.require_kind(VolumeKind.REFRACTIVE_INDEX, VolumeKind.SCATTERING_POTENTIAL)
    check_same_grid(vol.grid, filt.grid)
    out = ifftc(filt.response * fftc(vol.values, workers=workers), workers=workers).real
    return Volume3D(vol.grid, out, VolumeKind.FILTERED)


# transfer-function supports

class Modality(str, enum.Enum):
    BRIGHT_FIELD = "BrightField"
    DARK_FIELD = "DarkField"
    QPI = "QPI"
    ODT = "ODT"
    DARK_FIELD_ODT = "DarkFieldODT"


HERMITIAN_MODALITIES = (Modality.ODT, Modality.DARK_FIELD_ODT, Modality.DARK_FIELD, Modality.BRIGHT_FIELD)


@dataclass(frozen=True, eq=False)
class SupportMask3D:
    """
    Binary Fourier-space support on the centered grid.

    :param epsilon: dark-field annulus margin, cycles/um
    :param cutoff: radius of the removed central ball, cycles/um
    """
    grid: GridSpec
    mask: np.ndarray
    modality: Modality
    epsilon: Optional[float] = None
    cutoff: Optional[float] = None

    def __post_init__(self):
        m = np.array(self.mask, dtype=bool)
        if m.shape != self.grid.shape:
            raise InvariantError("mask shape does not match grid")
        m.flags.writeable = False
        object.__setattr__(self, "mask", m)
        object.__setattr__(self, "modality", Modality(self.modality))

    def is_hermitian(self) -> bool:
        return bool(np.array_equal(self.mask, mirror_index(self.mask) & ~unpaired_mask(self.grid.shape))
                    and not np.any(self.mask & unpaired_mask(self.grid.shape)))


def one_bin(grid: GridSpec) -> float:
    """smallest frequency step of the grid, cycles/um"""
    return 1 / max(grid.fov)


def _hermitian(mask: np.ndarray) -> np.ndarray:
    mask = mask | mirror_index(mask)
    mask[unpaired_mask(mask.shape)] = False
    return mask


def _circle_intersections(r1: float, qx: np.ndarray, qy: np.ndarray, r2: float):
    """
    Intersections of |p| = r1 with |p + q| = r2 for each q, as angles on the first
    circle; NaN where the circles do not cross.
    """
    d = np.hypot(qx, qy)
    with np.errstate(invalid="ignore", divide="ignore"):
        a = (r1 ** 2 - r2 ** 2 + d ** 2) / (2 * d)
        h = np.sqrt(r1 ** 2 - a ** 2)
        # direction from the first center towards the second center (-q)
        ux, uy = -qx / d, -qy / d
        p1 = np.arctan2(a * uy + h * ux, a * ux - h * uy)
        p2 = np.arctan2(a * uy - h * ux, a * ux + h * uy)
    bad = ~np.isfinite(p1) | ~np.isfinite(p2)
    p1[bad] = np.nan
    p2[bad] = np.nan
    return p1, p2


def _column_extent(qx, qy, nu0, arcs, n_angles):
    """
    Min and max of the cap height Kz over boundary arcs of the admissible
    illumination set, for each lateral column q.

    ``arcs`` lists (center, radius, other_center, other_radius) in terms of q:
    illuminations p = center + radius * e(phi) constrained by |p - other_center| <= other_radius
    where centers are either 0 or -q. The cap height is
    sqrt(nu0^2 - |p + q|^2) - sqrt(nu0^2 - |p|^2).
    """
    phi = np.linspace(-np.pi, np.pi, n_angles, endpoint=False)
    lo = np.full(qx.shape, np.inf)
    hi = np.full(qx.shape, -np.inf)
    for shifted, radius, other_shifted, other_radius in arcs:
        cx = -qx if shifted else np.zeros_like(qx)
        cy = -qy if shifted else np.zeros_like(qy)
        # intersection angles of this circle with the constraining circle
        if shifted:
            i1, i2 = _circle_intersections(radius, -qx, -qy, other_radius)
        else:
            i1, i2 = _circle_intersections(radius, qx, qy, other_radius)
        angles = np.concatenate([np.broadcast_to(phi, qx.shape + phi.shape),
                                 i1[:, None], i2[:, None]], axis=1)
        px = cx[:, None] + radius * np.cos(angles)
        py = cy[:, None] + radius * np.sin(angles)
        ox = -qx[:, None] if other_shifted else 0.0
        oy = -qy[:, None] if other_shifted else 0.0
        ok = np.hypot(px - ox, py - oy) <= other_radius * (1 + 1e-12)
        kx, ky = px + qx[:, None], py + qy[:, None]
        with np.errstate(invalid="ignore"):
            kz = np.sqrt(nu0 ** 2 - kx ** 2 - ky ** 2) - np.sqrt(nu0 ** 2 - px ** 2 - py ** 2)
        ok &= np.isfinite(kz)
        lo = np.minimum(lo, np.where(ok, kz, np.inf).min(axis=1))
        hi = np.maximum(hi, np.where(ok, kz, -np.inf).max(axis=1))
    return lo, hi


def _fill_columns(grid: GridSpec, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """voxelize per-column [lo, hi] Kz intervals (cycles/um) with nearest rounding"""
    dz = grid.dxi[2]
    has = np.isfinite(lo) & np.isfinite(hi)
    ilo = np.where(has, np.rint(np.where(has, lo, 0) / dz), 1).astype(np.int64) + grid.nz // 2
    ihi = np.where(has, np.rint(np.where(has, hi, 0) / dz), -1).astype(np.int64) + grid.nz // 2
    iz = np.arange(grid.nz)
    return (iz >= ilo[..., None]) & (iz <= ihi[..., None])


def _column_mask(grid: GridSpec, nu0: float, arcs, n_angles: int, chunk: int = 2048) -> np.ndarray:
    fx, fy = np.meshgrid(grid.freq_axis(0), grid.freq_axis(1), indexing="ij")
    qx, qy = fx.ravel(), fy.ravel()
    lo = np.empty(qx.size)
    hi = np.empty(qx.size)
    for s in range(0, qx.size, chunk):
        lo[s:s + chunk], hi[s:s + chunk] = _column_extent(qx[s:s + chunk], qy[s:s + chunk], nu0, arcs, n_angles)
    return _fill_columns(grid, lo.reshape(fx.shape), hi.reshape(fx.shape))


def _cap_voxels(grid: GridSpec, nu0: float, nu_na: float, supersample: int = 4) -> np.ndarray:
    """
    Voxelized normal-incidence cap, K = (q, sqrt(nu0^2 - q^2) - nu0) for |q| <= nu_na,
    rasterized from laterally supersampled points so steep parts stay connected.
    """
    mask = np.zeros(grid.shape, dtype=bool)
    dx, dy, dz = grid.dxi
    sx = (np.arange(grid.nx * supersample) - grid.nx * supersample // 2) * dx / supersample
    sy = (np.arange(grid.ny * supersample) - grid.ny * supersample // 2) * dy / supersample
    qx, qy = np.meshgrid(sx, sy, indexing="ij")
    inside = qx ** 2 + qy ** 2 <= nu_na ** 2
    qx, qy = qx[inside], qy[inside]
    kz = np.sqrt(nu0 ** 2 - qx ** 2 - qy ** 2) - nu0
    ix = np.rint(qx / dx).astype(np.int64) + grid.nx // 2
    iy = np.rint(qy / dy).astype(np.int64) + grid.ny // 2
    iz = np.rint(kz / dz).astype(np.int64) + grid.nz // 2
    ok = (ix >= 0) & (ix < grid.nx) & (iy >= 0) & (iy < grid.ny) & (iz >= 0) & (iz < grid.nz)
    mask[ix[ok], iy[ok], iz[ok]] = True
    return mask


def make_ctf_support(config: OpticalConfig, grid: GridSpec, modality: Modality,
                     epsilon: Optional[float] = None, cutoff: Optional[float] = None,
                     n_angles: int = 1024) -> SupportMask3D:
    """
    Binary Fourier support of an imaging modality, frequencies in cycles/um.

    QPI: the normal-incidence cap. ODT: union of caps over every illumination in the
    condenser NA, built column by column from the extreme cap heights over the
    boundary of the admissible illumination set. DarkField: union of caps for
    illuminations on the annulus NA_obj/lambda + epsilon, completed by Hermitian
    symmetry, minus the ball of radius epsilon. DarkFieldODT: ODT minus the ball of
    radius ``cutoff``. BrightField: autocorrelation support of the condenser and
    objective pupil caps.

    :param epsilon: dark-field annulus margin (required for DarkField)
    :param cutoff: radius of the removed ball (required for DarkFieldODT)
    """
    modality = Modality(modality)
    nu0 = config.n_medium / config.wavelength_vacuum
    nu_o = config.na_objective / config.wavelength_vacuum
    nu_c = config.na_condenser / config.wavelength_vacuum

    if modality is Modality.QPI:
        fx, fy = np.meshgrid(grid.freq_axis(0), grid.freq_axis(1), indexing="ij")
        inside = fx ** 2 + fy ** 2 <= nu_o ** 2
        kz = np.where(inside, np.sqrt(np.maximum(nu0 ** 2 - fx ** 2 - fy ** 2, 0)) - nu0, np.nan)
        mask = _fill_columns(grid, np.where(inside, kz, np.inf), np.where(inside, kz, -np.inf))
    elif modality in (Modality.ODT, Modality.DARK_FIELD_ODT):
        if modality is Modality.DARK_FIELD_ODT and cutoff is None:
            raise InvariantError("DarkFieldODT support needs a cutoff")
        # boundary of {p : |p| <= nu_c, |p + q| <= nu_o}: illumination or scattered wave on its NA edge
        arcs = [(False, nu_c, True, nu_o), (True, nu_o, False, nu_c)]
        mask = _hermitian(_column_mask(grid, nu0, arcs, n_angles))
        if modality is Modality.DARK_FIELD_ODT:
            mask &= grid.freq_radius() >= cutoff
    elif modality is Modality.DARK_FIELD:
        if epsilon is None:
            raise InvariantError("DarkField support needs epsilon")
        # illumination axial component sits epsilon below the objective's NA edge
        kiz = np.sqrt(nu0 ** 2 - nu_o ** 2) - epsilon
        if kiz <= 0:
            raise InvariantError("dark-field annulus lies beyond the medium wavenumber")
        rho = np.sqrt(nu0 ** 2 - kiz ** 2)
        arcs = [(False, rho, True, nu_o)]
        mask = _hermitian(_column_mask(grid, nu0, arcs, n_angles))
        mask &= grid.freq_radius() >= epsilon
    elif modality is Modality.BRIGHT_FIELD:
        det = _cap_voxels(grid, nu0, nu_o)
        ill = _cap_voxels(grid, nu0, nu_c)
        full = fftconvolve(det.astype(float), ill[::-1, ::-1, ::-1].astype(float), mode="full")
        sl = tuple(slice(n // 2 - 1, n // 2 - 1 + n) for n in grid.shape)
        mask = _hermitian(full[sl] > 0.5)
    else:
        raise InvariantError(f"unknown modality {modality}")
    return SupportMask3D(grid, mask, modality, epsilon, cutoff)


def boundary_band(mask: np.ndarray) -> np.ndarray:
    """voxels within one voxel (26-neighborhood) of a mask boundary"""
    from scipy.ndimage import binary_dilation, binary_erosion

    st = np.ones((3, 3, 3), dtype=bool)
    return binary_dilation(mask, st) & ~binary_erosion(mask, st, border_value=1)
