"""
Ground-truth refractive-index phantoms and illumination patterns.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .core import GridSpec, OpticalConfig, Volume3D, VolumeKind, check_illumination
from .errors import InvariantError

# margin in voxels every structure must keep from the grid edge
EDGE_MARGIN_VOXELS = 2


@dataclass(frozen=True)
class Sphere:
    """homogeneous sphere; ``center`` in um relative to the grid center"""
    center: tuple[float, float, float] = (0.0, 0.0, 0.0)
    radius: float = 3.5
    n_inside: float = 1.5983


@dataclass(frozen=True)
class SheppLogan3D:
    """
    Modified 3D Shepp-Logan head. ``scale`` is the half-extent in um of the unit
    cube the ellipsoid table is defined on. Inside the outer ellipsoid the index is
    ``n_background + contrast * intensity`` where intensity is the usual additive
    ellipsoid sum (0.2 for the brain, 1.0 on the skull rim).
    """
    scale: float = 4.0
    n_background: float = 1.337
    contrast: float = 0.02


@dataclass(frozen=True)
class Deltas:
    """point scatterers as (position um, delta RI) pairs, each placed on its nearest voxel"""
    points: tuple = ()


@dataclass(frozen=True)
class PhantomSpec:
    variant: Union[Sphere, SheppLogan3D, Deltas]
    n_medium: float = 1.574


# intensity, semi-axes (a, b, c), center (x0, y0, z0), Euler angles phi, theta, psi (deg)
_SHEPP_LOGAN = np.array([
    [1.0, .6900, .920, .810, 0.00, 0.0000, 0.00, 0.0, 0.0, 0.0],
    [-.8, .6624, .874, .780, 0.00, -.0184, 0.00, 0.0, 0.0, 0.0],
    [-.2, .1100, .310, .220, 0.22, 0.0000, 0.00, -18., 0.0, 10.],
    [-.2, .1600, .410, .280, -.22, 0.0000, 0.00, 18., 0.0, 10.],
    [0.1, .2100, .250, .410, 0.00, 0.3500, -.15, 0.0, 0.0, 0.0],
    [0.1, .0460, .046, .050, 0.00, 0.1000, 0.25, 0.0, 0.0, 0.0],
    [0.1, .0460, .046, .050, 0.00, -.1000, 0.25, 0.0, 0.0, 0.0],
    [0.1, .0460, .023, .050, -.08, -.6050, 0.00, 0.0, 0.0, 0.0],
    [0.1, .0230, .023, .020, 0.00, -.6060, 0.00, 0.0, 0.0, 0.0],
    [0.1, .0230, .046, .020, 0.06, -.6050, 0.00, 0.0, 0.0, 0.0],
])


def _euler(phi: float, theta: float, psi: float) -> np.ndarray:
    cphi, sphi = np.cos(np.deg2rad(phi)), np.sin(np.deg2rad(phi))
    cth, sth = np.cos(np.deg2rad(theta)), np.sin(np.deg2rad(theta))
    cpsi, spsi = np.cos(np.deg2rad(psi)), np.sin(np.deg2rad(psi))
    return np.array([
        [cpsi * cphi - cth * sphi * spsi, cpsi * sphi + cth * cphi * spsi, spsi * sth],
        [-spsi * cphi - cth * sphi * cpsi, -spsi * sphi + cth * cphi * cpsi, cpsi * sth],
        [sth * sphi, -sth * cphi, cth]])


def shepp_logan_intensity(x, y, z) -> np.ndarray:
    """additive ellipsoid intensity at normalized coordinates in [-1, 1]^3"""
    x, y, z = np.broadcast_arrays(x, y, z)
    out = np.zeros(x.shape)
    pts = np.stack([x, y, z], axis=-1)
    for amp, a, b, c, x0, y0, z0, phi, theta, psi in _SHEPP_LOGAN:
        rp = (pts - np.array([x0, y0, z0])) @ _euler(phi, theta, psi).T
        inside = (rp[..., 0] / a) ** 2 + (rp[..., 1] / b) ** 2 + (rp[..., 2] / c) ** 2 <= 1
        out[inside] += amp
    return out


def _check_fits(grid: GridSpec, center, half_extent):
    for ax in range(3):
        limit = grid.fov[ax] / 2 - EDGE_MARGIN_VOXELS * grid.pitch
        if abs(center[ax]) + half_extent[ax] > limit:
            raise InvariantError(f"structure reaches {abs(center[ax]) + half_extent[ax]:.3f} um on axis {ax}, "
                                 f"beyond the {limit:.3f} um allowed by the grid margin")


def _sphere_fraction(grid: GridSpec, sph: Sphere) -> np.ndarray:
    """fraction of each voxel inside the sphere, 3x3x3 supersampled on boundary voxels"""
    x, y, z = grid.coords()
    cx, cy, cz = sph.center
    d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    half_diag = np.sqrt(3) / 2 * grid.pitch
    frac = (d <= sph.radius - half_diag).astype(float)
    edge = np.nonzero(np.abs(d - sph.radius) < half_diag)
    if edge[0].size:
        offs = np.array([-1, 0, 1]) * grid.pitch / 3
        ox, oy, oz = np.meshgrid(offs, offs, offs, indexing="ij")
        ex = grid.axis(0)[edge[0]][:, None] + ox.ravel() - cx
        ey = grid.axis(1)[edge[1]][:, None] + oy.ravel() - cy
        ez = grid.axis(2)[edge[2]][:, None] + oz.ravel() - cz
        inside = ex ** 2 + ey ** 2 + ez ** 2 <= sph.radius ** 2
        frac[edge] = inside.mean(axis=1)
    return frac


def build_phantom(spec: PhantomSpec, grid: GridSpec) -> Volume3D:
    """
    Voxelize a phantom as a refractive-index volume.

    Voxels not touched by any structure hold exactly ``spec.n_medium``.
    """
    nm = spec.n_medium
    v = spec.variant
    if isinstance(v, Sphere):
        if not v.radius > 0:
            raise InvariantError("sphere radius must be positive")
        _check_fits(grid, v.center, (v.radius,) * 3)
        frac = _sphere_fraction(grid, v)
        values = nm * (1 - frac) + v.n_inside * frac
    elif isinstance(v, SheppLogan3D):
        if not v.scale > 0:
            raise InvariantError("Shepp-Logan scale must be positive")
        _check_fits(grid, (0, 0, 0), (0.69 * v.scale, 0.92 * v.scale, 0.81 * v.scale))
        x, y, z = grid.coords()
        outer = (x / (0.69 * v.scale)) ** 2 + (y / (0.92 * v.scale)) ** 2 + (z / (0.81 * v.scale)) ** 2 <= 1
        inten = shepp_logan_intensity(x / v.scale, y / v.scale, z / v.scale)
        values = np.where(outer, v.n_background + v.contrast * inten, nm)
    elif isinstance(v, Deltas):
        values = np.full(grid.shape, float(nm))
        for pos, dn in v.points:
            _check_fits(grid, pos, (0, 0, 0))
            idx = tuple(int(np.rint(pos[ax] / grid.pitch)) + grid.shape[ax] // 2 for ax in range(3))
            values[idx] += dn
    else:
        raise TypeError(f"unknown phantom variant {type(v).__name__}")
    return Volume3D(grid, values, VolumeKind.REFRACTIVE_INDEX)


def sphere_masks(grid: GridSpec, sph: Sphere, shell_voxels: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """
    Interior and boundary-shell masks of a sphere.

    interior: distance to the surface at least ``shell_voxels`` inside;
    shell: within ``shell_voxels`` of the surface on either side.
    """
    x, y, z = grid.coords()
    cx, cy, cz = sph.center
    d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    w = shell_voxels * grid.pitch
    return d <= sph.radius - w, np.abs(d - sph.radius) < w


def sphere_edge_masks(grid: GridSpec, sph: Sphere, shell_voxels: float = 2.0,
                      core_fraction: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """
    Core and boundary-shell masks for edge-contrast statistics.

    The core is the central ball of radius ``core_fraction * radius``. A high-pass
    filter's edge response reaches well inside the object, so voxels near the
    surface belong to neither the core nor a clean interior.
    """
    if not 0 < core_fraction < 1:
        raise ValueError("core_fraction must lie in (0, 1)")
    x, y, z = grid.coords()
    cx, cy, cz = sph.center
    d = np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2)
    return d <= core_fraction * sph.radius, np.abs(d - sph.radius) < shell_voxels * grid.pitch


# illumination patterns

@dataclass(frozen=True)
class Normal:
    pass


@dataclass(frozen=True)
class CircularScan:
    count: int = 49
    na_fraction: float = 0.95


@dataclass(frozen=True)
class SpiralScan:
    """golden-angle spiral filling the condenser disc out to ``na_fraction``"""
    count: int = 49
    na_fraction: float = 0.95


@dataclass(frozen=True)
class IlluminationSet:
    vectors: np.ndarray
    pattern: Union[Normal, CircularScan, SpiralScan] = field(default_factory=Normal)

    def __len__(self):
        return len(self.vectors)

    def __iter__(self):
        return iter(tuple(v) for v in self.vectors)


def generate_illuminations(config: OpticalConfig, pattern=Normal()) -> IlluminationSet:
    """
    Plane-wave illumination wavevectors (rad/um) for a scan pattern.
    """
    k0 = config.k0
    if isinstance(pattern, Normal):
        kr = np.zeros(1)
        phi = np.zeros(1)
    elif isinstance(pattern, (CircularScan, SpiralScan)):
        if pattern.count < 1:
            raise ValueError("illumination count must be >= 1")
        if not 0 < pattern.na_fraction <= 1:
            raise ValueError(f"na_fraction must lie in (0, 1], got {pattern.na_fraction}")
        kmax = pattern.na_fraction * config.k_na_r("condenser")
        j = np.arange(pattern.count)
        if isinstance(pattern, CircularScan):
            kr = np.full(pattern.count, kmax)
            phi = 2 * np.pi * j / pattern.count
        else:
            kr = kmax * np.sqrt((j + 0.5) / pattern.count)
            phi = j * np.pi * (3 - np.sqrt(5))
    else:
        raise TypeError(f"unknown illumination pattern {type(pattern).__name__}")
    vecs = np.stack([kr * np.cos(phi), kr * np.sin(phi), np.sqrt(k0 ** 2 - kr ** 2)], axis=1)
    for v in vecs:
        check_illumination(v, config)
    return IlluminationSet(vecs, pattern)
