"""
Ewald-cap mapping of Rytov fields, direct inversion, and Gerchberg-Papoulis
iteration with a non-negativity constraint on the scattering potential.
"""
from __future__ import annotations

import json
import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, IO, Optional, Sequence

import numpy as np

from .core import (GridSpec, OpticalConfig, RytovField, Spectrum3D, Volume3D, VolumeKind,
                   check_illumination, fftc, ifftc, potential_to_ri)
from .errors import DegenerateReconstructionError, GridMismatchError
from .forward import ewald_cap, field_spectrum_scale

_logger = logging.getLogger(__name__)

# fraction of voxels allowed to hit the RI floor clamp
MAX_CLAMP_FRACTION = 0.10
# tolerated imaginary residue of the inverse transform, relative to the real part
IMAG_RTOL = 1e-9


@dataclass(frozen=True)
class MappingReport:
    frames_mapped: int
    voxels_touched: int
    collisions_averaged: int
    evanescent_discarded: int
    outside_discarded: int


@dataclass(frozen=True)
class GpConfig:
    """
    :param iterations: number of project/re-impose rounds
    :param enforce_nonnegativity: clamp the scattering potential at zero
    :param support_mask: optional boolean real-space object support; potential is
      zeroed outside it
    """
    iterations: int = 8
    enforce_nonnegativity: bool = True
    support_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def _frame_contribution(field: RytovField, config: OpticalConfig, grid: GridSpec):
    if not isinstance(field, RytovField):
        raise TypeError("map_ewald expects RytovField frames; run rytov_transform first")
    if not field.matches(grid):
        raise GridMismatchError(f"field {field.nx}x{field.ny} @ {field.pitch} does not match grid {grid}")
    check_illumination(field.k_illum, config)
    psi_ft = fftc(field.values)
    cap = ewald_cap(config, grid, field.k_illum)
    ix, iy = np.nonzero(cap.valid)
    iz = cap.iz[ix, iy]
    vals = cap.kz[ix, iy] / (2j * np.pi) * psi_ft[ix, iy] / field_spectrum_scale(grid)
    return ix, iy, iz, vals, cap.n_evanescent, cap.n_outside


def map_ewald(fields: Sequence[RytovField], config: OpticalConfig, grid: GridSpec,
              workers: int = 1) -> tuple[Spectrum3D, MappingReport]:
    """
    Place each frame's Rytov spectrum on its Ewald cap in the 3D potential spectrum.

    Every lateral frequency q within the objective NA contributes
    (kz / 2 pi i) * psi(q) to the voxel nearest K = (q, kz - k_iz), and the complex
    conjugate to the mirrored voxel -K. Contributions landing on the same voxel are
    averaged.

    :param fields: Rytov phases at the z=0 plane
    :param workers: thread count for per-frame transforms; accumulation is done in
      frame order so the result does not depend on it
    :return: spectrum, mapping report
    """
    if len(fields) == 0:
        raise ValueError("no fields to map")
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            contribs = list(pool.map(lambda f: _frame_contribution(f, config, grid), fields))
    else:
        contribs = [_frame_contribution(f, config, grid) for f in fields]

    sums = np.zeros(grid.shape, dtype=complex)
    wts = np.zeros(grid.shape)
    n_evan = n_out = 0
    for ix, iy, iz, vals, ne, no in contribs:
        # one frame hits each voxel at most once, so fancy-index accumulation is safe
        sums[ix, iy, iz] += vals
        wts[ix, iy, iz] += 1
        mx, my, mz = (grid.nx - ix) % grid.nx, (grid.ny - iy) % grid.ny, (grid.nz - iz) % grid.nz
        np.add.at(sums, (mx, my, mz), np.conj(vals))
        np.add.at(wts, (mx, my, mz), 1)
        n_evan += ne
        n_out += no

    touched = wts > 0
    values = np.zeros_like(sums)
    values[touched] = sums[touched] / wts[touched]
    n_touched = int(np.count_nonzero(touched))
    report = MappingReport(len(fields), n_touched, int(wts.sum()) - n_touched, n_evan, n_out)
    return Spectrum3D(grid, values, wts), report


def _real_potential(spectrum_values: np.ndarray, workers=None) -> tuple[np.ndarray, float]:
    pot = ifftc(spectrum_values, workers=workers)
    scale = np.max(np.abs(pot.real))
    residue = float(np.max(np.abs(pot.imag)) / scale) if scale > 0 else float(np.max(np.abs(pot.imag)))
    if residue > IMAG_RTOL:
        warnings.warn(f"spectrum is not Hermitian: imaginary residue {residue:.2e} discarded", stacklevel=3)
    return pot.real, residue


def _to_ri_volume(potential: np.ndarray, config: OpticalConfig, grid: GridSpec, meta: dict) -> Volume3D:
    n, nclamp = potential_to_ri(potential, config)
    if nclamp > MAX_CLAMP_FRACTION * grid.size:
        raise DegenerateReconstructionError(f"{nclamp} of {grid.size} voxels fell below the RI floor")
    if nclamp:
        _logger.warning("clamped %d voxels at the RI floor n = 1", nclamp)
    return Volume3D(grid, n, VolumeKind.REFRACTIVE_INDEX, meta={**meta, "clamped_voxels": nclamp})


def reconstruct(spectrum: Spectrum3D, config: OpticalConfig, workers: Optional[int] = None) -> Volume3D:
    """
    Inverse transform of the mapped spectrum (unfilled voxels zero), converted to RI.

    ``meta`` of the result holds ``clamped_voxels`` and ``imag_residue``.
    """
    pot, residue = _real_potential(spectrum.values, workers)
    return _to_ri_volume(pot, config, spectrum.grid, {"imag_residue": residue})


def violation_energy(potential: np.ndarray) -> float:
    """sum of squared negative potential values"""
    neg = np.minimum(potential, 0)
    return float(np.sum(neg * neg))


def _project(pot: np.ndarray, gp: GpConfig) -> np.ndarray:
    if gp.enforce_nonnegativity:
        pot = np.maximum(pot, 0)
    if gp.support_mask is not None:
        pot = np.where(gp.support_mask, pot, 0)
    return pot


def gerchberg_papoulis(spectrum: Spectrum3D, config: OpticalConfig, gp: GpConfig = GpConfig(),
                       callback: Optional[Callable[[int, np.ndarray], None]] = None,
                       log: Optional[IO[str]] = None, workers: Optional[int] = None) -> Volume3D:
    """
    Fill unmeasured frequencies by alternating projections.

    Each round projects the potential onto the constraint set, transforms, and
    re-imposes the measured samples. A final projection follows the last round.

    :param callback: called as ``callback(iteration, spectrum)`` right after the
      data step of every round
    :param log: text stream receiving one JSON object per round
    :return: RI volume; ``meta["gp_history"]`` lists per-round diagnostics and
      ``meta["violation_energy"]`` the sequence of constraint-violation energies
      (one per round plus the final one)
    """
    if gp.support_mask is not None and np.shape(gp.support_mask) != spectrum.grid.shape:
        raise GridMismatchError("support mask shape does not match the spectrum grid")
    measured = spectrum.measured
    data = spectrum.values[measured]
    pot, residue = _real_potential(spectrum.values, workers)
    history = []
    energies = []
    for it in range(gp.iterations):
        energies.append(violation_energy(pot))
        est = fftc(_project(pot, gp), workers=workers)
        est[measured] = data
        if callback is not None:
            callback(it, est)
        pot_c = ifftc(est, workers=workers)
        pot = pot_c.real
        scale = np.max(np.abs(pot))
        entry = {"iteration": it, "violation_energy": energies[-1],
                 "data_residual": float(np.max(np.abs(est[measured] - data), initial=0.0)),
                 "imag_residue": float(np.max(np.abs(pot_c.imag)) / scale) if scale > 0 else 0.0}
        history.append(entry)
        _logger.debug("gp %s", entry)
        if log is not None:
            log.write(json.dumps(entry) + "\n")
    energies.append(violation_energy(pot))
    pot = _project(pot, gp)
    return _to_ri_volume(pot, config, spectrum.grid,
                         {"imag_residue": residue, "gp_history": history, "violation_energy": energies})
