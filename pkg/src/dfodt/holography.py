"""
Off-axis holography: interferogram synthesis, sideband field retrieval, phase
unwrapping and the Rytov transform.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from skimage.restoration import unwrap_phase as _sk_unwrap

from .core import ComplexField2D, OpticalConfig, RytovField, fftc, ifftc
from .errors import InvariantError, LowSNRError, PhaseResidueWarning, SeparabilityError, ZeroAmplitudeError

# sideband peak must exceed this multiple of the median spectral magnitude outside all discs
SNR_FACTOR = 10.0
# and this fraction of the DC peak
MIN_SIDEBAND_FRACTION = 1e-9
AMPLITUDE_FLOOR = 1e-6


@dataclass(frozen=True, eq=False)
class Interferogram:
    """
    Recorded intensity of sample and tilted reference beams.

    :param reference_tilt: reference carrier frequency (fx, fy) in cycles/um
    :param ref_amplitude: real reference amplitude A
    :param k_illum: illumination wavevector of the sample beam, carried through to
      the retrieved field
    """
    nx: int
    ny: int
    pitch: float
    intensity: np.ndarray
    reference_tilt: tuple[float, float]
    ref_amplitude: float = 1.0
    k_illum: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        inten = np.array(self.intensity, dtype=float)
        if inten.shape != (self.nx, self.ny):
            raise InvariantError(f"intensity shape {inten.shape} != ({self.nx}, {self.ny})")
        if np.any(inten < 0):
            raise InvariantError("intensities must be non-negative")
        inten.flags.writeable = False
        object.__setattr__(self, "intensity", inten)
        object.__setattr__(self, "reference_tilt", tuple(float(t) for t in self.reference_tilt))
        object.__setattr__(self, "k_illum", tuple(float(k) for k in self.k_illum))


def band_radius(config: OpticalConfig) -> float:
    """lateral band limit NA_obj / lambda of a detected field, cycles/um"""
    return config.na_objective / config.wavelength_vacuum


def check_separability(tilt: Sequence[float], config: OpticalConfig, pitch: float):
    """
    Raise unless the sideband disc (radius NA/lambda about the tilt) lies inside the
    Nyquist square and clear of the baseband autocorrelation disc (radius 2 NA/lambda).
    """
    nu = band_radius(config)
    nyq = 1 / (2 * pitch)
    tx, ty = tilt
    if np.hypot(tx, ty) < 3 * nu:
        raise SeparabilityError(f"|tilt|={np.hypot(tx, ty):.3f} cycles/um overlaps the baseband; "
                                f"need >= {3 * nu:.3f}")
    if abs(tx) + nu > nyq or abs(ty) + nu > nyq:
        raise SeparabilityError(f"sideband about {tilt} with radius {nu:.3f} leaves the Nyquist "
                                f"square of half-width {nyq:.3f}")


def default_tilt(config: OpticalConfig, nx: int, ny: int, pitch: float) -> tuple[float, float]:
    """
    Diagonal carrier on the frequency grid, centered in the separable range.
    """
    nu = band_radius(config)
    nyq = 1 / (2 * pitch)
    lo, hi = 3 * nu / np.sqrt(2), nyq - nu
    if lo > hi:
        raise SeparabilityError(f"pitch {pitch} um is too coarse for off-axis separation at NA "
                                f"{config.na_objective}; need pitch <= {1 / (2 * nu * (1 + 3 / np.sqrt(2))):.4f}")
    a = (lo + hi) / 2
    dfx, dfy = 1 / (nx * pitch), 1 / (ny * pitch)
    t = (np.rint(a / dfx) * dfx, np.rint(a / dfy) * dfy)
    check_separability(t, config, pitch)
    return t


def _resample_field(values: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """band-limited Fourier resampling that preserves amplitudes"""
    nx, ny = values.shape
    if (nx, ny) == tuple(shape):
        return values
    ft = fftc(values)
    out = np.zeros(shape, dtype=complex)
    sx, sy = min(nx, shape[0]), min(ny, shape[1])
    out[shape[0] // 2 - sx // 2:shape[0] // 2 - sx // 2 + sx, shape[1] // 2 - sy // 2:shape[1] // 2 - sy // 2 + sy] = \
        ft[nx // 2 - sx // 2:nx // 2 - sx // 2 + sx, ny // 2 - sy // 2:ny // 2 - sy // 2 + sy]
    return ifftc(out) * np.sqrt(shape[0] * shape[1] / (nx * ny))


def synthesize_interferogram(sample: ComplexField2D, tilt: Sequence[float], ref_amplitude: float = 1.0,
                             config: OpticalConfig = OpticalConfig(), upsample: int = 1,
                             noise_sigma: float = 0.0, rng: Optional[np.random.Generator] = None
                             ) -> Interferogram:
    """
    Intensity |U + A exp(i 2 pi tilt . r)|^2.

    :param sample: band-limited sample field
    :param tilt: reference carrier (fx, fy), cycles/um; should be a multiple of the
      frequency step of the recorded grid for an exact round trip
    :param config: supplies the band radius for the separability check
    :param upsample: record on a grid ``upsample`` times finer than the field
      (Fourier interpolation), for fields sampled too coarsely to carry a carrier
    :param noise_sigma: std of additive Gaussian detector noise; needs ``rng``
    """
    shape = (sample.nx * upsample, sample.ny * upsample)
    pitch = sample.pitch / upsample
    check_separability(tilt, config, pitch)
    u = _resample_field(sample.values, shape)
    x = (np.arange(shape[0]) - shape[0] // 2)[:, None] * pitch
    y = (np.arange(shape[1]) - shape[1] // 2)[None, :] * pitch
    ref = ref_amplitude * np.exp(2j * np.pi * (tilt[0] * x + tilt[1] * y))
    inten = np.abs(u + ref) ** 2
    if noise_sigma > 0:
        if rng is None:
            raise ValueError("detector noise needs an explicit random generator")
        inten = np.maximum(inten + noise_sigma * rng.standard_normal(shape), 0)
    return Interferogram(shape[0], shape[1], pitch, inten, tuple(tilt), ref_amplitude, sample.k_illum)


def normalize_global_phase(values: np.ndarray, fraction: float = 0.1) -> np.ndarray:
    """
    Rotate a field so its mean over the lowest-gradient ``fraction`` of pixels is
    real and positive.
    """
    gx, gy = np.gradient(values)
    grad = np.sqrt(np.abs(gx) ** 2 + np.abs(gy) ** 2)
    region = grad <= np.quantile(grad, fraction)
    m = values[region].mean()
    if abs(m) == 0:
        return values
    return values * (np.conj(m) / abs(m))


def retrieve_field(holo: Interferogram, config: OpticalConfig, output_shape: Optional[tuple[int, int]] = None,
                   normalize_phase: bool = True) -> ComplexField2D:
    """
    Off-axis field retrieval.

    The cross term U A exp(-i 2 pi tilt . r) sits at -tilt in the spectrum; a disc of
    radius NA/lambda around it is cropped, re-centered, inverse transformed and
    divided by A.

    :param output_shape: lateral size of the returned field, defaults to the
      interferogram size; the output pitch scales so the field of view is preserved
    :param normalize_phase: apply :func:`normalize_global_phase`
    """
    nx, ny = holo.nx, holo.ny
    check_separability(holo.reference_tilt, config, holo.pitch)
    ox, oy = output_shape or (nx, ny)
    ft = fftc(holo.intensity)
    fx = (np.arange(nx) - nx // 2)[:, None] / (nx * holo.pitch)
    fy = (np.arange(ny) - ny // 2)[None, :] / (ny * holo.pitch)
    tx, ty = holo.reference_tilt
    nu = band_radius(config)

    side = np.hypot(fx + tx, fy + ty) <= nu
    twin = np.hypot(fx - tx, fy - ty) <= nu
    base = np.hypot(fx, fy) <= 2 * nu
    mag = np.abs(ft)
    peak = mag[side].max()
    floor = np.median(mag[~(side | twin | base)])
    if peak <= SNR_FACTOR * floor or peak <= MIN_SIDEBAND_FRACTION * mag.max():
        raise LowSNRError(f"sideband peak {peak:.3e} is not above noise floor {floor:.3e}")

    # integer-bin recentering; a residual sub-bin tilt is removed in real space
    dfx, dfy = 1 / (nx * holo.pitch), 1 / (ny * holo.pitch)
    sx, sy = int(np.rint(tx / dfx)), int(np.rint(ty / dfy))
    cropped = np.where(side, ft, 0)
    centered = np.roll(cropped, (sx, sy), axis=(0, 1))
    out = np.zeros((ox, oy), dtype=complex)
    hx, hy = min(nx, ox) // 2, min(ny, oy) // 2
    out[ox // 2 - hx:ox // 2 + hx, oy // 2 - hy:oy // 2 + hy] = centered[nx // 2 - hx:nx // 2 + hx,
                                                                         ny // 2 - hy:ny // 2 + hy]
    pitch = holo.pitch * nx / ox
    u = ifftc(out) * np.sqrt(ox * oy / (nx * ny)) / holo.ref_amplitude
    rx, ry = tx - sx * dfx, ty - sy * dfy
    if abs(rx) > 1e-9 * dfx or abs(ry) > 1e-9 * dfy:
        warnings.warn("reference tilt is off the frequency grid; retrieval is approximate", stacklevel=2)
        x = (np.arange(ox) - ox // 2)[:, None] * pitch
        y = (np.arange(oy) - oy // 2)[None, :] * pitch
        u = u * np.exp(2j * np.pi * (rx * x + ry * y))
    if normalize_phase:
        u = normalize_global_phase(u)
    return ComplexField2D(ox, oy, pitch, u, holo.k_illum)


def wrap(phase: np.ndarray) -> np.ndarray:
    """map to (-pi, pi]"""
    return np.pi - np.mod(np.pi - phase, 2 * np.pi)


def count_residues(wrapped: np.ndarray) -> int:
    """number of 2x2 loops whose wrapped phase differences do not sum to zero"""
    dx = wrap(np.diff(wrapped, axis=0))
    dy = wrap(np.diff(wrapped, axis=1))
    loop = dx[:, :-1] + dy[1:, :] - dx[:, 1:] - dy[:-1, :]
    return int(np.count_nonzero(np.abs(loop) > np.pi))


def unwrap_phase(wrapped: np.ndarray) -> np.ndarray:
    """
    2D phase unwrapping by sorted-reliability path following.

    The result equals the input plus an integer multiple of 2 pi at every pixel; the
    global multiple is chosen so the most common per-pixel offset is zero. A
    :class:`PhaseResidueWarning` is issued if the input holds residues.
    """
    wrapped = np.asarray(wrapped, dtype=float)
    nres = count_residues(wrapped)
    if nres:
        warnings.warn(f"{nres} phase residues; unwrapping is path dependent", PhaseResidueWarning, stacklevel=2)
    raw = _sk_unwrap(wrapped)
    cycles = np.rint((raw - wrapped) / (2 * np.pi))
    vals, counts = np.unique(cycles, return_counts=True)
    cycles -= vals[np.argmax(counts)]
    return wrapped + 2 * np.pi * cycles


def rytov_transform(sample: ComplexField2D, k_illum: Optional[Sequence[float]] = None,
                    background: Optional[ComplexField2D] = None) -> RytovField:
    """
    psi = ln|U/U_i| + i unwrap(arg U - arg U_i).

    :param k_illum: defaults to ``sample.k_illum``
    :param background: measured incident field to divide by instead of the ideal
      plane wave
    """
    k = tuple(sample.k_illum if k_illum is None else k_illum)
    u = sample.values
    amp = np.abs(u)
    floor = AMPLITUDE_FLOOR * np.median(amp)
    low = int(np.count_nonzero(amp <= floor))
    if low:
        raise ZeroAmplitudeError(f"{low} pixels below the amplitude floor {floor:.3e}")
    if background is None:
        inc = ComplexField2D(sample.nx, sample.ny, sample.pitch, np.ones_like(u), k).incident()
    else:
        inc = background.values
    ratio = u / inc
    psi = np.log(np.abs(ratio)) + 1j * unwrap_phase(np.angle(ratio))
    return RytovField(sample.nx, sample.ny, sample.pitch, psi, k)


def field_from_rytov(psi: RytovField) -> ComplexField2D:
    """inverse of :func:`rytov_transform` against the ideal plane wave"""
    base = ComplexField2D(psi.nx, psi.ny, psi.pitch, np.ones((psi.nx, psi.ny)), psi.k_illum)
    return base.with_values(base.incident() * np.exp(psi.values))
