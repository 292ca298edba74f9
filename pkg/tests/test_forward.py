import warnings

import numpy as np
import pytest

from dfodt.core import GridSpec, Volume3D, VolumeKind, fftc, ri_to_potential
from dfodt.errors import EvanescentError
from dfodt.forward import (ForwardModel, ewald_cap, field_spectrum_scale, simulate_fields,
                           simulate_scattered_field)
from dfodt.phantoms import (CircularScan, Deltas, PhantomSpec, Sphere, build_phantom,
                            generate_illuminations)

from conftest import BEAD_OPTICS, WATER_OPTICS

R = 3.5


def _sphere_ft(K, f0, grid):
    """
    Closed-form transform of a homogeneous ball, 4 pi f0 [sin KR - KR cos KR] / K^3,
    scaled to the centered unitary DFT of the sampled volume.
    """
    K = np.asarray(K, float)
    out = np.full(K.shape, f0 * 4 / 3 * np.pi * R ** 3)
    nz = K > 1e-9
    k = K[nz]
    out[nz] = f0 * 4 * np.pi * (np.sin(k * R) - k * R * np.cos(k * R)) / k ** 3
    return out / (np.sqrt(grid.size) * grid.pitch ** 3)


@pytest.fixture(scope="module")
def bead64():
    g = GridSpec.cube(64, 0.2)
    return g, build_phantom(PhantomSpec(Sphere((0, 0, 0), R, 1.5983), 1.574), g)


def test_sphere_oracle_against_direct_dft(bead64):
    # explicit DFT sums (no FFT) at a handful of frequencies
    g, v = bead64
    pot = ri_to_potential(v.values, BEAD_OPTICS)
    f0 = ri_to_potential(np.array(1.5983), BEAD_OPTICS)
    x, y, z = g.coords()
    for idx in [(32, 32, 32), (34, 32, 32), (35, 33, 31), (37, 36, 32), (32, 32, 40)]:
        xi = [(i - 32) / g.fov[0] for i in idx]
        direct = np.sum(pot * np.exp(-2j * np.pi * (xi[0] * x + xi[1] * y + xi[2] * z))) / np.sqrt(g.size)
        oracle = _sphere_ft(2 * np.pi * np.linalg.norm(xi), f0, g)
        assert abs(direct - oracle) <= 0.02 * abs(_sphere_ft(0.0, f0, g))


def test_bead_cap_samples_match_closed_form(bead64):
    g, v = bead64
    model = ForwardModel(v, BEAD_OPTICS)
    f0 = ri_to_potential(np.array(1.5983), BEAD_OPTICS)
    for k in generate_illuminations(BEAD_OPTICS, CircularScan(3, 0.95)).vectors.tolist() + [[0, 0, BEAD_OPTICS.k0]]:
        cap = ewald_cap(BEAD_OPTICS, g, k)
        ix, iy = np.nonzero(cap.valid)
        iz = cap.iz[ix, iy]
        psi_ft = fftc(model.rytov(k).values)[ix, iy]
        derived = cap.kz[ix, iy] / (2j * np.pi) * psi_ft / field_spectrum_scale(g)
        fx, fy, fz = g.freq_axis(0)[ix], g.freq_axis(1)[iy], g.freq_axis(2)[iz]
        oracle = _sphere_ft(2 * np.pi * np.sqrt(fx ** 2 + fy ** 2 + fz ** 2), f0, g)
        # 0.7% on this grid
        assert np.linalg.norm(derived - oracle) / np.linalg.norm(oracle) < 0.02


def test_empty_phantom_gives_incident_field():
    g = GridSpec.cube(16, 0.2)
    v = build_phantom(PhantomSpec(Deltas(()), 1.337), g)
    k = generate_illuminations(WATER_OPTICS, CircularScan(3, 0.9)).vectors[1]
    u = simulate_scattered_field(v, WATER_OPTICS, k)
    assert np.array_equal(u.values, u.incident())


def test_single_delta_direct_cap_sum():
    g = GridSpec.cube(32, 0.1)
    dn = 1e-4
    v = build_phantom(PhantomSpec(Deltas((((0.0, 0.0, 0.0), dn),)), 1.337), g)
    k = (0.0, 0.0, WATER_OPTICS.k0)
    psi = ForwardModel(v, WATER_OPTICS).rytov(k).values

    # direct evaluation: a single voxel has a flat unitary spectrum f_vox / sqrt(N)
    f_vox = ri_to_potential(np.array(1.337 + dn), WATER_OPTICS)
    cap = ewald_cap(WATER_OPTICS, g, k)
    fx = g.freq_axis(0)[:, None]
    fy = g.freq_axis(1)[None, :]
    x = g.axis(0)
    coef = np.where(cap.valid, 2j * np.pi / np.where(cap.valid, cap.kz, 1) * field_spectrum_scale(g)
                    * f_vox / np.sqrt(g.size), 0)
    ex = np.exp(2j * np.pi * fx * x[None, :])  # (q_x, x)
    ey = np.exp(2j * np.pi * fy.T * x[None, :])  # (q_y, y)
    direct = ex.T @ coef @ ey / np.sqrt(g.nx * g.ny)
    assert np.allclose(psi, direct, rtol=0, atol=1e-12 * np.abs(direct).max())

    # isotropic scattering: the spectrum has one phase and |psi~| kz is constant on the cap
    psi_ft = fftc(psi)[cap.valid]
    assert np.allclose(np.angle(psi_ft), np.pi / 2, atol=1e-9)
    assert np.ptp(np.abs(psi_ft) * cap.kz[cap.valid]) < 1e-9 * np.abs(psi_ft * cap.kz[cap.valid]).max()
    # the phase is extremal at the scatterer
    assert np.unravel_index(np.argmax(psi.imag), psi.shape) == (16, 16)
    assert np.unravel_index(np.argmax(np.abs(psi)), psi.shape) == (16, 16)


def test_linear_in_potential(rng):
    g = GridSpec.cube(16, 0.2)
    pot = np.zeros(g.shape)
    pot[5:11, 6:10, 7:9] = rng.random((6, 4, 2))
    one = Volume3D(g, pot, VolumeKind.SCATTERING_POTENTIAL)
    two = Volume3D(g, 2 * pot, VolumeKind.SCATTERING_POTENTIAL)
    k = generate_illuminations(WATER_OPTICS, CircularScan(5, 0.8)).vectors[2]
    a = ForwardModel(one, WATER_OPTICS).rytov(k).values
    b = ForwardModel(two, WATER_OPTICS).rytov(k).values
    assert np.allclose(b, 2 * a, rtol=0, atol=1e-9 * np.abs(a).max())


def _rot90(a):
    """rotate by -90 degrees about z: content at (x, y) moves to (y, -x); exact on the periodic grid"""
    n = a.shape[0]
    return np.take(np.swapaxes(a, 0, 1), (n - np.arange(n)) % n, axis=1)


def test_circular_scan_rotation_covariance():
    g = GridSpec.cube(32, 0.2)
    spec = PhantomSpec(Sphere((0.8, -0.4, 0.2), 1.2, 1.36), 1.337)
    v = build_phantom(spec, g)
    v_rot = Volume3D(g, _rot90(v.values))
    ill = generate_illuminations(WATER_OPTICS, CircularScan(4, 0.9))
    fields = simulate_fields(v, WATER_OPTICS, ill, rytov=True)
    fields_rot = simulate_fields(v_rot, WATER_OPTICS, ill, rytov=True)
    for j in range(4):
        expect = _rot90(fields[j].values)
        # the rotated illumination is the previous one in the scan
        got = fields_rot[(j - 1) % 4].values
        assert np.allclose(got, expect, rtol=0, atol=1e-9 * np.abs(expect).max())


def test_evanescent_illumination():
    g = GridSpec.cube(16, 0.2)
    v = build_phantom(PhantomSpec(Deltas(()), 1.337), g)
    with pytest.raises(EvanescentError):
        ForwardModel(v, WATER_OPTICS).rytov((WATER_OPTICS.k0 * 1.01, 0.0, 0.0))


def test_strong_contrast_warns():
    g = GridSpec.cube(32, 0.2)
    v = build_phantom(PhantomSpec(Sphere((0, 0, 0), 1.0, 1.45), 1.337), g)
    with pytest.warns(UserWarning, match="first-order"):
        ForwardModel(v, WATER_OPTICS)
    weak = build_phantom(PhantomSpec(Sphere((0, 0, 0), 1.0, 1.35), 1.337), g)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ForwardModel(weak, WATER_OPTICS)


def test_fields_are_band_limited(bead64):
    g, v = bead64
    k = generate_illuminations(BEAD_OPTICS, CircularScan(7, 0.95)).vectors[3]
    psi = ForwardModel(v, BEAD_OPTICS).rytov(k)
    spec = fftc(psi.values)
    cap = ewald_cap(BEAD_OPTICS, g, k)
    assert np.abs(spec[~cap.valid]).max() < 1e-12 * np.abs(spec).max()


def test_cap_geometry_normal_incidence():
    g = GridSpec.cube(32, 0.1)
    cfg = WATER_OPTICS
    cap = ewald_cap(cfg, g, (0, 0, cfg.k0))
    ix, iy = np.nonzero(cap.valid)
    fx, fy = g.freq_axis(0)[ix], g.freq_axis(1)[iy]
    assert np.all(np.hypot(fx, fy) <= cfg.na_objective / cfg.wavelength_vacuum)
    fz = g.freq_axis(2)[cap.iz[ix, iy]]
    # voxel is the nearest one to the sphere |K + k0 z| = k0
    exact = (np.sqrt(cfg.k0 ** 2 - (2 * np.pi) ** 2 * (fx ** 2 + fy ** 2)) - cfg.k0) / (2 * np.pi)
    assert np.all(np.abs(fz - exact) <= 0.5 * g.dxi[2] + 1e-12)


def test_parallel_simulation_matches_sequential(bead64):
    g, v = bead64
    ill = generate_illuminations(BEAD_OPTICS, CircularScan(6, 0.95))
    seq = simulate_fields(v, BEAD_OPTICS, ill)
    par = simulate_fields(v, BEAD_OPTICS, ill, workers=3)
    for a, b in zip(seq, par):
        assert a.k_illum == b.k_illum
        assert np.array_equal(a.values, b.values)
