import numpy as np
import pytest
from hypothesis import given, strategies as st

from dfodt.core import GridSpec, Volume3D, VolumeKind, fftc
from dfodt.darkfield import (CutoffUnits, FilterShape, FilterSpec, Modality, all_pass, apply_darkfield,
                             boundary_band, gaussian_response, make_ctf_support, make_filter, one_bin,
                             step_response)
from dfodt.errors import GridMismatchError, InvariantError
from dfodt.forward import ewald_cap
from dfodt.phantoms import PhantomSpec, Sphere, build_phantom, sphere_edge_masks

from conftest import BEAD_OPTICS, WATER_OPTICS

BEAD = PhantomSpec(Sphere((0.0, 0.0, 0.0), 3.5, 1.5983), 1.574)


@pytest.fixture(scope="module")
def bead():
    g = GridSpec.cube(64, 0.2)
    return build_phantom(BEAD, g)


# filter closed forms

def test_gaussian_half_response_at_cutoff():
    for xc in (0.1, 1 / 7, 2.5, 10.0):
        assert gaussian_response(xc, xc) == 0.5
        assert gaussian_response(-xc, xc) == 0.5


def test_dc_blocked():
    assert gaussian_response(0.0, 0.3) == 0.0
    assert step_response(0.0, 0.3) == 0.0


def test_step_rise_exactly_at_cutoff():
    xc = 1 / 7
    assert step_response(0.999 * xc, xc) == 0.0
    assert step_response(xc, xc) == 1.0
    assert set(np.unique(step_response(np.linspace(0, 1, 101), xc))) == {0.0, 1.0}


@given(xi=st.floats(0, 50), xc=st.floats(0.01, 10))
def test_gaussian_closed_form(xi, xc):
    assert gaussian_response(xi, xc) == pytest.approx(1 - np.exp(-np.log(2) * xi ** 2 / xc ** 2), abs=1e-14)


@given(a=st.floats(0, 20), b=st.floats(0, 20), xc=st.floats(0.01, 10))
def test_gaussian_monotone_and_bounded(a, b, xc):
    lo, hi = sorted((a, b))
    ga, gb = gaussian_response(lo, xc), gaussian_response(hi, xc)
    assert 0 <= ga <= gb <= 1


def test_filter_realization():
    g = GridSpec.cube(32, 0.2)
    f = make_filter(FilterSpec(FilterShape.GAUSSIAN, 1.0), g)
    assert f.response.shape == g.shape
    assert f.response[16, 16, 16] == 0.0
    assert f.response.min() >= 0 and f.response.max() <= 1
    # isotropy: equal on the three axes at the same radius
    assert f.response[20, 16, 16] == f.response[16, 20, 16] == f.response[16, 16, 20]
    # one frequency bin is 1/6.4 cycles/um; the 10th bin sits at 1.5625 cycles/um
    assert f.response[26, 16, 16] == pytest.approx(1 - 0.5 ** (1.5625 ** 2))


def test_fov_units():
    g = GridSpec(32, 32, 16, 0.2)
    # smallest axis is z: 16 x 0.2 = 3.2 um
    spec = FilterSpec("step", 5.0, CutoffUnits.INVERSE_FOV)
    assert spec.cutoff_frequency(g) == pytest.approx(5 / 3.2)
    assert make_filter(spec, g).cutoff == pytest.approx(1.5625)


def test_filter_spec_errors():
    with pytest.raises(InvariantError):
        FilterSpec("gaussian", 0.0)
    with pytest.raises(ValueError):
        FilterSpec("box", 1.0)
    with pytest.raises(InvariantError, match="Nyquist"):
        make_filter(FilterSpec("gaussian", 2.5), GridSpec.cube(16, 0.2))


# application

def test_all_pass_identity(bead):
    out = apply_darkfield(bead, all_pass(bead.grid))
    assert out.kind is VolumeKind.FILTERED
    assert np.abs(out.values - bead.values).max() < 1e-12


def test_dc_removal_zero_mean(bead):
    for shape in ("step", "gaussian"):
        out = apply_darkfield(bead, make_filter(FilterSpec(shape, 1 / 7), bead.grid))
        assert abs(out.values.mean()) < 1e-9 * np.abs(bead.values).max()


def test_linearity(rng):
    g = GridSpec.cube(16, 0.2)
    a = Volume3D(g, rng.standard_normal(g.shape), VolumeKind.SCATTERING_POTENTIAL)
    b = Volume3D(g, rng.standard_normal(g.shape), VolumeKind.SCATTERING_POTENTIAL)
    f = make_filter(FilterSpec("gaussian", 0.8), g)
    mix = Volume3D(g, 2.5 * a.values - 0.7 * b.values, VolumeKind.SCATTERING_POTENTIAL)
    lhs = apply_darkfield(mix, f).values
    rhs = 2.5 * apply_darkfield(a, f).values - 0.7 * apply_darkfield(b, f).values
    assert np.abs(lhs - rhs).max() < 1e-9


def test_parseval(bead):
    f = make_filter(FilterSpec("gaussian", 1 / 7), bead.grid)
    out = apply_darkfield(bead, f)
    expect = np.sum(np.abs(f.response * fftc(bead.values)) ** 2)
    assert np.sum(out.values ** 2) == pytest.approx(expect, rel=1e-9)


def test_step_idempotent(bead):
    f = make_filter(FilterSpec("step", 0.5), bead.grid)
    once = apply_darkfield(bead, f)
    twice = apply_darkfield(Volume3D(bead.grid, once.values, VolumeKind.SCATTERING_POTENTIAL), f)
    assert np.abs(twice.values - once.values).max() < 1e-12


def test_filtered_volume_refuses_refiltering(bead):
    f = make_filter(FilterSpec("step", 0.5), bead.grid)
    out = apply_darkfield(bead, f)
    with pytest.raises(InvariantError):
        apply_darkfield(out, f)
    with pytest.raises(GridMismatchError):
        apply_darkfield(bead, make_filter(FilterSpec("step", 0.5), GridSpec.cube(32, 0.2)))


def test_bead_edge_enhancement(bead):
    out = apply_darkfield(bead, make_filter(FilterSpec("gaussian", 1 / 7), bead.grid))
    core, shell = sphere_edge_masks(bead.grid, BEAD.variant)
    assert np.abs(out.values[shell]).mean() > np.abs(out.values[core]).mean()


# transfer-function supports

@pytest.fixture(scope="module")
def supports():
    g = GridSpec.cube(64, 0.05)
    eps = one_bin(g)
    odt = make_ctf_support(BEAD_OPTICS, g, Modality.ODT)
    dfo = make_ctf_support(BEAD_OPTICS, g, Modality.DARK_FIELD_ODT, cutoff=eps)
    df = make_ctf_support(BEAD_OPTICS, g, Modality.DARK_FIELD, epsilon=eps)
    return g, odt, dfo, df


def test_supports_are_hermitian(supports):
    _, odt, dfo, df = supports
    for m in (odt, dfo, df):
        assert m.is_hermitian()


def test_dfodt_is_odt_minus_ball(supports):
    g, odt, dfo, _ = supports
    ball = g.freq_radius() < one_bin(g)
    assert np.array_equal(dfo.mask, odt.mask & ~ball)
    assert not dfo.mask[32, 32, 32]
    assert odt.mask[32, 32, 32]


def test_darkfield_matches_darkfield_odt(supports):
    g, _, dfo, df = supports
    differ = df.mask != dfo.mask
    assert 1 - differ.mean() >= 0.99
    band = boundary_band(df.mask) | boundary_band(dfo.mask)
    assert not np.any(differ & ~band)


def test_odt_lateral_extent(supports):
    g, odt, _, _ = supports
    fx = g.freq_axis(0)
    extent = np.abs(fx[np.nonzero(odt.mask.any(axis=(1, 2)))[0]]).max()
    expect = (BEAD_OPTICS.na_condenser + BEAD_OPTICS.na_objective) / BEAD_OPTICS.wavelength_vacuum
    assert abs(extent - expect) <= g.dxi[0]


def test_odt_contains_every_sampled_cap():
    g = GridSpec.cube(32, 0.1)
    odt = make_ctf_support(WATER_OPTICS, g, Modality.ODT)
    k0 = WATER_OPTICS.k0
    kr = WATER_OPTICS.k_na_r("condenser")
    for phi in np.linspace(0, 2 * np.pi, 7, endpoint=False):
        for frac in (0.0, 0.5, 1.0):
            k = (frac * kr * np.cos(phi), frac * kr * np.sin(phi), np.sqrt(k0 ** 2 - (frac * kr) ** 2))
            cap = ewald_cap(WATER_OPTICS, g, k)
            ix, iy = np.nonzero(cap.valid)
            assert np.all(odt.mask[ix, iy, cap.iz[ix, iy]])


def test_qpi_is_single_cap():
    g = GridSpec.cube(32, 0.1)
    q = make_ctf_support(WATER_OPTICS, g, Modality.QPI)
    # one voxel per column inside the objective band, none outside
    counts = q.mask.sum(axis=2)
    fx, fy = np.meshgrid(g.freq_axis(0), g.freq_axis(1), indexing="ij")
    inside = np.hypot(fx, fy) <= WATER_OPTICS.na_objective / WATER_OPTICS.wavelength_vacuum
    assert np.all(counts[inside] == 1)
    assert np.all(counts[~inside] == 0)
    assert np.all(g.freq_axis(2)[np.nonzero(q.mask)[2]] <= 0)


def test_brightfield_support():
    g = GridSpec.cube(32, 0.1)
    bf = make_ctf_support(WATER_OPTICS, g, Modality.BRIGHT_FIELD)
    odt = make_ctf_support(WATER_OPTICS, g, Modality.ODT)
    assert bf.is_hermitian()
    assert bf.mask[16, 16, 16]
    # the incoherent support reaches the same lateral band edge as ODT
    fx = g.freq_axis(0)
    ext = lambda m: np.abs(fx[np.nonzero(m.any(axis=(1, 2)))[0]]).max()
    assert abs(ext(bf.mask) - ext(odt.mask)) <= 2 * g.dxi[0]


def test_missing_modality_parameters():
    g = GridSpec.cube(16, 0.1)
    with pytest.raises(InvariantError, match="cutoff"):
        make_ctf_support(BEAD_OPTICS, g, Modality.DARK_FIELD_ODT)
    with pytest.raises(InvariantError, match="epsilon"):
        make_ctf_support(BEAD_OPTICS, g, Modality.DARK_FIELD)
    with pytest.raises(ValueError):
        make_ctf_support(BEAD_OPTICS, g, "Phase")


def test_boundary_band():
    m = np.zeros((9, 9, 9), bool)
    m[2:7, 2:7, 2:7] = True
    band = boundary_band(m)
    assert band[2, 4, 4] and band[1, 4, 4]
    assert not band[4, 4, 4] and not band[0, 4, 4]
