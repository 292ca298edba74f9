"""
Dark-field optical diffraction tomography: first-order forward model,
off-axis holography, Ewald mapping with Gerchberg-Papoulis gap filling,
dark-field filtering of tomograms and modality transfer-function supports.
"""
__version__ = "0.1.0"

from .core import (ComplexField2D, GridSpec, OpticalConfig, RytovField, Spectrum3D, Volume3D, VolumeKind,
                   fftc, frequency_coordinate, ifftc, potential_to_ri, ri_to_potential, to_potential)
from .errors import *  # noqa: F401,F403
from .phantoms import (CircularScan, Deltas, IlluminationSet, Normal, PhantomSpec, SheppLogan3D, Sphere,
                       SpiralScan, build_phantom, generate_illuminations, sphere_edge_masks, sphere_masks)
from .forward import ForwardModel, simulate_fields, simulate_scattered_field
from .holography import (Interferogram, band_radius, default_tilt, retrieve_field, rytov_transform,
                         synthesize_interferogram, unwrap_phase, wrap)
from .tomography import GpConfig, MappingReport, gerchberg_papoulis, map_ewald, reconstruct
from .darkfield import (CutoffUnits, Filter3D, FilterShape, FilterSpec, Modality, SupportMask3D,
                        all_pass, apply_darkfield, boundary_band, make_ctf_support, make_filter, one_bin)
from .analysis import MetricReport, Plane, edge_contrast_ratio, export_slice, ncc, ringing_energy
