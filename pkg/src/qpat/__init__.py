"""qpat: quantitative photoacoustic tomography toolkit.

Forward synthesis of internal pressure data under single-scattering and
diffusion light-propagation models, and explicit reconstruction of the
recoverable parameter combinations (mu_t and gamma*mu_a, or their
diffusion-model analogues) from that data.
"""

from .errors import (AnchorOutsideSupport, BadHeader, BadMagic, BeamPairMismatch,
                     DegenerateIlluminations, DisconnectedMask, EmptyMask,
                     EmptySupport, GeometryMismatch, GridFormatError,
                     NonFiniteValues, PayloadMismatch, QpatError, SolverFailure,
                     TransmissionRequired, UnsupportedDirection, ValidationError)
from .fields import (GridGeometry, MetricsReport, Phantom, PhantomSpec, Profile1D,
                     ScalarField, field_metrics, interior_margin_mask, make_phantom,
                     physical_box_mask)
from .gridfile import read_grid, write_grid
from .single_scatter import (Beam, IlluminationDataSet, attenuation_integral,
                             extract_plane, fluence, fluences_for_pair,
                             line_integral, synthesize_pressures, transmission)
from .diffusion import (DiffusionProblem, diffusion_coefficient, diffusion_residual,
                        boundary_flux_sum, reduced_scattering, solve_diffusion,
                        sphere_first_moment_max, sphere_moment_check,
                        sphere_quadrature, sphere_vector_moment_max)
from .recon import (DiffusionQuotientResult, ReconstructionResult, SupportMask,
                    gradient_path_integrate, quotient_log_gradient, recover_gamma_mu_a,
                    recover_gamma_mu_a_with_transmission, recover_diffusion_quotient,
                    recover_mu_t, recover_sectional, staircase_integrals,
                    stencil_report, support_mask)

__version__ = "0.1.0"
