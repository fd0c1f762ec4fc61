"""Numerical toolkit for isometric immersions of flat disks into Euclidean space.

Strain and second-form certificates, relative-nullity strata, straight
generators and their chaining to the boundary, and span/confinement reports.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .immersion import (DomainGrid, ImmersionSpec, Plane, ScaledPlane, Cylinder, Cone,  # noqa: E402
                        BentFlapDisk, ConfinementTorus, SphereChart, SampledGrid,
                        CentralDifference, central_difference, evaluate, jet, jets,
                        make_family, sample, save_sampled_grid, load_sampled_grid, FAMILIES)
from .geometry import (strain, induced_metric, normal_frame, second_form, shape_operator,  # noqa: E402
                       gauss_residual, principal_curvatures, gaussian_curvature,
                       codazzi_residual, isometry_status)
from .nullity import (FlatForm, KernelSubspace, is_flat, flatness_residual, kernel_basis,  # noqa: E402
                      cartan_null_vector, nullity_index, stratify, NullityField)
from .generators import (straightness_check, trace_generator, find_lower_nullity_neighbor,  # noqa: E402
                         chain_to_boundary, chain_defect_bound, transitivity_check)
from .span import domain_distance, image_distance, span, confinement_report  # noqa: E402
