"""Reconstruction attacks and noise lower bounds for private query release."""

__version__ = "0.1.0"

from .exceptions import (ConstructionError, ConvergenceError, DimensionError, DpalError,
                         NotFoundError, ParameterError, ResourceError, SchemaError, SolverError)
from .linalg import hadamard_row_product, smallest_singular_value
from .lp import L1Decoder, minimize_l1_residual
from .data import (AttributeTable, BitDatabase, DatabaseFamily, HistogramDatabase,
                   build_code_family, build_design_family)
from .queries import (CountingQuery, LipschitzQuery, MarginalQuery, random_sign_query,
                      verify_packing)
from .mechanisms import (BoundedNoiseAdversary, GaussianMechanism, LaplaceMechanism,
                         NoisyRelease, PrivacyParams, bounded_noise_adversary,
                         gaussian_mechanism, laplace_mechanism, noiseless)
from .attacks import (AttackResult, SectionParams, attribute_attack, epsilon_delta_witness,
                      exhaustive_attack_allcoords, exhaustive_attack_majority,
                      lp_decode_attack, nearest_neighbor_decode)
from .analysis import (chi_square_tail_test, estimate_section_constant,
                       hadamard_sigma_scaling, mutual_information_experiment,
                       rademacher_deviation_test)
