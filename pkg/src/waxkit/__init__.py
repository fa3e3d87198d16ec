"""Sparse combining modules, WAX decompositions and decentralized filter training."""

__version__ = "0.1.0"

from .errors import (AlphaError, DegenerateError, DimError, DivisibilityError,
                     IndeterminateError, InfeasibleError, ProtocolViolation, RankError,
                     RegimeError, SingularityError, SingularThetaError,
                     StructureDomainError, WaxError)
from .model import (DEFAULT_POLICY, Channel, NumericPolicy, SystemDims, make_dims,
                    module_dims, numerical_rank, random_channel)
from .combiner import (BTilde, CFExpansion, CombiningModule, Structure, apply_permutation,
                       apply_theta, b_tilde, build_structure, cf_expansion, kron_lift,
                       ones_count)
from .tradeoff import (BoundReport, achievable_L, min_Tp, necessary_L, necessary_T,
                       structure_min_L, sweep)
from .solver import (FaceSplitSystem, VectorizedSystem, WaxFactors, build_vectorized,
                     face_split, mutual_info, recover_X, solve_equivalent, solve_generic,
                     validate_A)
from .decentral import MessageLog, TreeTopology, accounting, build_topology, run_training
