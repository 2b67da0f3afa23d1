"""Monte Carlo Feynman-Kac estimators for ``-A u = F(x, u) + mu`` and smoothing diagnostics."""
from .catalog import CatalogEntry, instantiate, list_entries
from .compactness import (CompactnessReport, FunctionFamily, M1Profile, check_m1,
                          extract_subsequence, order_compactness_test)
from .ensemble import (PathEnsemble, StoppingTimeSample, debut_time, exit_time, hitting_time,
                       restrict_to_part, simulate_ensemble)
from .errors import ConfigError, DivergenceError, FKError, NumericError
from .grid import GridFunction, Mesh
from .measures import DiracAtoms, Density, FunctionalSample, MeasureSpec, accumulate
from .operators import (CensoringWarning, IdentityReport, OperatorEstimate, check_dynkin_split,
                        check_resolvent_identity, hitting_operator, killed_resolvent,
                        resolvent_apply, semigroup_apply)
from .process import MCParams, ProcessSpec
from .regions import Ball, Box, Complement, Empty, Whole
from .rng import DEFAULT_SEED
from .solver import (BSDEResidual, Nonlinearity, SolveConfig, SolveReport, apriori_check,
                     bsde_residual, phi_apply, solve, truncate_nonlinearity)
from .stream import PathOutcome, run_paths

__version__ = "0.1.0"
