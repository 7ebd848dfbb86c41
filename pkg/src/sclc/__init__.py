"""sclc: sectorial operators, holomorphic contour calculus, operator sums and
maximal regularity for non-autonomous linear evolution equations (dense matrices)."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .linop import (LinOp, Spectrum, load_matrix, matrix_from_json, matrix_to_json, op_norm,
                    read_binary, resolvent_apply, resolvent_identity_residual, save_matrix_json,
                    spectrum_of, write_binary)
from .sector import (GridSpec, SectorialCertificate, estimate_r_bound, estimate_sectorial,
                     max_sector_angle, neumann_perturb, r_sectorial_probe, shift_bound_check)
from .contour import (FUNCTION_BANK, ContourRule, HoloFunction, QuadSettings, build_contour,
                      complex_power, dunford, kw_sum_norm, power_decay_probe,
                      power_semigroup_residual, residue_oracle)
from .sums import (DPGBundle, OperatorPair, commuting_pair, commutator_norm, dpg_bundle, eps_pair,
                   find_shift, fit_decay, make_pair, random_sectorial_pair, sum_inverse,
                   sum_sectoriality, uniform_family_check)
from .parabolic import (PartitionOfUnity, SpaceTimeProblem, TimeGrid, build_derivative,
                        build_partition, load_problem, oracle_direct, problem_from_json,
                        solve_nonautonomous)
