"""Bethe approximation, loop series, edge zeta functions and graph covers
for discrete factor graphs."""

from .bp import (BeliefSet, BPResult, MessageSet, bethe_free_energy, bethe_free_energy_dual,
                 beliefs_from_messages, bp_step, find_fixed_points, find_minima, run_bp)
from .cover import (CoverAssignment, cover_growth_report, expected_cover_z, lift,
                    sample_cover)
from .errors import (BetheZetaError, DegenerateMessageError, EnumerationBoundError, GraphError,
                     NotIsingError, NotSingleCycleError, NumericalError, SingularVarianceError,
                     ZetaDivergenceError, ZetaUndefinedError)
from .exact import (brute_force_marginals, brute_force_z, gibbs_free_energy, ising_high_temp_z,
                    transfer_matrix_z)
from .factor_graph import FactorGraph, build_graph, ising_graph, load_graph, read_graph, save_graph
from .loops import (GeneralizedLoop, enumerate_generalized_loops, enumerate_simple_loops,
                    loop_dominance_report, loop_series_sum, loop_term_binary,
                    loop_term_nonbinary, orthogonality_check)
from .zeta import (bethe_hessian_analytic, bethe_hessian_fd, build_edge_weights,
                   correlation_matrix, hessian_zeta_residual, z_ab1, zeta_bass,
                   zeta_ihara_bass, zeta_prime_truncated)

__version__ = "0.1.0"
