"""Synthetic categorical microdata from aggregated frequency tables."""
from .errors import ConfigError, CycleError, GensynError, NumericalError
from .schema import (AuxiliaryMatrix, ConditionalTable, Schema, TupleSpace, UnivariateTable, Variable,
                     load_schema, normalize_auxiliary, read_d1, read_d2, read_d3, tuple_space_size)
from .distribution import TupleDistribution
from .graph import DependencyGraph, build_graph, order_variables
from .conditional import apply_rules, extend, extend_independent, run_chain, seed_joint
from .copula import (BetaMarginal, CopulaSpec, draw_component_probs, estimate_p2, estimate_spec, fit_beta,
                     match_marginals, spec_from_schema)
from .maxent import ConstraintSet, build_constraints, dual_objective, fuse_priors, solve, threshold
from .synthesis import SyntheticPopulation, expand, largest_remainder
from .metrics import association_matrix, cramers_v, evaluate, frobenius_distance, kl_divergence, tae
from .pipeline import METHODS, RunConfig, load_config, run

__version__ = "0.1.0"

__all__ = [
    "METHODS", "RunConfig", "apply_rules", "association_matrix", "evaluate", "load_config", "run",
    "spec_from_schema", "AuxiliaryMatrix", "BetaMarginal", "ConditionalTable", "ConfigError", "ConstraintSet", "CopulaSpec",
    "CycleError", "DependencyGraph", "GensynError", "NumericalError", "Schema", "SyntheticPopulation",
    "TupleDistribution", "TupleSpace", "UnivariateTable", "Variable", "build_constraints", "build_graph",
    "cramers_v", "draw_component_probs", "dual_objective", "estimate_p2", "estimate_spec", "expand",
    "extend", "extend_independent", "fit_beta", "frobenius_distance", "fuse_priors", "kl_divergence",
    "largest_remainder", "load_schema", "match_marginals", "normalize_auxiliary", "order_variables",
    "read_d1", "read_d2", "read_d3", "run_chain", "seed_joint", "solve", "tae", "threshold",
    "tuple_space_size",
]
