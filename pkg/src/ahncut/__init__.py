"""Graph-cut inference for associative hierarchical networks.

An associative hierarchical network is a stack of label fields: the base
level holds one label per pixel, every level above holds optional
auxiliary variables that may also take the extra label ``Free``.  The
package evaluates such energies, reduces the move subproblems to min-cut,
and provides exhaustive oracles and a small benchmark harness.
"""
from .energy import (
    HierarchicalNetwork,
    Labeling,
    Level,
    NetworkBuilder,
    RobustPnClique,
    check_eq24_form,
    check_hierarchical_consistency,
    check_metric,
    clique_to_pairwise,
    eval_higher_order,
    eval_joint,
    joint_energies,
    make_level,
    reparameterize_link,
    robust_pn_value,
)
from .errors import (
    AHNError,
    InfeasibleError,
    InvalidLabeling,
    NonSubmodularError,
    OracleInfeasible,
    ParameterError,
    ParseError,
    StructureError,
)
from .mincut import FlowGraph, QpbProblem, ishikawa_minimize, max_flow, minimize_chain, minimize_qpb
from .moves import (
    ALGORITHMS,
    MoveResult,
    MoveState,
    alpha_expansion_step,
    alphabeta_swap_step,
    icm_step,
    make_state,
    range_expansion_step,
    range_swap_step,
    solve,
)
from .netfile import format_labeling, format_network, parse_labeling, parse_network, read_network, write_network
from .oracle import brute_force_map, move_space_minimum
from .bench import ComparisonReport, GeneratorSpec, compare, generate

__version__ = "0.1.0"
