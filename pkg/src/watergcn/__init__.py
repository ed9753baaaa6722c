"""Nodal pressure reconstruction on water networks with Chebyshev graph convolution."""

from .network import (
    DisconnectedGraph, DuplicateName, FixedHeadNode, Junction, Network,
    NonPositiveAttribute, Pipe, Pump, UnknownNodeReference, Valve,
    adjacency_structure, graph_diameter, network_summary, parse_inp,
)
from .spectral import (
    ScaledLaplacian, WeightScheme, build_adjacency, cheb_apply, edge_weight_hw,
    laplacian_for, scaled_laplacian,
)
from .hydraulics import (
    BoundaryConditions, HydraulicState, SolverOptions, batch_solve,
    pipe_headloss, pump_headgain, solve_steady_state,
)
from .scenegen import (
    Scaler, SceneConfig, SceneSet, build_sceneset, load_sceneset,
    sample_boundaries, save_sceneset, scale_in, scale_out, scale_out_inverse,
)
from .chebnet import (
    AdamState, ChebLayer, ChebModel, TrainConfig, adam_step, build_model,
    layer_forward, load_checkpoint, mse_all_nodes, model_forward,
    save_checkpoint, sigmoid, silu, train, xavier_init,
)
from .evaluation import (
    EvalReport, ObservationMask, TaylorStats, assemble_input, ecdf, evaluate,
    generate_mask, naive_predict, relative_error, taylor_stats,
)
from .harness import (
    ExperimentPlan, SearchSpace, default_topology, random_search,
    run_experiment,
)

__version__ = "0.1.0"
