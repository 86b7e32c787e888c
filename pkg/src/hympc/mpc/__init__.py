"""Hybrid-cost MPC: cost terms, compiled/numpy solver kernels and the solve entry point."""
from .cost import cost_follow, cost_pass, gate_reference_embed, hybrid_cost, temporal_weight
from .solver import (
    CostWeights, MpcConfig, MpcRequest, MpcSolution, SolverConfig, SolverError, solve,
)

__all__ = [
    "CostWeights", "MpcConfig", "MpcRequest", "MpcSolution", "SolverConfig", "SolverError",
    "solve", "cost_follow", "cost_pass", "hybrid_cost", "gate_reference_embed",
    "temporal_weight",
]
