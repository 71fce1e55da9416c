from .prox import clip_box, project_simplex, prox_l1_box
from .composite import CompositeProblem, PerturbationTuple, SolveResult, SolverConfig, solve

__all__ = [
    "clip_box", "project_simplex", "prox_l1_box",
    "CompositeProblem", "PerturbationTuple", "SolveResult", "SolverConfig", "solve",
]
