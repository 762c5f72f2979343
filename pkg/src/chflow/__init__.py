"""Finite-volume solvers for two-phase flow with phase transition.

Two time-discrete models share a MAC grid and a logarithmic free energy:
a quasi-incompressible Navier-Stokes / Cahn-Hilliard system with
volume-averaged velocity (:mod:`chflow.model_agg`) and a quasi-stationary
Stokes / Cahn-Hilliard system with mass-averaged velocity and Navier-slip
walls (:mod:`chflow.model_qstokes`).
"""
from .grid import FaceField, Field, Grid, NavierSlip, NoSlip
from .linsolve import KrylovConfig, NewtonConfig
from .model_agg import StateAGG, initial_state_agg, step_agg
from .model_qstokes import StateQS, initial_state_qs, step_qstokes
from .params import Coefficient, ModelParams
from .potential import ConvexSplit, PotentialParams

__all__ = [
    "Coefficient", "ConvexSplit", "FaceField", "Field", "Grid", "KrylovConfig", "ModelParams", "NavierSlip",
    "NewtonConfig", "NoSlip", "PotentialParams", "StateAGG", "StateQS", "initial_state_agg",
    "initial_state_qs", "step_agg", "step_qstokes",
]
__version__ = "0.1.0"
