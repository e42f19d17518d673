"""Simulation and checking tools for an A/B infection process of random walks on Z^d."""

from ._backend import BACKEND, Engine
from .lattice import Site, as_site, norm_inf, norm_l2
from .rng import RngStream
from .sim import SimConfig, SimState, init_simulation, run_until, step_event
from .walk import Box, FreeField, WalkParams, evolve_free_system, sample_initial_field

__all__ = [
    "BACKEND", "Engine", "Site", "as_site", "norm_inf", "norm_l2", "RngStream",
    "SimConfig", "SimState", "init_simulation", "run_until", "step_event",
    "Box", "FreeField", "WalkParams", "evolve_free_system", "sample_initial_field",
]
