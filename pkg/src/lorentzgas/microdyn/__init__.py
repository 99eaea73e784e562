"""Exact event-driven microscopic dynamics for spherical (Lorentz) and slab
(kicked) scatterer geometries, plus macroscopic rescaling, the launch-measure
mean free path estimate, and the renormalized point process."""

from .engine import (CollisionEvent, Engine, InvalidState, ParticleState,
                     TrajectoryRecord, first_collision, macroscopic_rescale,
                     rescale_paths, run_trajectory, sample_initial_state)
from .batch import run_batch, first_hit_batch
from .kicked import KickedConfig, kicked_run_batch, kicked_first_hits
from .launch import mean_free_path_check, kicked_mean_collision_time_check
from .renorm import ThetaView, renormalized_process

__all__ = [
    "CollisionEvent", "Engine", "InvalidState", "ParticleState",
    "TrajectoryRecord", "first_collision", "macroscopic_rescale",
    "rescale_paths", "run_trajectory", "sample_initial_state",
    "run_batch", "first_hit_batch",
    "KickedConfig", "kicked_run_batch", "kicked_first_hits",
    "mean_free_path_check", "kicked_mean_collision_time_check",
    "ThetaView", "renormalized_process",
]
