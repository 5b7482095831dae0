"""Particle-filter localisation of an underwater vehicle in a block world,
with interchangeable geometric (range scan) and semantic (object list)
measurement models."""

from .filter import (
    MotionCommand,
    Particle,
    ParticleSet,
    effective_sample_size,
    estimate,
    init_uniform,
    predict,
    resample_systematic,
    step,
    weight_update,
)
from .likelihood import (
    SemanticLikelihoodParams,
    geometric_likelihood,
    make_geometric_model,
    make_semantic_model,
    match_objects,
    semantic_likelihood,
)
from .sensing import (
    RangeScan,
    SemanticObservation,
    SensorConfig,
    expected_range_scan,
    expected_semantic_obs,
    simulate_range_scan,
    simulate_semantic_obs,
)
from .world import MISS, MapObject, Pose2D, WorldMap, load_map, ray_cast, visible_objects

__version__ = "0.1.0"
