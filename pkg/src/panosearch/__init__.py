"""Probability-map-guided wide-area multi-object search simulator."""

from .config import (ConfigError, DetectorConfig, EngineConfig,
                     ExperimentConfig, ObjectGroupSpec, RegionSpec,
                     ScenarioConfig, SceneConfig, SegNoiseConfig,
                     default_scenario, load_scenario)
from .detector import Detection, SyntheticDetector, detect, likelihood
from .experiment import (METHODS, TrialResult, ablation, deviation_study,
                         proportion_sweep, recall_curve, run_trial)
from .galvo import GalvoState, View, capture_view, image_to_galvo, plan_scan
from .particles import (Particle, ProposalMixture, build_proposal,
                        initial_sample, normalize_weights, prune_redundant,
                        sample_next, update_weights)
from .ppm import (PanoDetection, Ppm, build_ppm, refine_allocation,
                  region_sampling_prob, segment_panorama)
from .refinement import SearchWindow, iou, nms_merge, overlap_prob, variance_vote
from .scene import (GtObject, Region, SceneMap, build_scene, region_at,
                    step_motion)

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "DetectorConfig", "EngineConfig", "ExperimentConfig",
    "ObjectGroupSpec", "RegionSpec", "ScenarioConfig", "SceneConfig",
    "SegNoiseConfig", "default_scenario", "load_scenario",
    "Detection", "SyntheticDetector", "detect", "likelihood",
    "METHODS", "TrialResult", "ablation", "deviation_study",
    "proportion_sweep", "recall_curve", "run_trial",
    "GalvoState", "View", "capture_view", "image_to_galvo", "plan_scan",
    "Particle", "ProposalMixture", "build_proposal", "initial_sample",
    "normalize_weights", "prune_redundant", "sample_next", "update_weights",
    "PanoDetection", "Ppm", "build_ppm", "refine_allocation",
    "region_sampling_prob", "segment_panorama",
    "SearchWindow", "iou", "nms_merge", "overlap_prob", "variance_vote",
    "GtObject", "Region", "SceneMap", "build_scene", "region_at", "step_motion",
]
