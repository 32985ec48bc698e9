"""Search-camera detector: pluggable interface plus the default synthetic model.

A detector turns a captured view into detections carrying a confidence and
per-axis localization variances, and reduces a view's detections to a single
likelihood scalar for particle weighting.  Anything with the same
``detect(view, seed) -> list[Detection]`` / ``likelihood(view, dets)``
surface plugs into the engine unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import DetectorConfig
from .galvo import View, image_to_galvo

LIKELIHOOD_FLOOR = 1e-3


@dataclass(frozen=True)
class Detection:
    theta_h: float        # refined mirror angles of the box center
    theta_v: float
    width_deg: float
    height_deg: float
    confidence: float
    var_h: float          # localization variance, degrees^2
    var_v: float
    class_name: str = "car"
    source_particle: int = -1
    object_id: int | None = None  # simulator truth tag; None for false positives


def _variances(cfg: DetectorConfig, occlusion: float, width_px: float,
               height_px: float, dist_norm: float) -> tuple[float, float]:
    """Per-axis variance: grows with occlusion and border distance, shrinks with size."""
    base = cfg.sigma_base_deg ** 2
    common = (1.0 + cfg.k_occ * occlusion) * (1.0 + cfg.k_ctr * dist_norm)
    var_h = base * common * (cfg.size_ref_px / max(width_px, 1.0))
    var_v = base * common * (cfg.size_ref_px / max(height_px, 1.0))
    return var_h, var_v


def detection_probability(cfg: DetectorConfig, occlusion: float, width_px: float,
                          height_px: float, dist_norm: float) -> float:
    size_factor = min(1.0, math.sqrt(width_px * height_px) / cfg.size_ref_px)
    center_factor = max(0.0, 1.0 - cfg.center_falloff * dist_norm)
    return cfg.base_recall * (1.0 - occlusion) * size_factor * center_factor


def detect(view: View, cfg: DetectorConfig, seed, alpha: float = 0.002,
           limit: float = 20.0) -> list[Detection]:
    """Run the synthetic detector on one view.

    Each visible object fires with probability
    base_recall * (1 - occlusion) * size_factor * center_factor and yields a
    box at its (noisy) center, already transformed into mirror angles.
    False positives arrive Poisson-distributed at fp_rate per view with
    confidence below fp_conf_cap.
    """
    rng = np.random.default_rng(seed)
    half_diag = 0.5 * math.hypot(view.width, view.height)
    out: list[Detection] = []
    for vis in view.visible:
        dist = math.hypot(vis.x_px - view.width / 2.0, vis.y_px - view.height / 2.0)
        dist_norm = dist / half_diag
        d = detection_probability(cfg, vis.occlusion, vis.width_px,
                                  vis.height_px, dist_norm)
        if rng.random() >= d:
            continue
        var_h, var_v = _variances(cfg, vis.occlusion, vis.width_px,
                                  vis.height_px, dist_norm)
        std_x = cfg.loc_noise_px + math.sqrt(var_h) / alpha * cfg.loc_noise_scale
        std_y = cfg.loc_noise_px + math.sqrt(var_v) / alpha * cfg.loc_noise_scale
        t_x = vis.x_px + (rng.normal(0.0, std_x) if std_x > 0 else 0.0)
        t_y = vis.y_px + (rng.normal(0.0, std_y) if std_y > 0 else 0.0)
        conf = d + (rng.normal(0.0, cfg.conf_noise) if cfg.conf_noise > 0 else 0.0)
        g_h, g_v, _ = image_to_galvo(view.theta_h, view.theta_v, t_x, t_y,
                                     alpha=alpha, width=view.width,
                                     height=view.height, limit=limit)
        out.append(Detection(
            theta_h=g_h, theta_v=g_v,
            width_deg=vis.width_px * alpha, height_deg=vis.height_px * alpha,
            confidence=min(max(conf, 0.0), 1.0),
            var_h=var_h, var_v=var_v, object_id=vis.object_id,
        ))
    if cfg.fp_rate > 0.0:
        for _ in range(int(rng.poisson(cfg.fp_rate))):
            t_x = rng.uniform(0.0, view.width - 1.0)
            t_y = rng.uniform(0.0, view.height - 1.0)
            size = rng.uniform(10.0, 40.0)
            dist_norm = math.hypot(t_x - view.width / 2.0,
                                   t_y - view.height / 2.0) / half_diag
            var_h, var_v = _variances(cfg, 0.0, size, size, dist_norm)
            g_h, g_v, _ = image_to_galvo(view.theta_h, view.theta_v, t_x, t_y,
                                         alpha=alpha, width=view.width,
                                         height=view.height, limit=limit)
            out.append(Detection(
                theta_h=g_h, theta_v=g_v,
                width_deg=size * alpha, height_deg=size * alpha,
                confidence=rng.uniform(0.0, cfg.fp_conf_cap),
                var_h=var_h, var_v=var_v, object_id=None,
            ))
    return out


def likelihood(view: View, detections, floor: float = LIKELIHOOD_FLOOR) -> float:
    """View likelihood: best detection confidence, floored so misses survive."""
    if not detections:
        return floor
    return max(max(d.confidence for d in detections), floor)


class SyntheticDetector:
    """Default detector bound to a config; satisfies the engine's interface."""

    def __init__(self, cfg: DetectorConfig, alpha: float = 0.002,
                 limit: float = 20.0, floor: float = LIKELIHOOD_FLOOR):
        self.cfg = cfg
        self.alpha = alpha
        self.limit = limit
        self.floor = floor

    def detect(self, view: View, seed) -> list[Detection]:
        return detect(view, self.cfg, seed, alpha=self.alpha, limit=self.limit)

    def likelihood(self, view: View, detections) -> float:
        return likelihood(view, detections, floor=self.floor)


def write_detections_csv(path: str, rows) -> None:
    """Detection log CSV: stage, particle, theta_h, theta_v, p, var_h, var_v."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,particle,theta_h,theta_v,p,var_h,var_v\n")
        for stage, particle, det in rows:
            fh.write(f"{stage},{particle},{det.theta_h:.6f},{det.theta_v:.6f},"
                     f"{det.confidence:.6f},{det.var_h:.6e},{det.var_v:.6e}\n")
