"""Particle set over mirror-angle space: sampling, weighting, pruning.

A particle is a candidate gaze point with an importance weight.  The initial
set is drawn from the probability map (uniform over each region's remainder,
uniform over each sub-region disc); later stages draw from a Gaussian mixture
built around the retained weighted particles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .galvo import clamp_angle
from .ppm import Ppm
from .scene import SceneMap


@dataclass
class Particle:
    theta_h: float
    theta_v: float
    weight: float
    stage: int = 0
    sigma: float = 1.0  # per-particle sampling std, degrees


@dataclass(frozen=True)
class MixtureComponent:
    mean_h: float
    mean_v: float
    std: float
    weight: float


@dataclass(frozen=True)
class ProposalMixture:
    components: tuple[MixtureComponent, ...]
    stage: int = 0


def initial_sample(ppm: Ppm, scene: SceneMap, seed,
                   sigma0: float = 1.0, limit: float = 20.0) -> list[Particle]:
    """Draw the stage-0 particle set from the probability map.

    Remainder counts sample uniformly over their region's pixels; sub-region
    counts sample uniformly over the detection disc clipped at the region
    border.  All weights start at 1/N.
    """
    rng = np.random.default_rng(seed)
    n = ppm.total_particles
    w0 = 1.0 / n
    particles: list[Particle] = []
    for rid in sorted(ppm.remainder_counts):
        count = ppm.remainder_counts[rid]
        if count <= 0:
            continue
        for x, y in _uniform_in_region(rng, ppm.label_grid,
                                       ppm.region_bboxes[rid], rid, count):
            th, tv = scene.pano_to_galvo(x, y)
            particles.append(Particle(clamp_angle(th, limit), clamp_angle(tv, limit),
                                      w0, stage=0, sigma=sigma0))
    for sub in ppm.sub_regions:
        if sub.count <= 0:
            continue
        for x, y in _uniform_in_disc(rng, ppm.label_grid, sub.center,
                                     sub.radius_px, sub.region_id, sub.count):
            th, tv = scene.pano_to_galvo(x, y)
            particles.append(Particle(clamp_angle(th, limit), clamp_angle(tv, limit),
                                      w0, stage=0, sigma=sigma0))
    return particles


def _uniform_in_region(rng, grid, bbox, region_id, count, max_rounds=200):
    x0, y0, x1, y1 = bbox
    if x1 <= x0 or y1 <= y0:
        return
    got = 0
    for _ in range(max_rounds):
        need = count - got
        if need <= 0:
            return
        batch = max(need * 2, 16)
        xs = rng.uniform(x0, x1, size=batch)
        ys = rng.uniform(y0, y1, size=batch)
        ok = grid[ys.astype(np.intp), xs.astype(np.intp)] == region_id
        for i in np.flatnonzero(ok)[:need]:
            yield (float(xs[i]), float(ys[i]))
            got += 1
    if got < count:
        raise RuntimeError(f"region {region_id}: rejection sampling starved "
                           f"({got}/{count} placed)")


def _uniform_in_disc(rng, grid, center, radius, region_id, count, max_rounds=200):
    h, w = grid.shape
    cx, cy = center
    got = 0
    for _ in range(max_rounds):
        need = count - got
        if need <= 0:
            return
        batch = max(need * 2, 16)
        r = radius * np.sqrt(rng.random(batch))
        phi = rng.uniform(0.0, 2.0 * math.pi, size=batch)
        xs = np.clip(cx + r * np.cos(phi), 0.0, w - 1.0)
        ys = np.clip(cy + r * np.sin(phi), 0.0, h - 1.0)
        ok = grid[ys.astype(np.intp), xs.astype(np.intp)] == region_id
        for i in np.flatnonzero(ok)[:need]:
            yield (float(xs[i]), float(ys[i]))
            got += 1
    # disc barely intersects its region: fall back to the detection center
    for _ in range(count - got):
        yield (float(min(max(cx, 0.0), w - 1.0)), float(min(max(cy, 0.0), h - 1.0)))


def build_proposal(particles: list[Particle]) -> ProposalMixture:
    """Gaussian mixture with one component per retained particle.

    Component mean is the particle's gaze point, std its sampling sigma, and
    mix weight its normalized importance weight.
    """
    total = sum(p.weight for p in particles)
    if not particles or total <= 0.0:
        raise ValueError("degenerate particle set: no positive weights")
    comps = tuple(MixtureComponent(p.theta_h, p.theta_v, p.sigma, p.weight / total)
                  for p in particles)
    stage = max(p.stage for p in particles)
    return ProposalMixture(components=comps, stage=stage)


def sample_next(mixture: ProposalMixture, count: int, seed,
                limit: float = 20.0) -> list[Particle]:
    """Draw the next stage's particles from the proposal mixture.

    Component choice follows the mix weights, then an isotropic Gaussian
    around the component mean; angles clamp to the mirror range.  Children
    inherit the component's weight (their previous-stage weight) and std.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    comps = mixture.components
    weights = np.array([c.weight for c in comps])
    weights = weights / weights.sum()
    picks = rng.choice(len(comps), size=count, p=weights)
    noise = rng.standard_normal((count, 2))
    out = []
    for i in range(count):
        c = comps[int(picks[i])]
        th = clamp_angle(c.mean_h + noise[i, 0] * c.std, limit)
        tv = clamp_angle(c.mean_v + noise[i, 1] * c.std, limit)
        out.append(Particle(th, tv, c.weight, stage=mixture.stage + 1, sigma=c.std))
    return out


def update_weights(particles: list[Particle], likelihoods) -> list[Particle]:
    """Multiply each weight by its view likelihood; weights stay unnormalized."""
    if len(particles) != len(likelihoods):
        raise ValueError(f"{len(particles)} particles but {len(likelihoods)} likelihoods")
    for p, lk in zip(particles, likelihoods):
        p.weight *= lk
    return particles


def normalize_weights(particles: list[Particle]) -> list[Particle]:
    total = sum(p.weight for p in particles)
    if total <= 0.0:
        raise ValueError("particle degeneracy: all weights zero")
    for p in particles:
        p.weight /= total
    return particles


def prune_redundant(particles: list[Particle], fov_deg: float,
                    overlap_frac: float = 0.5) -> list[Particle]:
    """Drop particles whose gaze lies within overlap_frac * fov of a kept one.

    Greedy by descending weight, so the heaviest representative of each
    cluster survives.  Output preserves the input order and is never empty.
    """
    n = len(particles)
    if n <= 1:
        return list(particles)
    thr = overlap_frac * fov_deg
    pos = np.array([[p.theta_h, p.theta_v] for p in particles])
    weights = np.array([p.weight for p in particles])
    order = np.lexsort((np.arange(n), -weights))
    alive = np.ones(n, dtype=bool)
    kept = np.zeros(n, dtype=bool)
    for i in order:
        if not alive[i]:
            continue
        kept[i] = True
        d = pos - pos[i]
        alive &= (d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]) >= thr * thr
    return [p for p, k in zip(particles, kept) if k]


def write_particles_csv(path: str, particles: list[Particle]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,theta_h,theta_v,weight,sigma\n")
        for p in particles:
            fh.write(f"{p.stage},{p.theta_h:.6f},{p.theta_v:.6f},"
                     f"{p.weight:.9e},{p.sigma:.6f}\n")
