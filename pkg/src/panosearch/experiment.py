"""Search trials, baselines, and the comparative studies.

A trial spends a total view budget over one or more scan passes.  The first
pass places particles from the configured prior (probability map, region
probabilities, uniform, or a fixed grid); subsequent passes resample from the
weighted proposal mixture.  Detections from each pass merge into search
windows which are matched against ground truth for recall, average precision,
and gaze-deviation metrics.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .config import (ConfigError, DetectorPreset, ScenarioConfig, SceneConfig,
                     ObjectGroupSpec, RegionSpec, scenario_copy)
from .detector import Detection, SyntheticDetector
from .galvo import GalvoState, capture_view, plan_scan
from .particles import (Particle, build_proposal, initial_sample,
                        normalize_weights, prune_redundant, sample_next,
                        update_weights)
from .ppm import allocate_ppm, segment_panorama
from .refinement import SearchWindow, nms_merge
from .scene import SceneMap, build_scene, step_motion


@dataclass(frozen=True)
class MethodSpec:
    init: str                 # ppm | region | uniform | grid
    bootstrap: bool           # count panorama-scale detections as initial finds
    voting: bool              # variance voting inside NMS
    adaptive_sigma: bool      # per-particle sigma from detector uncertainty
    resample: str             # proposal | uniform | none


METHODS: dict[str, MethodSpec] = {
    "ppm_ps": MethodSpec("ppm", True, True, True, "proposal"),
    "ppm_only": MethodSpec("ppm", True, False, False, "none"),
    "rpm": MethodSpec("region", False, False, False, "proposal"),
    "mpf": MethodSpec("uniform", False, False, False, "uniform"),
    "uniform": MethodSpec("grid", False, False, False, "none"),
}

# the ablation's "prior disabled" arm: same searching machinery, no map
NO_PPM_SPEC = MethodSpec("uniform", False, True, True, "proposal")

# the deviation study's no-voting arm: full pipeline, voting alone toggled off
NO_VOTE_SPEC = MethodSpec("ppm", True, False, True, "proposal")


@dataclass
class FoundObject:
    stage: int          # 0 = panorama bootstrap, k >= 1 = scan pass k
    err_x_px: float     # gaze offset from the true center at fixation, view px
    err_y_px: float
    post_var: float     # per-axis-mean variance of the estimate, deg^2
    confidence: float = 0.0  # estimates only improve at >= this confidence


@dataclass
class TrialResult:
    method: str
    seed: int
    budget: int
    recall: float
    ap: float
    found: dict[int, FoundObject]
    n_objects: int
    pre_vars: dict[int, float]
    elapsed_sim_ms: float
    wall_ms: float
    views: int
    moves: int
    vacuous: bool = False


@dataclass
class TrialTrace:
    """Optional per-trial logs: scan order, particles, detections, windows."""

    scan: list = field(default_factory=list)
    particles: list = field(default_factory=list)
    detections: list = field(default_factory=list)
    windows: list = field(default_factory=list)


def _split_budget(budget: int, iters: int, init_frac: float) -> list[int]:
    """Total budget over passes: init_frac up front, the rest spread evenly."""
    if budget <= 0:
        return []
    if iters <= 1:
        return [budget]
    n0 = int(round(budget * init_frac))
    n0 = min(max(n0, 1), budget)
    rest = budget - n0
    rounds = [n0]
    for i in range(iters - 1):
        share = rest // (iters - 1)
        if i < rest % (iters - 1):
            share += 1
        rounds.append(share)
    return rounds


def _pano_extent_deg(scene: SceneMap) -> tuple[float, float]:
    return (scene.width * scene.deg_per_px / 2.0,
            scene.height * scene.deg_per_px / 2.0)


def _uniform_particles(scene: SceneMap, count: int, rng, sigma0: float,
                       limit: float) -> list[Particle]:
    half_h, half_v = _pano_extent_deg(scene)
    half_h, half_v = min(half_h, limit), min(half_v, limit)
    w0 = 1.0 / count
    th = rng.uniform(-half_h, half_h, size=count)
    tv = rng.uniform(-half_v, half_v, size=count)
    return [Particle(float(th[i]), float(tv[i]), w0, stage=0, sigma=sigma0)
            for i in range(count)]


def _grid_particles(scene: SceneMap, count: int, sigma0: float,
                    limit: float) -> list[Particle]:
    half_h, half_v = _pano_extent_deg(scene)
    half_h, half_v = min(half_h, limit), min(half_v, limit)
    aspect = half_h / half_v
    nx = max(1, int(math.ceil(math.sqrt(count * aspect))))
    ny = max(1, int(math.ceil(count / nx)))
    xs = np.linspace(-half_h, half_h, nx + 2)[1:-1]
    ys = np.linspace(-half_v, half_v, ny + 2)[1:-1]
    w0 = 1.0 / count
    out = []
    for y in ys:
        for x in xs:
            if len(out) == count:
                return out
            out.append(Particle(float(x), float(y), w0, stage=0, sigma=sigma0))
    while len(out) < count:  # ragged last row
        out.append(Particle(0.0, 0.0, w0, stage=0, sigma=sigma0))
    return out


def _object_angular_box(scene: SceneMap, obj) -> tuple[float, float, float, float]:
    """(center_h, center_v, width_deg, height_deg) of a ground-truth object."""
    c_h, c_v = scene.pano_to_galvo(*obj.center)
    return c_h, c_v, obj.size[0] * scene.deg_per_px, obj.size[1] * scene.deg_per_px


def _match_object(scene: SceneMap, center_h: float, center_v: float):
    """Object whose angular half-extent box contains the point, closest first."""
    best = None
    best_score = None
    for obj in scene.objects:
        o_h, o_v, w_deg, h_deg = _object_angular_box(scene, obj)
        dx, dy = center_h - o_h, center_v - o_v
        if abs(dx) <= w_deg / 2.0 and abs(dy) <= h_deg / 2.0:
            score = (dx / w_deg) ** 2 + (dy / h_deg) ** 2
            if best_score is None or score < best_score:
                best, best_score = obj, score
    return best


def _box_iou(ah, av, aw, ahh, bh, bv, bw, bhh) -> float:
    iw = min(ah + aw / 2, bh + bw / 2) - max(ah - aw / 2, bh - bw / 2)
    ih = min(av + ahh / 2, bv + bhh / 2) - max(av - ahh / 2, bv - bhh / 2)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ahh + bw * bhh - inter)


def _ap_match(scene: SceneMap, center_h, center_v, width_deg, height_deg,
              iou_thr: float = 0.5):
    best, best_iou = None, iou_thr
    for obj in scene.objects:
        o_h, o_v, w_deg, h_deg = _object_angular_box(scene, obj)
        v = _box_iou(center_h, center_v, width_deg, height_deg,
                     o_h, o_v, w_deg, h_deg)
        if v >= best_iou:
            best, best_iou = obj.id, v
    return best


def average_precision_11pt(records, n_gt: int) -> float:
    """11-point interpolated AP over (confidence, matched-object-or-None) records."""
    if n_gt <= 0:
        return 1.0
    ranked = sorted(range(len(records)), key=lambda i: (-records[i][0], i))
    claimed: set[int] = set()
    tps = []
    for i in ranked:
        obj = records[i][1]
        if obj is not None and obj not in claimed:
            claimed.add(obj)
            tps.append(1)
        else:
            tps.append(0)
    precisions, recalls = [], []
    tp = 0
    for k, hit in enumerate(tps, start=1):
        tp += hit
        precisions.append(tp / k)
        recalls.append(tp / n_gt)
    ap = 0.0
    for level in range(11):
        r = level / 10.0
        best = max((p for p, rc in zip(precisions, recalls) if rc >= r), default=0.0)
        ap += best
    return ap / 11.0


def _window_var(window: SearchWindow, radius_mode: str) -> float:
    r_h, r_v = window.radius_h, window.radius_v
    if radius_mode == "stddev":
        r_h, r_v = r_h * r_h, r_v * r_v
    return (r_h + r_v) / 2.0


def run_trial(scene: SceneMap, method: str, budget: int, iters: int, seed,
              cfg: ScenarioConfig, detector_cfg=None) -> TrialResult:
    """Run one search trial of the named method on a prebuilt world."""
    spec = METHODS.get(method)
    if spec is None:
        raise ConfigError(f"unknown method {method!r}; expected one of "
                          f"{sorted(METHODS)}")
    return run_trial_spec(scene, method, spec, budget, iters, seed, cfg,
                          detector_cfg=detector_cfg)


def run_trial_spec(scene: SceneMap, name: str, spec: MethodSpec, budget: int,
                   iters: int, seed, cfg: ScenarioConfig,
                   detector_cfg=None, seed_label: int | None = None,
                   trace: TrialTrace | None = None) -> TrialResult:
    t_start = time.perf_counter()
    eng = cfg.engine
    det_cfg = detector_cfg if detector_cfg is not None else cfg.detector
    target = cfg.experiment.target
    rng = np.random.default_rng(seed)
    limit = eng.galvo_limit_deg
    detector = SyntheticDetector(det_cfg, alpha=eng.alpha, limit=limit,
                                 floor=eng.likelihood_floor)
    state = GalvoState(0.0, 0.0, step_response_ms=eng.step_response_ms)

    n_objects = len(scene.objects)
    found: dict[int, FoundObject] = {}
    pre_vars: dict[int, float] = {}
    ap_records: list[tuple[float, int | None]] = []
    views = moves = 0

    rounds = _split_budget(budget, 1 if spec.resample == "none" else iters,
                           eng.init_frac)

    grid = dets_pano = None
    if spec.init in ("ppm", "region") or spec.bootstrap:
        grid, dets_pano = segment_panorama(scene, cfg.noise, rng)
        if spec.init == "region":
            dets_pano_alloc = []
        else:
            dets_pano_alloc = dets_pano

    if spec.bootstrap and dets_pano:
        dpp = scene.deg_per_px
        for det in dets_pano:
            c_h, c_v = scene.pano_to_galvo(*det.center)
            obj = _match_object(scene, c_h, c_v)
            prior_var = (eng.subregion_scale * det.sigma_o * dpp) ** 2
            if obj is not None:
                pre_vars.setdefault(obj.id, prior_var)
                if obj.id not in found:
                    o_h, o_v, _, _ = _object_angular_box(scene, obj)
                    found[obj.id] = FoundObject(
                        stage=0,
                        err_x_px=(c_h - o_h) / eng.alpha,
                        err_y_px=(c_v - o_v) / eng.alpha,
                        post_var=prior_var, confidence=det.confidence)
            src = scene.objects[det.object_id]
            ap_records.append((det.confidence, _ap_match(
                scene, c_h, c_v, src.size[0] * dpp, src.size[1] * dpp)))

    proposal = None
    particles: list[Particle] = []
    last_round = len(rounds) - 1
    for k, n_k in enumerate(rounds):
        if n_k <= 0:
            continue
        if k > 0:
            scene = step_motion(scene, 1)
        stage = k + 1

        if k == 0 or spec.resample != "proposal" or proposal is None:
            if spec.init in ("ppm", "region"):
                ppm = allocate_ppm(scene, grid, dets_pano_alloc, target, n_k,
                                   r_scale=eng.subregion_scale)
                particles = initial_sample(ppm, scene, rng,
                                           sigma0=eng.sigma0_deg, limit=limit)
            elif spec.init == "grid":
                particles = _grid_particles(scene, n_k, eng.sigma0_deg, limit)
            else:
                particles = _uniform_particles(scene, n_k, rng,
                                               eng.sigma0_deg, limit)
        else:
            particles = sample_next(proposal, n_k, rng, limit=limit)

        order, pass_ms = plan_scan(state, [(p.theta_h, p.theta_v) for p in particles],
                                   dwell_ms=eng.dwell_ms)
        elapsed_before = state.elapsed_ms
        state.elapsed_ms += pass_ms
        last = particles[order[-1]]
        state.theta_h, state.theta_v = last.theta_h, last.theta_v
        views += n_k
        moves += n_k
        if trace is not None:
            trace.particles.extend(
                (p.stage, p.theta_h, p.theta_v, p.weight, p.sigma)
                for p in particles)

        likes = [eng.likelihood_floor] * n_k
        round_dets: list[Detection] = []
        best_for: list[Detection | None] = [None] * n_k
        for seq, idx in enumerate(order):
            p = particles[idx]
            view = capture_view(scene, p.theta_h, p.theta_v,
                                width=eng.view_w, height=eng.view_h,
                                alpha=eng.alpha, magnification=eng.magnification)
            dets = detector.detect(view, rng)
            likes[idx] = detector.likelihood(view, dets)
            if trace is not None:
                trace.scan.append((
                    len(trace.scan), p.theta_h, p.theta_v,
                    elapsed_before + (seq + 1) * (eng.step_response_ms + eng.dwell_ms),
                    len(view.visible)))
            if dets:
                best = None
                for d in dets:
                    tagged = replace(d, source_particle=idx)
                    round_dets.append(tagged)
                    if trace is not None:
                        trace.detections.append((stage, idx, tagged))
                    if d.object_id is not None:
                        pre_vars.setdefault(d.object_id, (d.var_h + d.var_v) / 2.0)
                    if best is None or tagged.confidence > best.confidence:
                        best = tagged
                best_for[idx] = best
                if spec.adaptive_sigma:
                    sigma = math.sqrt((best.var_h + best.var_v) / 2.0)
                    p.sigma = min(max(sigma, eng.sigma_min_deg), eng.sigma_max_deg)

        windows = nms_merge(round_dets, iou_keep=eng.iou_keep,
                            sigma_t=eng.sigma_t, vote=spec.voting,
                            limit=limit, radius_mode=eng.radius_mode)
        if trace is not None:
            trace.windows.extend((stage, wi, w) for wi, w in enumerate(windows))
        # windows arrive confidence-ranked: the first match per object wins
        # this pass, and an existing estimate only yields to a window at
        # least as confident as the one that produced it
        claimed_now: set[int] = set()
        for w in windows:
            obj = _match_object(scene, w.center_h, w.center_v)
            if obj is None or obj.id in claimed_now:
                continue
            claimed_now.add(obj.id)
            old = found.get(obj.id)
            if old is not None and w.confidence < old.confidence:
                continue
            o_h, o_v, _, _ = _object_angular_box(scene, obj)
            found[obj.id] = FoundObject(
                stage=old.stage if old is not None else stage,
                err_x_px=(w.center_h - o_h) / eng.alpha,
                err_y_px=(w.center_v - o_v) / eng.alpha,
                post_var=_window_var(w, eng.radius_mode),
                confidence=w.confidence)
        if k == last_round:
            for w in windows:
                ap_records.append((w.confidence, _ap_match(
                    scene, w.center_h, w.center_v, w.width_deg, w.height_deg)))

        if spec.resample == "proposal" and k < last_round:
            # coordinate refinement: a detecting particle re-centers on the
            # search window its best detection merged into, so the next pass
            # gazes at the refined coordinates instead of the old offset
            window_center: dict[int, tuple[float, float]] = {}
            for w in windows:
                for m in w.members:
                    window_center[id(m)] = (w.center_h, w.center_v)
            for idx, best in enumerate(best_for):
                if best is not None:
                    c_h, c_v = window_center.get(id(best),
                                                 (best.theta_h, best.theta_v))
                    particles[idx].theta_h = c_h
                    particles[idx].theta_v = c_v
            update_weights(particles, likes)
            try:
                normalize_weights(particles)
            except ValueError:
                proposal = None  # degenerate set: reseed from the prior next pass
                continue
            particles = prune_redundant(particles, eng.fov_deg,
                                        overlap_frac=eng.overlap_frac)
            normalize_weights(particles)
            proposal = build_proposal(particles)

    elapsed = moves * eng.step_response_ms + views * eng.dwell_ms
    vacuous = n_objects == 0
    recall = 1.0 if vacuous else len(found) / n_objects
    ap = average_precision_11pt(ap_records, n_objects)
    wall_ms = (time.perf_counter() - t_start) * 1e3
    if seed_label is None:
        seed_label = _seed_scalar(seed)
    return TrialResult(method=name, seed=seed_label, budget=budget,
                       recall=recall, ap=ap, found=found, n_objects=n_objects,
                       pre_vars=pre_vars, elapsed_sim_ms=elapsed,
                       wall_ms=wall_ms, views=views, moves=moves,
                       vacuous=vacuous)


def _seed_scalar(seed) -> int:
    if isinstance(seed, (list, tuple)):
        return int(seed[-1]) if seed else 0
    try:
        return int(seed)
    except (TypeError, ValueError):
        return -1


# ---------------------------------------------------------------------------
# Default scene families
# ---------------------------------------------------------------------------

_VARIANTS = [(0.18, 380), (0.20, 420), (0.22, 460), (0.24, 400), (0.26, 440)]


def default_scene_variants(base: SceneConfig, count: int) -> list[SceneConfig]:
    """Deterministic family of scene configs varying the high-prior region."""
    out = []
    for i in range(count):
        frac, y = _VARIANTS[i % len(_VARIANTS)]
        cfg = scenario_copy(ScenarioConfig(scene=base)).scene
        rect_h = 360
        rect_w = int(round(frac * cfg.width * cfg.height / rect_h))
        rect_w = min(rect_w, cfg.width)
        x = (cfg.width - rect_w) // 2 + 20 * (i // len(_VARIANTS))
        x = min(x, cfg.width - rect_w)
        if cfg.regions:
            cfg.regions[0] = replace(cfg.regions[0], rect=(x, y, rect_w, rect_h))
        out.append(cfg)
    return out


def proportion_scene(base: SceneConfig, proportion: float) -> SceneConfig:
    """Scene whose high-prior region covers the given panorama fraction."""
    cfg = scenario_copy(ScenarioConfig(scene=base)).scene
    rect_w = max(1, min(cfg.width, int(round(proportion * cfg.width))))
    label = cfg.regions[0].label if cfg.regions else "road"
    cfg.regions = [RegionSpec(label=label, rect=(0, 0, rect_w, cfg.height))]
    # at full proportion the background vanishes, so the outlier moves inside
    outlier_home = cfg.background_label if rect_w < cfg.width else label
    # rect-pinned groups first: a fixed seed then yields the same relative
    # placements at every proportion, pairing the sweep's worlds
    cfg.groups = [
        ObjectGroupSpec(class_name="car", count=12, size=(48.0, 28.0),
                        speed=2.0, region_label=label),
        ObjectGroupSpec(class_name="car", count=2, size=(120.0, 60.0),
                        speed=2.0, region_label=label),
        ObjectGroupSpec(class_name="car", count=1, size=(120.0, 60.0),
                        speed=2.0, region_label=outlier_home),
    ]
    return cfg


def deviation_scene(base: SceneConfig, mover_speed: float = 6.0) -> SceneConfig:
    """Default scene split into static targets plus three fast movers."""
    cfg = scenario_copy(ScenarioConfig(scene=base)).scene
    cfg.groups = [
        ObjectGroupSpec(class_name="car", count=2, size=(120.0, 60.0),
                        speed=0.0, region_label="road"),
        ObjectGroupSpec(class_name="car", count=1, size=(120.0, 60.0),
                        speed=0.0, region_label=cfg.background_label),
        ObjectGroupSpec(class_name="car", count=3, size=(48.0, 28.0),
                        speed=0.0, region_label="road"),
        ObjectGroupSpec(class_name="car", count=3, size=(48.0, 28.0),
                        speed=mover_speed, region_label="road"),
    ]
    return cfg


# ---------------------------------------------------------------------------
# Studies
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialJob:
    scene_cfg: SceneConfig
    scene_seed: tuple[int, ...]
    method: str
    budget: int
    iters: int
    trial_seed: tuple[int, ...]
    cfg: ScenarioConfig
    spec: MethodSpec | None = None
    detector_cfg: object = None
    tag: tuple = ()


def _run_job(job: TrialJob) -> tuple[tuple, TrialResult]:
    scene = _world_cache(job.scene_cfg, job.scene_seed)
    spec = job.spec if job.spec is not None else METHODS[job.method]
    result = run_trial_spec(scene, job.method, spec, job.budget, job.iters,
                            list(job.trial_seed), job.cfg,
                            detector_cfg=job.detector_cfg,
                            seed_label=int(job.tag[-1]) if job.tag else None)
    return job.tag, result


_WORLDS: dict = {}


def _scene_key(cfg: SceneConfig) -> tuple:
    return (cfg.width, cfg.height, cfg.span_deg, cfg.background_label,
            cfg.pano_detect_threshold,
            tuple((r.label, r.rect) for r in cfg.regions),
            tuple((g.class_name, g.count, g.size, g.speed, g.occlusion,
                   g.region_label) for g in cfg.groups),
            tuple(sorted((c, tuple(sorted(t.items())))
                         for c, t in cfg.class_priors.items())))


def _world_cache(scene_cfg: SceneConfig, seed: tuple[int, ...]) -> SceneMap:
    key = (_scene_key(scene_cfg), seed)
    world = _WORLDS.get(key)
    if world is None:
        world = build_scene(scene_cfg, list(seed))
        if len(_WORLDS) > 256:
            _WORLDS.clear()
        _WORLDS[key] = world
    return world


def run_jobs(jobs: list[TrialJob], n_jobs: int = 1):
    """Execute trial jobs and fold results ordered by tag (deterministic)."""
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_run_job, jobs, chunksize=8))
    else:
        results = [_run_job(j) for j in jobs]
    return sorted(results, key=lambda item: item[0])


def recall_curve(scene_cfgs: list[SceneConfig], methods: list[str],
                 budgets: list[int], seeds: int, cfg: ScenarioConfig,
                 n_jobs: int = 1) -> list[dict]:
    """Mean recall per (method, budget) over seeds x scenes."""
    jobs = []
    for mi, method in enumerate(methods):
        for bi, budget in enumerate(budgets):
            for si, scene_cfg in enumerate(scene_cfgs):
                for seed in range(seeds):
                    jobs.append(TrialJob(
                        scene_cfg=scene_cfg, scene_seed=(11, si, seed),
                        method=method, budget=budget,
                        iters=cfg.engine.iterations,
                        trial_seed=(13, si, seed, mi, budget), cfg=cfg,
                        tag=(mi, bi, si, seed)))
    results = run_jobs(jobs, n_jobs)
    table: dict[tuple[int, int], list[TrialResult]] = {}
    for tag, res in results:
        table.setdefault((tag[0], tag[1]), []).append(res)
    rows = []
    for mi, method in enumerate(methods):
        for bi, budget in enumerate(budgets):
            group = table[(mi, bi)]
            recalls = [r.recall for r in group]
            rows.append({
                "method": method, "budget": budget, "n_trials": len(group),
                "mean_recall": float(np.mean(recalls)),
                "std_recall": float(np.std(recalls)),
                "mean_ap": float(np.mean([r.ap for r in group])),
            })
    return rows


def proportion_sweep(base_scene: SceneConfig, proportions: list[float],
                     methods: list[str], seeds: int, budget: int,
                     cfg: ScenarioConfig, n_jobs: int = 1) -> list[dict]:
    """Mean recall per (proportion, method) with common random seeds."""
    jobs = []
    for pi, proportion in enumerate(proportions):
        scene_cfg = proportion_scene(base_scene, proportion)
        for mi, method in enumerate(methods):
            for seed in range(seeds):
                jobs.append(TrialJob(
                    scene_cfg=scene_cfg, scene_seed=(17, seed),
                    method=method, budget=budget,
                    iters=cfg.engine.iterations,
                    trial_seed=(19, seed, mi), cfg=cfg,
                    tag=(pi, mi, seed)))
    results = run_jobs(jobs, n_jobs)
    table: dict[tuple[int, int], list[TrialResult]] = {}
    for tag, res in results:
        table.setdefault((tag[0], tag[1]), []).append(res)
    rows = []
    for pi, proportion in enumerate(proportions):
        for mi, method in enumerate(methods):
            group = table[(pi, mi)]
            recalls = [r.recall for r in group]
            rows.append({
                "proportion": proportion, "method": methods[mi],
                "n_trials": len(group),
                "mean_recall": float(np.mean(recalls)),
                "std_recall": float(np.std(recalls)),
            })
    return rows


def ablation(cfg: ScenarioConfig, seeds: int | None = None,
             budget: int | None = None, n_jobs: int = 1) -> list[dict]:
    """Recall/AP with the probability map enabled vs disabled, per detector preset."""
    seeds = cfg.experiment.ablation_seeds if seeds is None else seeds
    budget = cfg.experiment.ablation_budget if budget is None else budget
    presets = cfg.presets or [DetectorPreset("default", cfg.detector.base_recall,
                                             cfg.detector.sigma_base_deg)]
    jobs = []
    for di, preset in enumerate(presets):
        det_cfg = replace(cfg.detector, base_recall=preset.base_recall,
                          sigma_base_deg=preset.sigma_base_deg)
        for ai, (arm, spec) in enumerate((("with", METHODS["ppm_ps"]),
                                          ("without", NO_PPM_SPEC))):
            for seed in range(seeds):
                jobs.append(TrialJob(
                    scene_cfg=cfg.scene, scene_seed=(23, seed),
                    method=f"ppm_ps[{arm}]", budget=budget,
                    iters=cfg.engine.iterations,
                    trial_seed=(29, di, ai, seed), cfg=cfg, spec=spec,
                    detector_cfg=det_cfg, tag=(di, ai, seed)))
    results = run_jobs(jobs, n_jobs)
    table: dict[tuple[int, int], list[TrialResult]] = {}
    for tag, res in results:
        table.setdefault((tag[0], tag[1]), []).append(res)
    rows = []
    for di, preset in enumerate(presets):
        for ai, arm in enumerate(("with", "without")):
            group = table[(di, ai)]
            sim_speed = sum(r.views for r in group) / max(
                sum(r.elapsed_sim_ms for r in group) / 1e3, 1e-9)
            rows.append({
                "preset": preset.name, "ppm": arm, "n_trials": len(group),
                "mean_recall": float(np.mean([r.recall for r in group])),
                "mean_ap": float(np.mean([r.ap for r in group])),
                "views_per_sim_s": sim_speed,
            })
    return rows


def deviation_study(scene_cfg: SceneConfig, seeds: int, budget: int,
                    cfg: ScenarioConfig, n_jobs: int = 1,
                    iters: int = 4) -> list[dict]:
    """Per-target gaze deviation with variance voting on vs off.

    Runs the full iterative pipeline in both arms; only the voting step
    differs, so deviation deltas isolate the coordinate refinement.
    """
    cfg = scenario_copy(cfg)
    cfg.engine.init_frac = min(cfg.engine.init_frac, 0.5)  # leave room to iterate
    jobs = []
    for vi, (arm, spec) in enumerate((("on", METHODS["ppm_ps"]),
                                      ("off", NO_VOTE_SPEC))):
        for seed in range(seeds):
            jobs.append(TrialJob(
                scene_cfg=scene_cfg, scene_seed=(31, seed),
                method=f"ppm_ps[vote={arm}]", budget=budget,
                iters=iters, trial_seed=(37, vi, seed),
                cfg=cfg, spec=spec, tag=(vi, seed)))
    results = run_jobs(jobs, n_jobs)
    worlds = {seed: _world_cache(scene_cfg, (31, seed)) for seed in range(seeds)}
    rows = []
    for vi, arm in enumerate(("on", "off")):
        group = [res for tag, res in results if tag[0] == vi]
        n_targets = max(r.n_objects for r in group)
        for target in range(n_targets):
            moving = any(any(v != 0.0 for v in w.objects[target].velocity)
                         for w in worlds.values())
            dxs, dys, pres, posts = [], [], [], []
            for res in group:
                rec = res.found.get(target)
                if rec is None:
                    continue
                dxs.append(abs(rec.err_x_px))
                dys.append(abs(rec.err_y_px))
                posts.append(rec.post_var)
                if target in res.pre_vars:
                    pres.append(res.pre_vars[target])
            rows.append({
                "target": target, "moving": int(moving), "voting": arm,
                "n_seeds": len(group), "found_rate": len(dxs) / len(group),
                "mean_abs_dx_px": float(np.mean(dxs)) if dxs else float("nan"),
                "mean_abs_dy_px": float(np.mean(dys)) if dys else float("nan"),
                "mean_pre_var": float(np.mean(pres)) if pres else float("nan"),
                "mean_post_var": float(np.mean(posts)) if posts else float("nan"),
            })
    return rows
