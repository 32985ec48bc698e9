"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
report.  Everything is seeded, so results are identical on every run.
"""

import math
import time

import numpy as np
import pytest

from panosearch.cli import main
from panosearch.config import SegNoiseConfig, default_scenario
from panosearch.detector import Detection
from panosearch.experiment import (default_scene_variants, deviation_scene,
                                   deviation_study, ablation, proportion_sweep,
                                   recall_curve, run_trial)
from panosearch.galvo import image_to_galvo
from panosearch.particles import normalize_weights, Particle
from panosearch.ppm import (build_ppm, refine_allocation,
                            region_sampling_prob, subregion_share)
from panosearch.refinement import iou, overlap_prob, variance_vote
from panosearch.scene import Region, build_scene


def report(criterion: int, name: str, ok: bool, detail: str = "") -> None:
    print(f"acceptance {criterion} ({name}): {'PASS' if ok else 'FAIL'} {detail}")
    assert ok, f"criterion {criterion} ({name}) failed: {detail}"


@pytest.fixture(scope="module")
def scenario():
    return default_scenario()


# -- 1. equation oracles ------------------------------------------------------

def test_criterion_1_equation_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    rel = 1e-9
    checks = 0

    def close(a, b):
        return abs(a - b) <= rel * max(1.0, abs(a), abs(b))

    for _ in range(1000):
        # region sampling probability vs the normalized area x prior products
        n = int(rng.integers(1, 6))
        areas = rng.uniform(10.0, 1e6, size=n)
        priors = rng.uniform(0.01, 1.0, size=n)
        regions = [Region(i, f"r{i}", float(areas[i]), {"t": float(priors[i])})
                   for i in range(n)]
        probs = region_sampling_prob(regions, "t")
        z = float(np.sum(areas * priors))
        for i in range(n):
            assert close(probs[i], areas[i] * priors[i] / z)
        checks += 1

        # per-detection allocation share vs the direct expression
        sigma = float(rng.uniform(0.02, 1.0))
        area = float(rng.uniform(1e4, 1e6))
        f_region = float(rng.uniform(0.01, 1.0))
        x_r = int(rng.integers(0, 1000))
        s_ro = math.pi * (50.0 * sigma) ** 2
        s_rm = area - s_ro
        if s_rm > 0:
            direct = (1.0 * s_ro) / (1.0 * s_ro + f_region * s_rm)
            assert close(subregion_share(s_ro, s_rm, f_region), direct)
            counts, x_rm = refine_allocation(
                Region(0, "r", area, {}), x_r,
                [type("D", (), {"sigma_o": sigma})()], f_region)
            assert abs(counts[0] - direct * x_r) <= 0.5 + rel
            assert counts[0] + x_rm == x_r
        checks += 1

        # view-pixel to mirror-angle transform vs theta + alpha * (t - center)
        th, tv = rng.uniform(-19.0, 19.0, size=2)
        t_x = float(rng.uniform(0, 264))
        t_y = float(rng.uniform(0, 224))
        g_h, g_v, _ = image_to_galvo(th, tv, t_x, t_y)
        assert close(g_h, min(max(th + 0.002 * (t_x - 132.0), -20.0), 20.0))
        assert close(g_v, min(max(tv + 0.002 * (t_y - 112.0), -20.0), 20.0))
        checks += 1

        # overlap probability vs exp(-(1 - IoU)^2 / sigma_t) with its own IoU
        a = Detection(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)),
                      float(rng.uniform(0.2, 2)), float(rng.uniform(0.2, 2)),
                      0.5, 1e-4, 1e-4)
        b = Detection(a.theta_h + float(rng.uniform(-0.5, 0.5)),
                      a.theta_v + float(rng.uniform(-0.5, 0.5)),
                      float(rng.uniform(0.2, 2)), float(rng.uniform(0.2, 2)),
                      0.5, 1e-4, 1e-4)
        ix = (min(a.theta_h + a.width_deg / 2, b.theta_h + b.width_deg / 2)
              - max(a.theta_h - a.width_deg / 2, b.theta_h - b.width_deg / 2))
        iy = (min(a.theta_v + a.height_deg / 2, b.theta_v + b.height_deg / 2)
              - max(a.theta_v - a.height_deg / 2, b.theta_v - b.height_deg / 2))
        inter = max(ix, 0.0) * max(iy, 0.0)
        brute_iou = inter / (a.width_deg * a.height_deg
                             + b.width_deg * b.height_deg - inter)
        if brute_iou > 0:
            assert close(overlap_prob(a, b, 0.025),
                         math.exp(-(1 - brute_iou) ** 2 / 0.025))
        checks += 1

        # variance vote vs the precision-weighted sums
        k = int(rng.integers(1, 6))
        members = [(Detection(float(rng.uniform(-5, 5)), float(rng.uniform(-5, 5)),
                              1.0, 1.0, 0.5,
                              float(rng.uniform(1e-4, 1.0)),
                              float(rng.uniform(1e-4, 1.0))),
                    float(rng.uniform(0.01, 1.0))) for _ in range(k)]
        c_h, c_v, r_h, r_v = variance_vote(members)
        den_h = sum(p / d.var_h for d, p in members)
        den_v = sum(p / d.var_v for d, p in members)
        assert close(c_h, sum(p * d.theta_h / d.var_h for d, p in members) / den_h)
        assert close(c_v, sum(p * d.theta_v / d.var_v for d, p in members) / den_v)
        assert close(r_h, 1.0 / den_h)
        assert close(r_v, 1.0 / den_v)
        checks += 1

    wall = time.perf_counter() - t0
    report(1, "equation oracles", wall < 10.0,
           f"{checks} instances in {wall:.2f}s")


# -- 2. conservation and normalization ------------------------------------------

def test_criterion_2_conservation(scenario):
    rng = np.random.default_rng(7)
    ok = True
    detail = []

    # region probabilities normalize to 1 +/- 1e-9 on random inputs
    for _ in range(200):
        n = int(rng.integers(1, 7))
        regions = [Region(i, f"r{i}", float(rng.uniform(1, 1e6)),
                          {"t": float(rng.uniform(0.01, 1.0))})
                   for i in range(n)]
        total = sum(region_sampling_prob(regions, "t").values())
        if abs(total - 1.0) > 1e-9:
            ok, _ = False, detail.append(f"prob sum {total}")

    # particle allocation sums to N exactly on the default scene family
    for si, scene_cfg in enumerate(default_scene_variants(scenario.scene, 5)):
        scene = build_scene(scene_cfg, seed=si)
        counts = np.bincount(scene.labels.ravel(), minlength=len(scene.regions))
        if sum(r.area_px for r in scene.regions) != scene.width * scene.height:
            ok = False
            detail.append(f"scene {si} partition broken")
        for region in scene.regions:
            if counts[region.id] != region.area_px:
                ok = False
                detail.append(f"scene {si} region {region.id} area mismatch")
        for n in (1, 17, 400, 801):
            ppm = build_ppm(scene, scenario.noise, "car", n, seed=si)
            got = sum(ppm.remainder_counts.values()) + \
                sum(s.count for s in ppm.sub_regions)
            if got != n:
                ok = False
                detail.append(f"scene {si} N={n} allocated {got}")

    # normalized weights sum to 1 +/- 1e-12
    for _ in range(200):
        k = int(rng.integers(1, 300))
        parts = [Particle(0.0, 0.0, float(w))
                 for w in rng.uniform(0.0, 5.0, size=k)]
        if sum(p.weight for p in parts) == 0:
            continue
        normalize_weights(parts)
        if abs(sum(p.weight for p in parts) - 1.0) > 1e-12:
            ok = False
            detail.append("weight normalization drift")

    report(2, "conservation/normalization", ok, "; ".join(detail) or "all exact")


# -- 3. initial recall shape ------------------------------------------------------

def test_criterion_3_initial_recall_shape():
    cfg = default_scenario()
    cfg.noise = SegNoiseConfig()  # zero-noise segmentation
    results = []
    for seed in (0, 7, 123):
        scene = build_scene(cfg.scene, seed=seed)
        flagged = sum(1 for o in scene.objects if o.pano_detectable)
        result = run_trial(scene, "ppm_ps", 0, 1, seed=seed, cfg=cfg)
        results.append((len(scene.objects), flagged, result.recall))
    ok = all(n == 9 and k == 3 and recall == 1 / 3
             for n, k, recall in results)
    report(3, "initial recall 0.333 at budget 0", ok, f"{results}")


# -- 4. recall-curve ordering ------------------------------------------------------

def test_criterion_4_curve_ordering(scenario):
    t0 = time.perf_counter()
    budgets = [100, 200, 300, 400, 500, 600, 700, 800]
    scenes = default_scene_variants(scenario.scene, 5)
    rows = recall_curve(scenes, ["ppm_ps", "rpm", "mpf"], budgets, 20, scenario)
    wall = time.perf_counter() - t0
    mean = {(r["method"], r["budget"]): r["mean_recall"] for r in rows}
    ok = True
    detail = []
    for b in budgets:
        gap1 = mean[("ppm_ps", b)] - mean[("rpm", b)]
        gap2 = mean[("rpm", b)] - mean[("mpf", b)]
        need = 0.03 if b <= 400 else 0.0
        if gap1 < need or gap2 < need:
            ok = False
        detail.append(f"b={b}: {mean[('ppm_ps', b)]:.3f}/"
                      f"{mean[('rpm', b)]:.3f}/{mean[('mpf', b)]:.3f}")
    if mean[("ppm_ps", 800)] < 0.95:
        ok = False
        detail.append(f"ppm_ps@800={mean[('ppm_ps', 800)]:.3f} < 0.95")
    if wall >= 300.0:
        ok = False
        detail.append(f"runtime {wall:.0f}s >= 300s")
    report(4, "recall-curve ordering", ok,
           f"{'; '.join(detail)}; runtime {wall:.0f}s")


# -- 5. proportion sweep direction --------------------------------------------------

def test_criterion_5_proportion_sweep(scenario):
    props = scenario.experiment.proportions
    rows = proportion_sweep(scenario.scene, props, ["ppm_ps", "mpf"],
                            scenario.experiment.sweep_seeds,
                            scenario.experiment.sweep_budget, scenario)
    mean = {(r["proportion"], r["method"]): r["mean_recall"] for r in rows}
    ok = True
    detail = []
    ours = [mean[(p, "ppm_ps")] for p in props]
    for a, b in zip(ours, ours[1:]):
        if b > a:
            ok = False
    detail.append("ppm_ps: " + "/".join(f"{v:.3f}" for v in ours))
    for p in props:
        if p < 0.63 and mean[(p, "ppm_ps")] - mean[(p, "mpf")] < 0.05:
            ok = False
            detail.append(f"gap at {p} = "
                          f"{mean[(p, 'ppm_ps')] - mean[(p, 'mpf')]:.3f}")
    report(5, "proportion-sweep direction", ok, "; ".join(detail))


# -- 6. ablation direction -----------------------------------------------------------

def test_criterion_6_ablation(scenario):
    rows = ablation(scenario)
    by = {(r["preset"], r["ppm"]): r["mean_recall"] for r in rows}
    ok = True
    detail = []
    for preset in ("det_fast", "det_mid", "det_strong"):
        with_map = by[(preset, "with")]
        without = by[(preset, "without")]
        drop = (with_map - without) / with_map if with_map > 0 else 0.0
        detail.append(f"{preset}: {with_map:.3f}->{without:.3f} ({drop:.0%})")
        if drop < 0.15:
            ok = False
    report(6, "ablation direction", ok, "; ".join(detail))


# -- 7. deviation reduction -----------------------------------------------------------

def test_criterion_7_deviation_reduction(scenario):
    scene_cfg = deviation_scene(scenario.scene)
    rows = deviation_study(scene_cfg, scenario.experiment.deviation_seeds,
                           scenario.experiment.deviation_budget, scenario)
    dev = {"on": [], "off": []}
    pre = []
    post = []
    for row in rows:
        if row["moving"] and row["found_rate"] > 0:
            dev[row["voting"]].append(
                0.5 * (row["mean_abs_dx_px"] + row["mean_abs_dy_px"]))
        if row["voting"] == "on" and row["found_rate"] > 0:
            pre.append(row["mean_pre_var"])
            post.append(row["mean_post_var"])
    mean_on = float(np.mean(dev["on"]))
    mean_off = float(np.mean(dev["off"]))
    reduction = 1.0 - mean_on / mean_off
    var_drop = float(np.mean(post)) < float(np.mean(pre))
    ok = reduction >= 0.30 and var_drop
    report(7, "deviation reduction", ok,
           f"deviation {mean_off:.1f}px -> {mean_on:.1f}px ({reduction:.0%}); "
           f"variance {np.mean(pre):.2e} -> {np.mean(post):.2e}")


# -- 8. timing model and throughput ------------------------------------------------------

def test_criterion_8_timing(scenario):
    scene = build_scene(scenario.scene, seed=0)
    result = run_trial(scene, "ppm_ps", 500, 2, seed=1, cfg=scenario)
    eng = scenario.engine
    exact = result.elapsed_sim_ms == \
        result.moves * eng.step_response_ms + result.views * eng.dwell_ms
    t0 = time.perf_counter()
    total_views = 0
    for seed in range(4):
        total_views += run_trial(scene, "ppm_ps", 500, 2, seed=seed,
                                 cfg=scenario).views
    throughput = total_views / (time.perf_counter() - t0)
    ok = exact and result.moves == result.views == 500 and throughput >= 500.0
    report(8, "timing model and throughput", ok,
           f"elapsed exact={exact}; {throughput:.0f} views/s")


# -- 9. determinism of CLI outputs -----------------------------------------------------------

def test_criterion_9_cli_determinism(tmp_path):
    cfg_path = tmp_path / "micro.cfg"
    cfg_path.write_text(
        "experiment {\n"
        "    methods = ppm_ps mpf\n"
        "    budgets = 40 80\n"
        "    seeds = 2\n"
        "    scenes = 2\n"
        "    proportions = 0.3 0.5\n"
        "    sweep_budget = 40\n"
        "    sweep_seeds = 2\n"
        "    ablation_budget = 40\n"
        "    ablation_seeds = 2\n"
        "    deviation_budget = 60\n"
        "    deviation_seeds = 2\n"
        "}\n")
    commands = [
        (["trial", "--seed", "5", "--budget", "60"], "trial.csv"),
        (["curve"], "recall_curve.csv"),
        (["sweep"], "proportion_sweep.csv"),
        (["ablation"], "ablation.csv"),
        (["deviation"], "deviation.csv"),
    ]
    ok = True
    detail = []
    for argv, filename in commands:
        out_a = tmp_path / ("a_" + filename)
        out_b = tmp_path / ("b_" + filename)
        assert main(argv + ["--config", str(cfg_path), "--out", str(out_a)]) == 0
        assert main(argv + ["--config", str(cfg_path), "--out", str(out_b)]) == 0
        same = (out_a / filename).read_bytes() == (out_b / filename).read_bytes()
        if not same:
            ok = False
        detail.append(f"{filename}:{'=' if same else '!='}")
    report(9, "byte-identical reruns", ok, " ".join(detail))
