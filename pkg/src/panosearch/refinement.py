"""Coordinate refinement: overlap-weighted, precision-weighted merging of boxes.

Confidence-ranked NMS groups overlapping detections into search windows.
Each window's center is then re-estimated by voting: every member
contributes its center weighted by overlap probability over localization
variance, so tight, well-localized neighbours dominate and uncertain or
barely-overlapping ones are discounted.  The same weights aggregate into a
shrunken per-axis sampling radius for the next search stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .detector import Detection
from .galvo import clamp_angle

VAR_FLOOR = 1e-6  # degrees^2


@dataclass(frozen=True)
class SearchWindow:
    center_h: float
    center_v: float
    radius_h: float           # per-axis spread of the window estimate
    radius_v: float
    confidence: float         # best member confidence
    width_deg: float          # extent kept from the best member
    height_deg: float
    members: tuple[Detection, ...]


def iou(a: Detection, b: Detection) -> float:
    """Intersection over union of two center+extent angular rectangles."""
    ax0, ax1 = a.theta_h - a.width_deg / 2.0, a.theta_h + a.width_deg / 2.0
    ay0, ay1 = a.theta_v - a.height_deg / 2.0, a.theta_v + a.height_deg / 2.0
    bx0, bx1 = b.theta_h - b.width_deg / 2.0, b.theta_h + b.width_deg / 2.0
    by0, by1 = b.theta_v - b.height_deg / 2.0, b.theta_v + b.height_deg / 2.0
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = a.width_deg * a.height_deg + b.width_deg * b.height_deg - inter
    return inter / union


def overlap_prob(b_i: Detection, b_m: Detection, sigma_t: float = 0.025) -> float:
    """exp(-(1 - IoU)^2 / sigma_t); callers only pass overlapping pairs."""
    miss = 1.0 - iou(b_i, b_m)
    return math.exp(-miss * miss / sigma_t)


def variance_vote(members) -> tuple[float, float, float, float]:
    """Precision-weighted center and aggregated radius over (detection, p) pairs.

    Per axis the refined coordinate is sum(p * c / var) / sum(p / var) and the
    new sampling radius is the aggregate 1 / sum(p / var).  Variances are
    floored so a perfect detection cannot zero out the vote.
    """
    if not members:
        raise ValueError("variance_vote needs at least one member")
    num_h = num_v = den_h = den_v = 0.0
    for det, p in members:
        wh = p / max(det.var_h, VAR_FLOOR)
        wv = p / max(det.var_v, VAR_FLOOR)
        num_h += wh * det.theta_h
        num_v += wv * det.theta_v
        den_h += wh
        den_v += wv
    return num_h / den_h, num_v / den_v, 1.0 / den_h, 1.0 / den_v


def nms_merge(dets, iou_keep: float = 0.5, sigma_t: float = 0.025,
              vote: bool = True, limit: float = 20.0,
              radius_mode: str = "harmonic") -> list[SearchWindow]:
    """Greedy confidence-ranked suppression into voted search windows.

    Detections overlapping a selected box above iou_keep fold into its member
    list instead of surviving on their own.  With voting enabled the window
    center moves to the members' precision-weighted vote; otherwise it stays
    at the best member.  radius_mode 'stddev' reports sqrt of the aggregate.
    """
    if not dets:
        return []
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].confidence, i))
    taken = [False] * len(dets)
    windows: list[SearchWindow] = []
    for i in order:
        if taken[i]:
            continue
        taken[i] = True
        best = dets[i]
        members = [best]
        for j in order:
            if taken[j]:
                continue
            if iou(best, dets[j]) > iou_keep:
                taken[j] = True
                members.append(dets[j])
        if vote:
            pairs = [(m, overlap_prob(m, best, sigma_t)) for m in members]
            c_h, c_v, agg_h, agg_v = variance_vote(pairs)
            if radius_mode == "stddev":
                r_h, r_v = math.sqrt(agg_h), math.sqrt(agg_v)
            else:
                r_h, r_v = agg_h, agg_v
        else:
            c_h, c_v = best.theta_h, best.theta_v
            r_h, r_v = max(best.var_h, VAR_FLOOR), max(best.var_v, VAR_FLOOR)
            if radius_mode == "stddev":
                r_h, r_v = math.sqrt(r_h), math.sqrt(r_v)
        windows.append(SearchWindow(
            center_h=clamp_angle(c_h, limit), center_v=clamp_angle(c_v, limit),
            radius_h=r_h, radius_v=r_v, confidence=best.confidence,
            width_deg=best.width_deg, height_deg=best.height_deg,
            members=tuple(members)))
    return windows


def write_windows_csv(path: str, rows) -> None:
    """Refinement log CSV: stage, window, center_h, center_v, radius_h, radius_v, n_members."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("stage,window,center_h,center_v,radius_h,radius_v,n_members\n")
        for stage, idx, w in rows:
            fh.write(f"{stage},{idx},{w.center_h:.6f},{w.center_v:.6f},"
                     f"{w.radius_h:.6e},{w.radius_v:.6e},{len(w.members)}\n")
