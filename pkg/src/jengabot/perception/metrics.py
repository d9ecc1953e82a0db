"""Average precision of instance masks at an IoU threshold."""
from __future__ import annotations

import numpy as np

from .masks import InstanceMask, mask_iou

RECALL_POINTS = np.linspace(0.0, 1.0, 101)


def match_predictions(predictions: list[InstanceMask], ground_truth: list[InstanceMask],
                      iou_thr: float) -> tuple[np.ndarray, np.ndarray]:
    """Greedy one-to-one matching, highest confidence first.

    Returns (confidences sorted descending, true-positive flags). Predictions and
    ground truth only match within the same image.
    """
    order = sorted(range(len(predictions)), key=lambda i: -predictions[i].confidence)
    used = set()
    conf, tp = [], []
    for i in order:
        p = predictions[i]
        best, best_j = iou_thr, None
        for j, g in enumerate(ground_truth):
            if j in used or g.image_id != p.image_id:
                continue
            iou = mask_iou(p, g)
            if iou >= best:
                best, best_j = iou, j
        if best_j is not None:
            used.add(best_j)
        conf.append(p.confidence)
        tp.append(best_j is not None)
    return np.asarray(conf, float), np.asarray(tp, bool)


def precision_recall(tp: np.ndarray, n_gt: int) -> tuple[np.ndarray, np.ndarray]:
    ctp = np.cumsum(tp)
    cfp = np.cumsum(~tp)
    recall = ctp / max(n_gt, 1)
    precision = ctp / np.maximum(ctp + cfp, 1)
    return precision, recall


def interpolated_ap(precision: np.ndarray, recall: np.ndarray) -> float:
    """101-point interpolated area under the PR curve."""
    if len(precision) == 0:
        return 0.0
    # precision envelope: max precision at any recall >= r
    env = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, RECALL_POINTS, side="left")
    vals = np.where(idx < len(env), env[np.minimum(idx, len(env) - 1)], 0.0)
    return float(vals.mean())


def ap_at_iou(predictions: list[InstanceMask], ground_truth: list[InstanceMask], iou_thr: float) -> float:
    if not ground_truth or not predictions:
        return 0.0
    _, tp = match_predictions(predictions, ground_truth, iou_thr)
    precision, recall = precision_recall(tp, len(ground_truth))
    return interpolated_ap(precision, recall)
