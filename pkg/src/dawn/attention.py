"""Memory-augmented attention over the ROI feature volume.

The last foreground memory read is slid over the ROI features; the softmax
of those raw inner products weights the m x m average-pooled ROI fibres.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dawn import autodiff as ad
from dawn.ops import ShapeError


@dataclass
class AttentionOutput:
    scores: object  # (a, a), sums to 1
    pooled: object  # (a, a, c)
    weighted: object  # (a, a, c), scores broadcast over channels times pooled
    attended: object  # (m, m, c), attention-weighted mean fibre tiled spatially


def attend(f, m_last, uniform: bool = False) -> AttentionOutput:
    """Attend over ``f`` (n, n, c) with the previous read ``m_last`` (m, m, c).

    The controller needs an m x m x c input, so the weighted fibres are summed
    over all a*a positions (a convex combination, since the scores sum to 1)
    and the resulting c-vector is tiled back to m x m.

    ``uniform=True`` replaces the scores with 1/a^2 everywhere, which is the
    no-attention ablation.
    """
    fv, mv = ad.value(f), ad.value(m_last)
    if fv.ndim != 3 or mv.ndim != 3 or fv.shape[2] != mv.shape[2]:
        raise ShapeError(f"channel mismatch between ROI {fv.shape} and memory read {mv.shape}")
    if mv.shape[0] > fv.shape[0] or mv.shape[1] > fv.shape[1]:
        raise ShapeError(f"memory read {mv.shape} larger than ROI {fv.shape}")
    m = mv.shape[0]
    pooled = ad.avgpool(f, m, 1)
    if uniform:
        a = pooled.shape[0]
        scores = np.full((a, pooled.shape[1]), 1.0 / (a * pooled.shape[1]))
    else:
        scores = ad.softmax(ad.xcorr(f, m_last))
    weighted = ad.mul(ad.reshape(scores, scores.shape + (1,)), pooled)
    fibre = ad.sum_(weighted, axis=(0, 1))
    attended = ad.broadcast_to(fibre, (m, mv.shape[1], mv.shape[2]))
    return AttentionOutput(scores, pooled, weighted, attended)
