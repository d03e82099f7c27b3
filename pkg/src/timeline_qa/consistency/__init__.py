from __future__ import annotations

from timeline_qa.consistency.refiner import (
    AlignmentResult,
    LossGradient,
    RefinementDelta,
    TimelineFeatures,
    alignment_distribution,
    cosine_similarity,
    make_refinement_delta,
    tcr_loss,
    tcr_loss_gradient,
    tcr_loss_score_gradient,
)

__all__ = [
    "AlignmentResult",
    "LossGradient",
    "RefinementDelta",
    "TimelineFeatures",
    "alignment_distribution",
    "cosine_similarity",
    "make_refinement_delta",
    "tcr_loss",
    "tcr_loss_gradient",
    "tcr_loss_score_gradient",
]
