from .metrics import (
    MatchedPurity,
    SegmentMetrics,
    SweepCurve,
    conformal_transform,
    efficiency_at_purity,
    segment_metrics,
    threshold_sweep,
)
