"""splinecast: out-of-core multi-resolution volume rendering over B-spline
block models.

A raw scalar volume is partitioned into shared-boundary micro-blocks across a
bipartite level-of-detail hierarchy, each block is encoded as a compact
clamped B-spline model sized by an adaptive per-block search, and frames are
ray-cast from whichever blocks an LRU cache holds while a preemptible
prefetcher warms the predicted next view.
"""

from __future__ import annotations

__version__ = "0.1.0"
