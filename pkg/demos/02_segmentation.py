"""Dynamic-programming segmentation of a signal whose pitch jumps halfway.

Run: python3 demos/02_segmentation.py
"""
import numpy as np

from speechdecomp.core import ar_fit
from speechdecomp.segmentation import SegmentGrid, build_voiced_cost_table, dp_segment
from speechdecomp.synthetic import harmonic_tone
from speechdecomp.whitening import Whitener

rng = np.random.default_rng(1)
fs, n_min = 8000, 40

# 80 ms at 160 Hz followed by 80 ms at 280 Hz, light white noise.
first = harmonic_tone(160 / fs, [1.0, 0.6, 0.4], [0.0, 1.0, 2.0], 640)
second = harmonic_tone(280 / fs, [1.0, 0.6, 0.4], [0.5, 0.2, 1.4], 640, start=640)
v = np.concatenate((first, second))
y = v + 0.05 * rng.normal(size=v.size)

# Whitener from a separate noise-only stretch.
whitener = Whitener(ar_fit(0.05 * rng.normal(size=4000), 14))
y_w = whitener.apply(y)

# Segments of 20-50 ms, i.e. 4-10 subsegments of 5 ms.
grid = SegmentGrid.for_signal(y.size, n_min, 4, 10)
table = build_voiced_cost_table(y, y_w, grid, whitener)
stats = {}
result = dp_segment(table, grid, stats)

print(f"{grid.n_sub} subsegments, {stats['lookups']} table lookups")
for (lo, hi), fit in zip(result.sample_bounds(), result.fits):
    print(f"  {lo / fs * 1e3:5.0f}-{hi / fs * 1e3:5.0f} ms  "
          f"f0={fit.harmonic.f0 * fs:6.1f} Hz  L={fit.harmonic.order}")
print(f"total cost {result.total_cost:.1f}; the true change sits at 80 ms")

# For contrast: the cost of forcing fixed 20 ms blocks.
fixed = sum(table.costs[s, 4] for s in range(0, grid.n_sub, 4))
print(f"fixed 20 ms tiling cost {fixed:.1f}")
