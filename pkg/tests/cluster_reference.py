"""Exhaustive region-growing reference, written independently of the library.

Uses explicit neighbor scans for local maxima and fixpoint set expansion
for growth (the library uses vectorized detection and BFS); shares no
code with the implementation it checks.
"""

import numpy as np


def reference_cluster_mask(grid, rel_threshold=0.8, min_size=3):
    grid = np.asarray(grid, dtype=float)
    h, w = grid.shape
    seeds = []
    for r in range(h):
        for c in range(w):
            v = grid[r, c]
            is_max = True
            for dr in (-1, 0, 1):
                for dc in (-1, 0, 1):
                    if dr == 0 and dc == 0:
                        continue
                    rr, cc = r + dr, c + dc
                    if 0 <= rr < h and 0 <= cc < w and grid[rr, cc] > v:
                        is_max = False
            if is_max and v > 0:
                seeds.append((-v, r * w + c, r, c))
    seeds.sort()

    claimed = [[False] * w for _ in range(h)]
    mask = np.zeros((h, w), dtype=bool)
    n_accepted = 0
    for _, _, r0, c0 in seeds:
        if claimed[r0][c0]:
            continue
        threshold = rel_threshold * grid[r0, c0]
        if grid[r0, c0] < threshold:
            continue
        region = {(r0, c0)}
        claimed[r0][c0] = True
        changed = True
        while changed:
            changed = False
            for r, c in sorted(region):
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    rr, cc = r + dr, c + dc
                    if (
                        0 <= rr < h
                        and 0 <= cc < w
                        and not claimed[rr][cc]
                        and grid[rr, cc] >= threshold
                    ):
                        claimed[rr][cc] = True
                        region.add((rr, cc))
                        changed = True
        if len(region) >= min_size:
            n_accepted += 1
            for r, c in region:
                mask[r, c] = True
    return mask, n_accepted
