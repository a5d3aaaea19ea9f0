"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the library's code paths (numpy/scipy shortcuts,
vectorized tallies) so that agreement between the two is meaningful.
"""

import statistics
from collections import deque


def pstdev_oracle(values):
    if len(values) == 1:
        return 0.0
    return statistics.pstdev(values)


def bin_index_oracle(edges, value):
    """Linear scan over [lo, hi) bins, final bin closed."""
    for i in range(len(edges) - 1):
        if edges[i] <= value < edges[i + 1]:
            return i
    return len(edges) - 2  # value == final edge


def histogram_oracle(ratings_by_key, edges):
    """Counts per bin from a {(instance, robot): [ratings]} mapping."""
    counts = [0] * (len(edges) - 1)
    stds = {}
    for key, vals in ratings_by_key.items():
        sd = pstdev_oracle(vals)
        stds[key] = sd
        counts[bin_index_oracle(edges, sd)] += 1
    return stds, counts


def flood_components(mask, min_area=0):
    """8-connectivity components via BFS flood fill.

    Returns a list of sets of (row, col), ordered by first (row-major)
    foreground pixel, with components under min_area dropped.
    """
    h = len(mask)
    w = len(mask[0]) if h else 0
    seen = [[False] * w for _ in range(h)]
    components = []
    for r in range(h):
        for c in range(w):
            if not mask[r][c] or seen[r][c]:
                continue
            seen[r][c] = True
            queue = deque([(r, c)])
            comp = set()
            while queue:
                cr, cc = queue.popleft()
                comp.add((cr, cc))
                for dr in (-1, 0, 1):
                    for dc in (-1, 0, 1):
                        nr, nc = cr + dr, cc + dc
                        if 0 <= nr < h and 0 <= nc < w and mask[nr][nc] and not seen[nr][nc]:
                            seen[nr][nc] = True
                            queue.append((nr, nc))
            components.append(comp)
    return [comp for comp in components if len(comp) >= min_area]


def f1_oracle(pairs):
    """Per-class precision/recall/F1 and macro F1 from (gold, pred) pairs.

    pred is an int 1..4 or None for a failed prediction. Plain loops, no
    shared code with the implementation.
    """
    per_class = {}
    f1s = []
    for c in (1, 2, 3, 4):
        tp = sum(1 for g, p in pairs if g == c and p == c)
        predicted_c = sum(1 for _, p in pairs if p == c)
        gold_c = sum(1 for g, _ in pairs if g == c)  # includes failures
        precision = tp / predicted_c if predicted_c else 0.0
        recall = tp / gold_c if gold_c else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class[c] = (precision, recall, f1, gold_c)
        f1s.append(f1)
    return per_class, sum(f1s) / 4.0


def confusion_oracle(pairs):
    matrix = [[0] * 4 for _ in range(4)]
    failures = [0] * 4
    for g, p in pairs:
        if p is None:
            failures[g - 1] += 1
        else:
            matrix[g - 1][p - 1] += 1
    return matrix, failures


def median_consensus_oracle(values):
    """Sorted-middle median; even counts average the middles and a .5
    result rounds toward the higher (less traversable) rating."""
    vals = sorted(values)
    n = len(vals)
    if n % 2 == 1:
        return vals[n // 2]
    lo, hi = vals[n // 2 - 1], vals[n // 2]
    if (lo + hi) % 2 == 0:
        return (lo + hi) // 2
    return (lo + hi) // 2 + 1
