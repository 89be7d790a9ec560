"""Loop-level numeric kernels.

Every function here is written in the numba-compatible subset of
numpy/python. :mod:`pseudolabel._accel` wraps them with ``@njit`` when
acceleration is enabled and falls back to these plain definitions
otherwise, so both paths share one source of truth.
"""

import numpy as np


def pairwise_iou(boxes_a, boxes_b):
    """IoU matrix between two corner-format box sets.

    boxes_a: (N, 4), boxes_b: (M, 4), both float64 [x1, y1, x2, y2].
    Returns (N, M). Zero union yields 0 by convention.
    """
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        ax1 = boxes_a[i, 0]
        ay1 = boxes_a[i, 1]
        ax2 = boxes_a[i, 2]
        ay2 = boxes_a[i, 3]
        area_a = max(ax2 - ax1, 0.0) * max(ay2 - ay1, 0.0)
        for j in range(m):
            bx1 = boxes_b[j, 0]
            by1 = boxes_b[j, 1]
            bx2 = boxes_b[j, 2]
            by2 = boxes_b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            ih = min(ay2, by2) - max(ay1, by1)
            if iw > 0.0 and ih > 0.0:
                inter = iw * ih
            else:
                inter = 0.0
            area_b = max(bx2 - bx1, 0.0) * max(by2 - by1, 0.0)
            union = area_a + area_b - inter
            if union > 0.0:
                out[i, j] = inter / union
    return out


def pairwise_giou(boxes_a, boxes_b):
    """Generalized IoU matrix: iou - (enclosing - union) / enclosing."""
    n = boxes_a.shape[0]
    m = boxes_b.shape[0]
    out = np.zeros((n, m), dtype=np.float64)
    for i in range(n):
        ax1 = boxes_a[i, 0]
        ay1 = boxes_a[i, 1]
        ax2 = boxes_a[i, 2]
        ay2 = boxes_a[i, 3]
        area_a = max(ax2 - ax1, 0.0) * max(ay2 - ay1, 0.0)
        for j in range(m):
            bx1 = boxes_b[j, 0]
            by1 = boxes_b[j, 1]
            bx2 = boxes_b[j, 2]
            by2 = boxes_b[j, 3]
            iw = min(ax2, bx2) - max(ax1, bx1)
            ih = min(ay2, by2) - max(ay1, by1)
            if iw > 0.0 and ih > 0.0:
                inter = iw * ih
            else:
                inter = 0.0
            area_b = max(bx2 - bx1, 0.0) * max(by2 - by1, 0.0)
            union = area_a + area_b - inter
            iou = inter / union if union > 0.0 else 0.0
            ew = max(ax2, bx2) - min(ax1, bx1)
            eh = max(ay2, by2) - min(ay1, by1)
            enclose = ew * eh
            if enclose > 0.0:
                out[i, j] = iou - (enclose - union) / enclose
            else:
                out[i, j] = iou
    return out


def roi_align_box(values, gy1, gx1, gy2, gx2, out_h, out_w, samples):
    """Average-pool bilinear samples of one box over a (C, H, W) grid.

    Box corners are in grid coordinates (cell (i, j) sits at y=i, x=j).
    Each output bin averages ``samples x samples`` bilinear reads; sample
    positions falling outside the grid are clamped to the border.
    """
    c_dim = values.shape[0]
    h = values.shape[1]
    w = values.shape[2]
    out = np.zeros((c_dim, out_h, out_w), dtype=np.float64)
    bin_h = (gy2 - gy1) / out_h
    bin_w = (gx2 - gx1) / out_w
    inv_count = 1.0 / (samples * samples)
    for ph in range(out_h):
        for pw in range(out_w):
            for iy in range(samples):
                y = gy1 + (ph + (iy + 0.5) / samples) * bin_h
                if y < 0.0:
                    y = 0.0
                if y > h - 1.0:
                    y = h - 1.0
                if h == 1:
                    y_lo = 0
                    y_hi = 0
                    fy = 0.0
                else:
                    y_lo = int(np.floor(y))
                    if y_lo > h - 2:
                        y_lo = h - 2
                    y_hi = y_lo + 1
                    fy = y - y_lo
                for ix in range(samples):
                    x = gx1 + (pw + (ix + 0.5) / samples) * bin_w
                    if x < 0.0:
                        x = 0.0
                    if x > w - 1.0:
                        x = w - 1.0
                    if w == 1:
                        x_lo = 0
                        x_hi = 0
                        fx = 0.0
                    else:
                        x_lo = int(np.floor(x))
                        if x_lo > w - 2:
                            x_lo = w - 2
                        x_hi = x_lo + 1
                        fx = x - x_lo
                    w00 = (1.0 - fy) * (1.0 - fx)
                    w01 = (1.0 - fy) * fx
                    w10 = fy * (1.0 - fx)
                    w11 = fy * fx
                    for c in range(c_dim):
                        v = (w00 * values[c, y_lo, x_lo]
                             + w01 * values[c, y_lo, x_hi]
                             + w10 * values[c, y_hi, x_lo]
                             + w11 * values[c, y_hi, x_hi])
                        out[c, ph, pw] += v * inv_count
    return out


def pairwise_iou_numpy(boxes_a, boxes_b):
    """Vectorized twin of :func:`pairwise_iou`.

    Same elementwise IEEE operations, so results are bit-identical to the
    loop kernel; used as the fallback path when numba is disabled.
    """
    lt = np.maximum(boxes_a[:, None, :2], boxes_b[None, :, :2])
    rb = np.minimum(boxes_a[:, None, 2:], boxes_b[None, :, 2:])
    wh = rb - lt
    inter = np.where((wh > 0.0).all(axis=2), wh[:, :, 0] * wh[:, :, 1], 0.0)
    area_a = np.maximum(boxes_a[:, 2] - boxes_a[:, 0], 0.0) * np.maximum(
        boxes_a[:, 3] - boxes_a[:, 1], 0.0
    )
    area_b = np.maximum(boxes_b[:, 2] - boxes_b[:, 0], 0.0) * np.maximum(
        boxes_b[:, 3] - boxes_b[:, 1], 0.0
    )
    union = area_a[:, None] + area_b[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)


def pairwise_giou_numpy(boxes_a, boxes_b):
    """Vectorized twin of :func:`pairwise_giou`; bit-identical results."""
    lt = np.maximum(boxes_a[:, None, :2], boxes_b[None, :, :2])
    rb = np.minimum(boxes_a[:, None, 2:], boxes_b[None, :, 2:])
    wh = rb - lt
    inter = np.where((wh > 0.0).all(axis=2), wh[:, :, 0] * wh[:, :, 1], 0.0)
    area_a = np.maximum(boxes_a[:, 2] - boxes_a[:, 0], 0.0) * np.maximum(
        boxes_a[:, 3] - boxes_a[:, 1], 0.0
    )
    area_b = np.maximum(boxes_b[:, 2] - boxes_b[:, 0], 0.0) * np.maximum(
        boxes_b[:, 3] - boxes_b[:, 1], 0.0
    )
    union = area_a[:, None] + area_b[None, :] - inter
    iou = np.divide(inter, union, out=np.zeros_like(inter), where=union > 0.0)
    e_wh = np.maximum(boxes_a[:, None, 2:], boxes_b[None, :, 2:]) - np.minimum(
        boxes_a[:, None, :2], boxes_b[None, :, :2]
    )
    enclose = e_wh[:, :, 0] * e_wh[:, :, 1]
    penalty = np.divide(
        enclose - union, enclose, out=np.zeros_like(enclose), where=enclose > 0.0
    )
    return iou - penalty


def solve_square_assignment(cost):
    """Minimum-cost perfect matching of a square matrix.

    Shortest-augmenting-path method with row/column potentials; rows are
    processed in ascending order and equal-cost columns resolve to the
    smallest index, so the result is deterministic across runs and
    platforms. Returns ``row_to_col`` of shape (n,).
    """
    n = cost.shape[0]
    u = np.zeros(n + 1, dtype=np.float64)
    v = np.zeros(n + 1, dtype=np.float64)
    link = np.zeros(n + 1, dtype=np.int64)  # column -> assigned row, 1-based
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        link[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf, dtype=np.float64)
        used = np.zeros(n + 1, dtype=np.bool_)
        while True:
            used[j0] = True
            i0 = link[j0]
            delta = np.inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[link[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if link[j0] == 0:
                break
        while True:
            j1 = way[j0]
            link[j0] = link[j1]
            j0 = j1
            if j0 == 0:
                break
    row_to_col = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        if link[j] > 0:
            row_to_col[link[j] - 1] = j - 1
    return row_to_col
