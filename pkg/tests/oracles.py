"""Independent reference implementations used to check the library.

Everything here is deliberately naive (per-window loops, exhaustive
enumeration, direct coordinate arithmetic) and shares no code with the
package paths it verifies.
"""

import math

import numpy as np


def naive_ssim(a_gray: np.ndarray, b_gray: np.ndarray, window: np.ndarray, k1: float, k2: float, L: float) -> float:
    """Sliding-window SSIM: loop every valid window position explicitly."""
    c1 = (k1 * L) ** 2
    c2 = (k2 * L) ** 2
    h, w = a_gray.shape
    n = window.shape[0]
    vals = []
    for i in range(h - n + 1):
        for j in range(w - n + 1):
            wa = a_gray[i : i + n, j : j + n].astype(np.float64)
            wb = b_gray[i : i + n, j : j + n].astype(np.float64)
            mu_a = float((window * wa).sum())
            mu_b = float((window * wb).sum())
            var_a = float((window * wa * wa).sum()) - mu_a * mu_a
            var_b = float((window * wb * wb).sum()) - mu_b * mu_b
            cov = float((window * wa * wb).sum()) - mu_a * mu_b
            num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
            den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
            vals.append(num / den)
    return float(np.mean(vals))


def gaussian_window(side: int, sigma: float) -> np.ndarray:
    half = side // 2
    offs = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(offs**2) / (2 * sigma**2))
    k = np.outer(g, g)
    return k / k.sum()


def brute_disk_pixels(cx: float, cy: float, radius: float, w: int, h: int):
    """All (i, j) whose pixel center is within radius of (cx, cy)."""
    out = []
    for i in range(h):
        for j in range(w):
            if (j + 0.5 - cx) ** 2 + (i + 0.5 - cy) ** 2 <= radius * radius:
                out.append((i, j))
    return out


def brute_disk_pixels_windowed(cx: float, cy: float, radius: float, w: int, h: int):
    """Same enumeration, restricted to the only rows/cols that can qualify
    (any pixel center farther than radius on one axis cannot be a member)."""
    out = []
    i_lo = max(0, int(math.floor(cy - radius - 1)))
    i_hi = min(h, int(math.ceil(cy + radius + 1)))
    j_lo = max(0, int(math.floor(cx - radius - 1)))
    j_hi = min(w, int(math.ceil(cx + radius + 1)))
    for i in range(i_lo, i_hi):
        for j in range(j_lo, j_hi):
            if (j + 0.5 - cx) ** 2 + (i + 0.5 - cy) ** 2 <= radius * radius:
                out.append((i, j))
    return out


def brute_centroid(mask: np.ndarray, threshold: int = 127):
    xs, ys, n = 0.0, 0.0, 0
    h, w = mask.shape
    for i in range(h):
        for j in range(w):
            if mask[i, j] > threshold:
                xs += j + 0.5
                ys += i + 0.5
                n += 1
    if n == 0:
        raise ValueError("empty mask")
    return xs / n, ys / n


def forward_rotate(px: float, py: float, cx: float, cy: float, angle: float):
    """Where a source point lands under the package's rotation convention."""
    dx, dy = px - cx, py - cy
    ca, sa = math.cos(angle), math.sin(angle)
    return (cx + ca * dx + sa * dy, cy - sa * dx + ca * dy)


def intensity_centroid(plane: np.ndarray):
    total = float(plane.sum())
    if total == 0:
        raise ValueError("blank image")
    ys, xs = np.nonzero(plane >= 0)  # all pixels
    h, w = plane.shape
    jj = np.tile(np.arange(w, dtype=np.float64) + 0.5, (h, 1))
    ii = np.tile((np.arange(h, dtype=np.float64) + 0.5)[:, None], (1, w))
    f = plane.astype(np.float64)
    return float((f * jj).sum() / total), float((f * ii).sum() / total)


def plain_cosine(u, v) -> float:
    dot = sum(float(a) * float(b) for a, b in zip(u, v))
    nu = math.sqrt(sum(float(a) * float(a) for a in u))
    nv = math.sqrt(sum(float(b) * float(b) for b in v))
    return dot / (nu * nv)


def brute_force_ranking(entries, probe_values):
    """Exhaustive identity ranking: max-pool per identity, sort by score then
    smallest enroll index of the identity's best entry.

    entries: list of (identity, vector); enroll index = list position.
    """
    per_identity = {}
    for seq, (identity, vec) in enumerate(entries):
        s = plain_cosine(probe_values, vec)
        s = min(1.0, max(-1.0, s))
        cur = per_identity.get(identity)
        if cur is None or s > cur[0] or (s == cur[0] and seq < cur[1]):
            per_identity[identity] = (s, seq)
    ranked = sorted(per_identity.items(), key=lambda kv: (-kv[1][0], kv[1][1]))
    return [(identity, score) for identity, (score, _) in ranked]


def enumerate_roc_auc(genuine, imposter) -> float:
    """AUC via explicit threshold enumeration and trapezoids."""
    thresholds = [math.inf] + sorted(set(genuine) | set(imposter), reverse=True) + [-math.inf]
    pts = []
    for t in thresholds:
        tpr = sum(1 for s in genuine if s >= t) / len(genuine)
        fpr = sum(1 for s in imposter if s >= t) / len(imposter)
        pts.append((fpr, tpr))
    auc = 0.0
    for (f0, t0), (f1, t1) in zip(pts, pts[1:]):
        auc += (f1 - f0) * (t0 + t1) / 2
    return auc


def greedy_dedup_replay(sim, order_refs, start_ref, threshold):
    """Replay the greedy retention rule over a precomputed similarity lookup.

    sim: dict keyed by frozenset({ref_a, ref_b}) -> score.
    order_refs: visit order after the start (start excluded).
    """
    retained = [start_ref]
    discarded = []
    for ref in order_refs:
        worst = max(sim[frozenset((ref, kept))] for kept in retained)
        if worst < threshold:
            retained.append(ref)
        else:
            discarded.append(ref)
    return retained, discarded
