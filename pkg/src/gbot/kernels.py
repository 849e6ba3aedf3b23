"""Hot numeric kernels, compiled with numba when available.

Each kernel ships in two functionally identical flavors:

* ``*_numpy`` -- vectorized pure-numpy reference path.
* ``*_numba`` -- @njit(nogil=True) loop version (absent if numba is not
  importable).

The module-level names (``reproj_residual_jacobian`` etc.) are bound to
the numba flavor by default. Set ``GBOT_NUMBA=0`` in the environment to
force the numpy path; the selection happens at import time.

``benchmarks/bench_kernels.py`` times both flavors side by side.
"""

from __future__ import annotations

import os

import numpy as np

_MIN_DEPTH = 1e-6


def _numba_requested() -> bool:
    return os.environ.get("GBOT_NUMBA", "1").strip().lower() not in (
        "0",
        "false",
        "off",
        "no",
    )


try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _numba_requested()


# ---------------------------------------------------------------------------
# numpy flavors
# ---------------------------------------------------------------------------


def reproj_residual_jacobian_numpy(points, uv, weights, rot, trans, fx, fy, cx, cy):
    """Weighted reprojection residual and twist Jacobian.

    points:  (n, 3) model points in the frame the pose acts on
    uv:      (n, 2) observed pixels
    weights: (n,)   per-point weights (<= 0 disables the point)
    rot, trans: current pose estimate
    Returns (residual (2n,), jacobian (2n, 6), n_active).

    The Jacobian is with respect to a left-multiplied twist update
    ``pose <- exp((omega, v)) o pose`` with columns ordered
    (wx, wy, wz, vx, vy, vz). Points behind the camera or with
    non-positive weight contribute zero rows.
    """
    points = np.asarray(points, dtype=np.float64)
    uv = np.asarray(uv, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    n = points.shape[0]

    p = points @ np.asarray(rot, dtype=np.float64).T + np.asarray(trans, dtype=np.float64)
    z = p[:, 2]
    ok = (z > _MIN_DEPTH) & (weights > 0.0)
    sw = np.where(ok, np.sqrt(np.maximum(weights, 0.0)), 0.0)
    zs = np.where(ok, z, 1.0)

    u = fx * p[:, 0] / zs + cx
    v = fy * p[:, 1] / zs + cy

    res = np.zeros(2 * n)
    res[0::2] = sw * (u - uv[:, 0])
    res[1::2] = sw * (v - uv[:, 1])

    # du/dp_cam rows, (n, 2, 3)
    du_dp = np.zeros((n, 2, 3))
    du_dp[:, 0, 0] = fx / zs
    du_dp[:, 0, 2] = -fx * p[:, 0] / (zs * zs)
    du_dp[:, 1, 1] = fy / zs
    du_dp[:, 1, 2] = -fy * p[:, 1] / (zs * zs)

    # dp_cam/d(twist) = [-skew(p) | I], (n, 3, 6)
    dp_dd = np.zeros((n, 3, 6))
    dp_dd[:, 0, 1] = p[:, 2]
    dp_dd[:, 0, 2] = -p[:, 1]
    dp_dd[:, 1, 0] = -p[:, 2]
    dp_dd[:, 1, 2] = p[:, 0]
    dp_dd[:, 2, 0] = p[:, 1]
    dp_dd[:, 2, 1] = -p[:, 0]
    dp_dd[:, 0, 3] = 1.0
    dp_dd[:, 1, 4] = 1.0
    dp_dd[:, 2, 5] = 1.0

    jac = np.einsum("nij,njk->nik", du_dp, dp_dd) * sw[:, None, None]
    return res, jac.reshape(2 * n, 6), int(ok.sum())


def adds_min_mean_numpy(pred_pts, gt_pts):
    """Mean over pred points of the distance to the closest gt point."""
    pred_pts = np.asarray(pred_pts, dtype=np.float64)
    gt_pts = np.asarray(gt_pts, dtype=np.float64)
    diff = pred_pts[:, None, :] - gt_pts[None, :, :]
    d = np.sqrt((diff * diff).sum(axis=2))
    return float(d.min(axis=1).mean())


def fps_numpy(points, count, seed_index):
    """Greedy farthest point sampling indices starting from seed_index."""
    points = np.asarray(points, dtype=np.float64)
    out = np.empty(count, dtype=np.int64)
    out[0] = seed_index
    diff = points - points[seed_index]
    mind = np.sqrt((diff * diff).sum(axis=1))
    for k in range(1, count):
        j = int(np.argmax(mind))
        out[k] = j
        diff = points - points[j]
        np.minimum(mind, np.sqrt((diff * diff).sum(axis=1)), out=mind)
    return out


# ---------------------------------------------------------------------------
# numba flavors
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def reproj_residual_jacobian_numba(points, uv, weights, rot, trans, fx, fy, cx, cy):
        n = points.shape[0]
        res = np.zeros(2 * n)
        jac = np.zeros((2 * n, 6))
        n_active = 0
        for i in range(n):
            w = weights[i]
            px = rot[0, 0] * points[i, 0] + rot[0, 1] * points[i, 1] + rot[0, 2] * points[i, 2] + trans[0]
            py = rot[1, 0] * points[i, 0] + rot[1, 1] * points[i, 1] + rot[1, 2] * points[i, 2] + trans[1]
            pz = rot[2, 0] * points[i, 0] + rot[2, 1] * points[i, 1] + rot[2, 2] * points[i, 2] + trans[2]
            if pz <= _MIN_DEPTH or w <= 0.0:
                continue
            n_active += 1
            sw = np.sqrt(w)
            u = fx * px / pz + cx
            v = fy * py / pz + cy
            res[2 * i] = sw * (u - uv[i, 0])
            res[2 * i + 1] = sw * (v - uv[i, 1])

            a = fx / pz
            c = -fx * px / (pz * pz)
            b = fy / pz
            d = -fy * py / (pz * pz)
            # row u: [a, 0, c] @ [-skew(p) | I]
            jac[2 * i, 0] = sw * (c * py)
            jac[2 * i, 1] = sw * (a * pz - c * px)
            jac[2 * i, 2] = sw * (-a * py)
            jac[2 * i, 3] = sw * a
            jac[2 * i, 5] = sw * c
            # row v: [0, b, d] @ [-skew(p) | I]
            jac[2 * i + 1, 0] = sw * (-b * pz + d * py)
            jac[2 * i + 1, 1] = sw * (-d * px)
            jac[2 * i + 1, 2] = sw * (b * px)
            jac[2 * i + 1, 4] = sw * b
            jac[2 * i + 1, 5] = sw * d
        return res, jac, n_active

    @numba.njit(cache=True, nogil=True)
    def adds_min_mean_numba(pred_pts, gt_pts):
        n = pred_pts.shape[0]
        m = gt_pts.shape[0]
        total = 0.0
        for i in range(n):
            best = np.inf
            for j in range(m):
                dx = pred_pts[i, 0] - gt_pts[j, 0]
                dy = pred_pts[i, 1] - gt_pts[j, 1]
                dz = pred_pts[i, 2] - gt_pts[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < best:
                    best = d
            total += best
        return total / n

    @numba.njit(cache=True, nogil=True)
    def fps_numba(points, count, seed_index):
        n = points.shape[0]
        out = np.empty(count, dtype=np.int64)
        out[0] = seed_index
        mind = np.empty(n)
        for i in range(n):
            dx = points[i, 0] - points[seed_index, 0]
            dy = points[i, 1] - points[seed_index, 1]
            dz = points[i, 2] - points[seed_index, 2]
            mind[i] = np.sqrt(dx * dx + dy * dy + dz * dz)
        for k in range(1, count):
            j = 0
            best = mind[0]
            for i in range(1, n):
                if mind[i] > best:
                    best = mind[i]
                    j = i
            out[k] = j
            for i in range(n):
                dx = points[i, 0] - points[j, 0]
                dy = points[i, 1] - points[j, 1]
                dz = points[i, 2] - points[j, 2]
                d = np.sqrt(dx * dx + dy * dy + dz * dz)
                if d < mind[i]:
                    mind[i] = d
        return out


if USE_NUMBA:
    reproj_residual_jacobian = reproj_residual_jacobian_numba
    adds_min_mean = adds_min_mean_numba
    fps = fps_numba
else:
    reproj_residual_jacobian = reproj_residual_jacobian_numpy
    adds_min_mean = adds_min_mean_numpy
    fps = fps_numpy

ACTIVE_BACKEND = "numba" if USE_NUMBA else "numpy"
