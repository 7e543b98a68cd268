"""Hot numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``SRBFEM_DISABLE_NUMBA`` is
unset (or ``0``). Both paths must agree to rounding; ``tests/test_kernels.py``
checks this and ``benchmarks/bench_kernels.py`` times them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_ENV_FLAG = "SRBFEM_DISABLE_NUMBA"

_backend = "numpy" if (numba is None or os.environ.get(_ENV_FLAG, "0").lower() in ("1", "true", "yes")) else "numba"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Switch between ``"numba"`` and ``"numpy"`` at runtime (benchmarks, tests)."""
    global _backend
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and numba is None:
        raise RuntimeError("numba is not installed")
    _backend = name


def _njit(fn):
    if numba is None:
        return fn
    return numba.njit(cache=True, fastmath=False)(fn)


# ---------------------------------------------------------------------------
# point location: first candidate cell whose barycentric coordinates are all
# >= -tol. Candidates come from a CSR bucket table.
# ---------------------------------------------------------------------------

@_njit
def _locate_nb(points, buckets, bucket_ptr, bucket_cells, origin, inv_maps, tol):
    n = points.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    bary = np.zeros((n, 4))
    for p in range(n):
        b = buckets[p]
        if b < 0:
            continue
        best = -1
        best_min = -np.inf
        for k in range(bucket_ptr[b], bucket_ptr[b + 1]):
            c = bucket_cells[k]
            d0 = points[p, 0] - origin[c, 0]
            d1 = points[p, 1] - origin[c, 1]
            d2 = points[p, 2] - origin[c, 2]
            l1 = inv_maps[c, 0, 0] * d0 + inv_maps[c, 0, 1] * d1 + inv_maps[c, 0, 2] * d2
            l2 = inv_maps[c, 1, 0] * d0 + inv_maps[c, 1, 1] * d1 + inv_maps[c, 1, 2] * d2
            l3 = inv_maps[c, 2, 0] * d0 + inv_maps[c, 2, 1] * d1 + inv_maps[c, 2, 2] * d2
            l0 = 1.0 - l1 - l2 - l3
            m = min(min(l0, l1), min(l2, l3))
            if m > best_min:
                best_min = m
                best = c
                bary[p, 0] = l0
                bary[p, 1] = l1
                bary[p, 2] = l2
                bary[p, 3] = l3
                if m >= 0.0:
                    break
        if best_min >= -tol:
            out[p] = best
    return out, bary


def _locate_np(points, buckets, bucket_ptr, bucket_cells, origin, inv_maps, tol):
    n = points.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    bary_out = np.zeros((n, 4))
    valid = buckets >= 0
    starts = np.where(valid, bucket_ptr[np.maximum(buckets, 0)], 0)
    counts = np.where(valid, bucket_ptr[np.maximum(buckets, 0) + 1] - starts, 0)
    kmax = int(counts.max()) if n else 0
    if kmax == 0:
        return out, bary_out
    offs = np.arange(kmax)
    mask = offs[None, :] < counts[:, None]
    idx = np.where(mask, starts[:, None] + offs[None, :], 0)
    cand = bucket_cells[idx]
    d = points[:, None, :] - origin[cand]
    lam = np.einsum("pkij,pkj->pki", inv_maps[cand], d)
    l0 = 1.0 - lam.sum(axis=-1)
    bary = np.concatenate([l0[..., None], lam], axis=-1)
    score = np.where(mask, bary.min(axis=-1), -np.inf)
    # prefer the first candidate that is fully inside, matching the loop path
    inside = score >= 0.0
    first_inside = np.where(inside.any(axis=1), inside.argmax(axis=1), score.argmax(axis=1))
    rows = np.arange(n)
    best = score[rows, first_inside]
    ok = best >= -tol
    out[ok] = cand[rows, first_inside][ok]
    bary_out[valid] = bary[rows, first_inside][valid]
    return out, bary_out


def locate(points, buckets, bucket_ptr, bucket_cells, origin, inv_maps, tol):
    if _backend == "numba":
        return _locate_nb(points, buckets, bucket_ptr, bucket_cells, origin, inv_maps, tol)
    return _locate_np(points, buckets, bucket_ptr, bucket_cells, origin, inv_maps, tol)


# ---------------------------------------------------------------------------
# finite-segment line potential and its gradient
#   G = scale * ln(D_b / D_a),  D_p = |x - p| - tau.(x - p)
# D_p is evaluated without cancellation when tau.(x - p) > 0.
# ---------------------------------------------------------------------------

@_njit
def _segment_green_nb(points, a, tau, length, scale, clamp):
    n = points.shape[0]
    val = np.empty(n)
    grad = np.empty((n, 3))
    # a fixed unit normal used when a point sits exactly on the centreline
    if abs(tau[0]) < 0.9:
        e0, e1, e2 = 0.0, tau[2], -tau[1]
    else:
        e0, e1, e2 = -tau[2], 0.0, tau[0]
    en = np.sqrt(e0 * e0 + e1 * e1 + e2 * e2)
    e0 /= en
    e1 /= en
    e2 /= en
    for p in range(n):
        x0 = points[p, 0]
        x1 = points[p, 1]
        x2 = points[p, 2]
        u = (x0 - a[0]) * tau[0] + (x1 - a[1]) * tau[1] + (x2 - a[2]) * tau[2]
        t = min(max(u, 0.0), length)
        c0 = a[0] + t * tau[0]
        c1 = a[1] + t * tau[1]
        c2 = a[2] + t * tau[2]
        r0 = x0 - c0
        r1 = x1 - c1
        r2 = x2 - c2
        r = np.sqrt(r0 * r0 + r1 * r1 + r2 * r2)
        if r < clamp:
            # offsets at rounding level have no meaningful direction
            if r > 1e-9 * clamp:
                x0 = c0 + clamp * r0 / r
                x1 = c1 + clamp * r1 / r
                x2 = c2 + clamp * r2 / r
            else:
                x0 = c0 + clamp * e0
                x1 = c1 + clamp * e1
                x2 = c2 + clamp * e2
            u = (x0 - a[0]) * tau[0] + (x1 - a[1]) * tau[1] + (x2 - a[2]) * tau[2]
        # perpendicular offset from the infinite line
        q0 = x0 - a[0] - u * tau[0]
        q1 = x1 - a[1] - u * tau[1]
        q2 = x2 - a[2] - u * tau[2]
        rp2 = q0 * q0 + q1 * q1 + q2 * q2
        ua = u
        ub = u - length
        ra = np.sqrt(rp2 + ua * ua)
        rb = np.sqrt(rp2 + ub * ub)
        ga0 = (x0 - a[0]) / ra
        ga1 = (x1 - a[1]) / ra
        ga2 = (x2 - a[2]) / ra
        gb0 = (x0 - a[0] - length * tau[0]) / rb
        gb1 = (x1 - a[1] - length * tau[1]) / rb
        gb2 = (x2 - a[2] - length * tau[2]) / rb
        if ub > 0.0:
            # beyond b: D_b / D_a = (r_a + u_a) / (r_b + u_b), finite on the extended axis
            sa = ra + ua
            sb = rb + ub
            val[p] = scale * np.log(sa / sb)
            grad[p, 0] = scale * ((ga0 + tau[0]) / sa - (gb0 + tau[0]) / sb)
            grad[p, 1] = scale * ((ga1 + tau[1]) / sa - (gb1 + tau[1]) / sb)
            grad[p, 2] = scale * ((ga2 + tau[2]) / sa - (gb2 + tau[2]) / sb)
            continue
        if ua > 0.0:
            da = rp2 / (ra + ua)
        else:
            da = ra - ua
        db = rb - ub
        val[p] = scale * np.log(db / da)
        # grad D_p = (x - p)/r_p - tau
        grad[p, 0] = scale * ((gb0 - tau[0]) / db - (ga0 - tau[0]) / da)
        grad[p, 1] = scale * ((gb1 - tau[1]) / db - (ga1 - tau[1]) / da)
        grad[p, 2] = scale * ((gb2 - tau[2]) / db - (ga2 - tau[2]) / da)
    return val, grad


def _segment_green_np(points, a, tau, length, scale, clamp):
    x = np.array(points, dtype=float, copy=True)
    u = (x - a) @ tau
    t = np.clip(u, 0.0, length)
    c = a + t[:, None] * tau
    rvec = x - c
    r = np.linalg.norm(rvec, axis=1)
    inner = r < clamp
    if inner.any():
        normal = np.array([0.0, tau[2], -tau[1]]) if abs(tau[0]) < 0.9 else np.array([-tau[2], 0.0, tau[0]])
        normal /= np.linalg.norm(normal)
        ri = r[inner]
        live = ri > 1e-9 * clamp
        direction = np.where(live[:, None], rvec[inner] / np.where(live, ri, 1.0)[:, None], normal)
        x[inner] = c[inner] + clamp * direction
        u = (x - a) @ tau
    q = x - a - u[:, None] * tau
    rp2 = np.einsum("ij,ij->i", q, q)
    ua = u
    ub = u - length
    ra = np.sqrt(rp2 + ua * ua)
    rb = np.sqrt(rp2 + ub * ub)
    ea = (x - a) / ra[:, None]
    eb = (x - a - length * tau) / rb[:, None]
    beyond = ub > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        da = np.where(ua > 0.0, rp2 / (ra + ua), ra - ua)
        db = rb - ub
        val = scale * np.log(db / da)
        grad = scale * ((eb - tau) / db[:, None] - (ea - tau) / da[:, None])
    if beyond.any():
        sa = (ra + ua)[beyond]
        sb = (rb + ub)[beyond]
        val[beyond] = scale * np.log(sa / sb)
        grad[beyond] = scale * ((ea[beyond] + tau) / sa[:, None] - (eb[beyond] + tau) / sb[:, None])
    return val, grad


def segment_green(points, a, tau, length, scale, clamp):
    points = np.ascontiguousarray(points, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    tau = np.ascontiguousarray(tau, dtype=float)
    if _backend == "numba":
        return _segment_green_nb(points, a, tau, float(length), float(scale), float(clamp))
    return _segment_green_np(points, a, tau, float(length), float(scale), float(clamp))


# ---------------------------------------------------------------------------
# local coupling block
#   C[c, i, l] = sum_q w_q |T_c| [ G (grad(Psi E_l) . grad phi_i) - (grad(Psi E_l) . grad G) phi_i ]
# ---------------------------------------------------------------------------

@_njit
def _coupling_local_nb(G, gradG, psi, gradpsi, E, gradE, lam, weights, vol, gradphi):
    nc, nq = G.shape
    nl = E.shape[2]
    out = np.zeros((nc, 4, nl))
    for c in range(nc):
        for q in range(nq):
            wq = weights[q] * vol[c]
            g = G[c, q]
            ps = psi[c, q]
            for l in range(nl):
                e = E[c, q, l]
                f0 = ps * gradE[c, q, l, 0] + e * gradpsi[c, q, 0]
                f1 = ps * gradE[c, q, l, 1] + e * gradpsi[c, q, 1]
                f2 = ps * gradE[c, q, l, 2] + e * gradpsi[c, q, 2]
                if f0 == 0.0 and f1 == 0.0 and f2 == 0.0:
                    continue
                t2 = f0 * gradG[c, q, 0] + f1 * gradG[c, q, 1] + f2 * gradG[c, q, 2]
                for i in range(4):
                    t1 = f0 * gradphi[c, i, 0] + f1 * gradphi[c, i, 1] + f2 * gradphi[c, i, 2]
                    out[c, i, l] += wq * (g * t1 - t2 * lam[q, i])
    return out


def _coupling_local_np(G, gradG, psi, gradpsi, E, gradE, lam, weights, vol, gradphi):
    flux = psi[..., None, None] * gradE + E[..., None] * gradpsi[:, :, None, :]
    w = weights[None, :] * vol[:, None]
    first = np.einsum("cq,cqlk->clk", w * G, flux)
    first = np.einsum("clk,cik->cil", first, gradphi)
    t2 = np.einsum("cqlk,cqk->cql", flux, gradG)
    second = np.einsum("cq,cql,qi->cil", w, t2, lam)
    return first - second


def coupling_local(G, gradG, psi, gradpsi, E, gradE, lam, weights, vol, gradphi):
    arrays = (G, gradG, psi, gradpsi, E, gradE, lam, weights, vol, gradphi)
    args = [np.ascontiguousarray(v, dtype=float) for v in arrays]
    if _backend == "numba":
        return _coupling_local_nb(*args)
    return _coupling_local_np(*args)
