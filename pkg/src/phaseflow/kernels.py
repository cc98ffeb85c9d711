"""Hot inner loops: Verlet stepping, cubic B-spline gathers, particle binning.

Each kernel exists twice: a numba ``@njit`` loop (``*_numba``) and a
vectorized numpy twin (``*_numpy``). The public names dispatch on
:data:`phaseflow._accel.USE_NUMBA`. Both paths perform the same floating
point operations in the same order, so results agree to rounding.

Force encoding shared by the stepping kernels:

* ``kind == 0``: ``coeffs`` are ascending polynomial coefficients of F(x).
* ``kind == 1``: ``table`` holds F on a uniform lattice starting at
  ``t_x0`` with spacing ``t_h``; linear interpolation in between, constant
  extension past the ends unless ``t_periodic`` wraps the lattice.
"""

import numpy as np

from ._accel import JIT_OPTIONS, USE_NUMBA, njit

FORCE_POLY = 0
FORCE_TABLE = 1


# ---------------------------------------------------------------------------
# force evaluation
# ---------------------------------------------------------------------------


@njit(**JIT_OPTIONS)
def _poly_force(x, coeffs):
    acc = 0.0
    for k in range(coeffs.shape[0] - 1, -1, -1):
        acc = acc * x + coeffs[k]
    return acc


@njit(**JIT_OPTIONS)
def _table_force(x, table, t_x0, t_h, t_periodic):
    n = table.shape[0]
    u = (x - t_x0) / t_h
    if t_periodic:
        u = u % n
        i = int(np.floor(u))
        f = u - i
        j = i + 1
        if j == n:
            j = 0
        return (1.0 - f) * table[i] + f * table[j]
    if u <= 0.0:
        return table[0]
    if u >= n - 1:
        return table[n - 1]
    i = int(np.floor(u))
    f = u - i
    return (1.0 - f) * table[i] + f * table[i + 1]


def _force_array(x, kind, coeffs, table, t_x0, t_h, t_periodic):
    if kind == FORCE_POLY:
        acc = np.zeros_like(x)
        for k in range(coeffs.shape[0] - 1, -1, -1):
            acc = acc * x + coeffs[k]
        return acc
    n = table.shape[0]
    u = (x - t_x0) / t_h
    if t_periodic:
        u = u % n
        i = np.floor(u).astype(np.int64)
        f = u - i
        j = np.where(i + 1 == n, 0, i + 1)
        return (1.0 - f) * table[i] + f * table[j]
    uc = np.clip(u, 0.0, n - 1)
    i = np.minimum(np.floor(uc).astype(np.int64), n - 2)
    f = uc - i
    return (1.0 - f) * table[i] + f * table[i + 1]


# ---------------------------------------------------------------------------
# velocity Verlet over a batch of phase points
# ---------------------------------------------------------------------------


VERLET_BLOCK = 64


@njit(**JIT_OPTIONS)
def _verlet_block(xb, pb, fb, sb, m, mass, dt, n_steps, kind, coeffs, table, t_x0, t_h, t_periodic):
    half = 0.5 * dt
    for step in range(n_steps):
        for s in range(m):
            if sb[s] >= 0:
                continue
            ph = pb[s] + half * fb[s]
            xn = xb[s] + dt * ph / mass
            if kind == 0:
                fn = _poly_force(xn, coeffs)
            else:
                fn = _table_force(xn, table, t_x0, t_h, t_periodic)
            pn = ph + half * fn
            if np.isfinite(xn) and np.isfinite(pn) and np.isfinite(fn):
                xb[s] = xn
                pb[s] = pn
                fb[s] = fn
            else:
                sb[s] = step


@njit(**JIT_OPTIONS)
def verlet_numba(x, p, mass, dt, n_steps, kind, coeffs, table, t_x0, t_h, t_periodic, status):
    # Samples advance in blocks with the step loop inside, so independent
    # trajectories overlap in the pipeline instead of forming one serial chain.
    n = x.shape[0]
    xb = np.empty(VERLET_BLOCK)
    pb = np.empty(VERLET_BLOCK)
    fb = np.empty(VERLET_BLOCK)
    sb = np.empty(VERLET_BLOCK, dtype=np.int64)
    for start in range(0, n, VERLET_BLOCK):
        m = min(VERLET_BLOCK, n - start)
        for s in range(m):
            xb[s] = x[start + s]
            pb[s] = p[start + s]
            sb[s] = status[start + s]
            if kind == 0:
                fb[s] = _poly_force(xb[s], coeffs)
            else:
                fb[s] = _table_force(xb[s], table, t_x0, t_h, t_periodic)
        _verlet_block(xb, pb, fb, sb, m, mass, dt, n_steps, kind, coeffs, table, t_x0, t_h, t_periodic)
        for s in range(m):
            x[start + s] = xb[s]
            p[start + s] = pb[s]
            status[start + s] = sb[s]


def verlet_numpy(x, p, mass, dt, n_steps, kind, coeffs, table, t_x0, t_h, t_periodic, status):
    half = 0.5 * dt
    live = status < 0
    # overflow is reported through ``status``, not as floating-point warnings
    with np.errstate(over="ignore", invalid="ignore"):
        f = _force_array(x, kind, coeffs, table, t_x0, t_h, t_periodic)
        for step in range(n_steps):
            ph = p + half * f
            xn = x + dt * ph / mass
            fn = _force_array(xn, kind, coeffs, table, t_x0, t_h, t_periodic)
            pn = ph + half * fn
            ok = np.isfinite(xn) & np.isfinite(pn) & np.isfinite(fn)
            newly_bad = live & ~ok
            if newly_bad.any():
                status[newly_bad] = step
                live &= ok
            x[live] = xn[live]
            p[live] = pn[live]
            f[live] = fn[live]
            if not live.any():
                break


def verlet(x, p, mass, dt, n_steps, kind, coeffs, table, t_x0, t_h, t_periodic, status):
    """Advance the phase points ``(x, p)`` in place by ``n_steps`` Verlet steps.

    ``status`` must be initialised to ``-1``; a sample whose state turns
    non-finite keeps its last finite state and records the failing step.
    """
    impl = verlet_numba if USE_NUMBA else verlet_numpy
    impl(x, p, float(mass), float(dt), int(n_steps), int(kind), coeffs, table,
         float(t_x0), float(t_h), bool(t_periodic), status)


# ---------------------------------------------------------------------------
# cubic B-spline gather on a (n_p, n_x) coefficient array
# ---------------------------------------------------------------------------


@njit(**JIT_OPTIONS)
def bspline3_gather_numba(coeffs, ip, ix, wrap_x, out):
    n_p, n_x = coeffs.shape
    for q in range(ip.shape[0]):
        up = ip[q]
        ux = ix[q]
        i0 = int(np.floor(up))
        j0 = int(np.floor(ux))
        tp = up - i0
        tx = ux - j0
        wp0 = (1.0 - tp) ** 3 / 6.0
        wp1 = (3.0 * tp ** 3 - 6.0 * tp ** 2 + 4.0) / 6.0
        wp2 = (-3.0 * tp ** 3 + 3.0 * tp ** 2 + 3.0 * tp + 1.0) / 6.0
        wp3 = tp ** 3 / 6.0
        wx0 = (1.0 - tx) ** 3 / 6.0
        wx1 = (3.0 * tx ** 3 - 6.0 * tx ** 2 + 4.0) / 6.0
        wx2 = (-3.0 * tx ** 3 + 3.0 * tx ** 2 + 3.0 * tx + 1.0) / 6.0
        wx3 = tx ** 3 / 6.0
        acc = 0.0
        for a in range(4):
            i = i0 - 1 + a
            if i < 0 or i >= n_p:
                continue
            if a == 0:
                wp = wp0
            elif a == 1:
                wp = wp1
            elif a == 2:
                wp = wp2
            else:
                wp = wp3
            row = 0.0
            for b in range(4):
                j = j0 - 1 + b
                if wrap_x:
                    j = j % n_x
                elif j < 0 or j >= n_x:
                    continue
                if b == 0:
                    wx = wx0
                elif b == 1:
                    wx = wx1
                elif b == 2:
                    wx = wx2
                else:
                    wx = wx3
                row += wx * coeffs[i, j]
            acc += wp * row
        out[q] = acc


def bspline3_gather_numpy(coeffs, ip, ix, wrap_x, out):
    n_p, n_x = coeffs.shape
    i0 = np.floor(ip).astype(np.int64)
    j0 = np.floor(ix).astype(np.int64)
    tp = ip - i0
    tx = ix - j0
    wps = (
        (1.0 - tp) ** 3 / 6.0,
        (3.0 * tp ** 3 - 6.0 * tp ** 2 + 4.0) / 6.0,
        (-3.0 * tp ** 3 + 3.0 * tp ** 2 + 3.0 * tp + 1.0) / 6.0,
        tp ** 3 / 6.0,
    )
    wxs = (
        (1.0 - tx) ** 3 / 6.0,
        (3.0 * tx ** 3 - 6.0 * tx ** 2 + 4.0) / 6.0,
        (-3.0 * tx ** 3 + 3.0 * tx ** 2 + 3.0 * tx + 1.0) / 6.0,
        tx ** 3 / 6.0,
    )
    acc = np.zeros(ip.shape[0])
    for a in range(4):
        i = i0 - 1 + a
        ok_i = (i >= 0) & (i < n_p)
        ic = np.clip(i, 0, n_p - 1)
        row = np.zeros(ip.shape[0])
        for b in range(4):
            j = j0 - 1 + b
            if wrap_x:
                j = j % n_x
                ok = ok_i
            else:
                ok = ok_i & (j >= 0) & (j < n_x)
            jc = np.clip(j, 0, n_x - 1)
            row += np.where(ok, wxs[b] * coeffs[ic, jc], 0.0)
        acc += wps[a] * row
    out[:] = acc


def bspline3_gather(coeffs, ip, ix, wrap_x):
    """Evaluate a cubic B-spline with coefficients ``coeffs`` at fractional indices.

    ``ip`` indexes axis 0 and ``ix`` axis 1. Taps outside the array
    contribute zero, except along axis 1 when ``wrap_x`` is set.
    """
    ip = np.ascontiguousarray(ip, dtype=np.float64)
    ix = np.ascontiguousarray(ix, dtype=np.float64)
    out = np.empty(ip.shape[0])
    impl = bspline3_gather_numba if USE_NUMBA else bspline3_gather_numpy
    impl(np.ascontiguousarray(coeffs, dtype=np.float64), ip, ix, bool(wrap_x), out)
    return out


# ---------------------------------------------------------------------------
# particle binning onto a cell-centred grid
# ---------------------------------------------------------------------------


@njit(**JIT_OPTIONS)
def bin_nearest_numba(x, p, w, x0, dx, n_x, p0, dp, n_p, wrap_x, out):
    lost = 0.0
    for s in range(x.shape[0]):
        i = int(np.floor((p[s] - p0) / dp + 0.5))
        j = int(np.floor((x[s] - x0) / dx + 0.5))
        if wrap_x:
            j = j % n_x
        if i < 0 or i >= n_p or j < 0 or j >= n_x:
            lost += w[s]
            continue
        out[i, j] += w[s]
    return lost


def bin_nearest_numpy(x, p, w, x0, dx, n_x, p0, dp, n_p, wrap_x, out):
    i = np.floor((p - p0) / dp + 0.5).astype(np.int64)
    j = np.floor((x - x0) / dx + 0.5).astype(np.int64)
    if wrap_x:
        j = j % n_x
    ok = (i >= 0) & (i < n_p) & (j >= 0) & (j < n_x)
    flat = np.bincount(i[ok] * n_x + j[ok], weights=w[ok], minlength=n_p * n_x)
    out += flat.reshape(n_p, n_x)
    return float(w[~ok].sum())


@njit(**JIT_OPTIONS)
def bin_linear_numba(x, p, w, x0, dx, n_x, p0, dp, n_p, wrap_x, out):
    # taps that fall off the grid count as lost weight
    lost = 0.0
    for s in range(x.shape[0]):
        u = (p[s] - p0) / dp
        v = (x[s] - x0) / dx
        i = int(np.floor(u))
        j = int(np.floor(v))
        fu = u - i
        fv = v - j
        for a in range(2):
            ii = i + a
            wa = fu if a == 1 else 1.0 - fu
            for b in range(2):
                jj = j + b
                wb = fv if b == 1 else 1.0 - fv
                if wrap_x:
                    jj = jj % n_x
                if ii < 0 or ii >= n_p or jj < 0 or jj >= n_x:
                    lost += w[s] * wa * wb
                else:
                    out[ii, jj] += w[s] * wa * wb
    return lost


def bin_linear_numpy(x, p, w, x0, dx, n_x, p0, dp, n_p, wrap_x, out):
    u = (p - p0) / dp
    v = (x - x0) / dx
    i = np.floor(u).astype(np.int64)
    j = np.floor(v).astype(np.int64)
    fu = u - i
    fv = v - j
    lost = 0.0
    flat = np.zeros(n_p * n_x)
    for a in range(2):
        ii = i + a
        wa = fu if a == 1 else 1.0 - fu
        for b in range(2):
            jj = j + b
            wb = fv if b == 1 else 1.0 - fv
            if wrap_x:
                jj = jj % n_x
            ok = (ii >= 0) & (ii < n_p) & (jj >= 0) & (jj < n_x)
            tap = w * wa * wb
            lost += float(tap[~ok].sum())
            flat += np.bincount(ii[ok] * n_x + jj[ok], weights=tap[ok], minlength=n_p * n_x)
    out += flat.reshape(n_p, n_x)
    return lost


def bin_particles(x, p, w, x0, dx, n_x, p0, dp, n_p, wrap_x, scheme="nearest"):
    """Deposit weighted particles on a grid whose nodes are cell centres.

    Returns ``(counts, lost_weight)`` with ``counts`` shaped ``(n_p, n_x)``.
    """
    out = np.zeros((n_p, n_x))
    args = (
        np.ascontiguousarray(x, dtype=np.float64),
        np.ascontiguousarray(p, dtype=np.float64),
        np.ascontiguousarray(w, dtype=np.float64),
        float(x0), float(dx), int(n_x), float(p0), float(dp), int(n_p), bool(wrap_x), out,
    )
    if scheme == "nearest":
        impl = bin_nearest_numba if USE_NUMBA else bin_nearest_numpy
    elif scheme == "linear":
        impl = bin_linear_numba if USE_NUMBA else bin_linear_numpy
    else:
        raise ValueError(f"unknown binning scheme {scheme!r}")
    lost = impl(*args)
    return out, float(lost)
