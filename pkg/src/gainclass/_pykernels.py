"""Pure numpy implementations of the hot kernels.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or ``GAINCLASS_PURE_PYTHON`` is set.
"""
import numpy as np

TIE_REL = 1e-12
_CHUNK = 1 << 15

# status codes shared with the compiled kernel
FIXED = 0
MAX_ITERS = 1
COLLAPSE = 2
STALLED = 3


def _xlogx(a):
    return np.where(a > 0, a * np.log(np.where(a > 0, a, 1.0)), 0.0)


def exhaustive_search(x, floor):
    """Global minimum of ln G over hard splits with sample 0 fixed in class 1.

    Code bit ``N-1-n`` set means sample ``n`` is in class 2, so ascending code
    order is lexicographic order of the label sequence. Returns
    ``(best_code, best_value)``: the smallest code whose value is within a
    relative ``TIE_REL`` of the minimum.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    shifts = np.arange(n - 1, -1, -1, dtype=np.int64)
    total = 1 << (n - 1)
    vals = np.empty(total)
    vals[0] = np.inf
    for start in range(1, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        w2 = ((codes[:, None] >> shifts) & 1).astype(np.float64)
        acc = np.zeros(codes.size)
        for w in (1.0 - w2, w2):
            cnt = w.sum(axis=1)
            mu = (w @ x) / cnt
            var = np.maximum((w * (x[None, :] - mu[:, None]) ** 2).sum(axis=1) / cnt, floor)
            a = cnt / n
            acc += -2.0 * _xlogx(a) + a * np.log(var)
        vals[start:start + codes.size] = acc
    best = vals.min()
    code = int(np.flatnonzero(vals <= best + TIE_REL * max(1.0, abs(best)))[0])
    return code, float(vals[code])


def _params(x, m1, floor):
    n = x.size
    out = []
    for w in (m1, 1.0 - m1):
        mass = w.sum()
        if mass <= 0:
            return None
        mu = (w * x).sum() / mass
        raw = (w * (x - mu) ** 2).sum() / mass
        out.append((mass / n, mu, max(raw, floor)))
    return out


def _log_gain(p):
    val = 0.0
    for a, _, v in p:
        val += -2.0 * a * np.log(a) + a * np.log(v)
    return float(val)


def _map(x, p, tie):
    (a1, m1, v1), (a2, m2, v2) = p
    r = (np.log(a1) - 0.5 * np.log(v1) - (x - m1) ** 2 / (2.0 * v1)) - (
        np.log(a2) - 0.5 * np.log(v2) - (x - m2) ** 2 / (2.0 * v2)
    )
    return np.where(r > 0, 1.0, np.where(r < 0, 0.0, tie))


def fixed_point(x, m1, floor, max_iters, tol, tie):
    """Alternate parameter re-estimation and MAP reassignment.

    Returns ``(m1, iterations, trace, status)``. ``tie`` is the class-1
    weight given to exact ties.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    m = np.array(m1, dtype=np.float64)
    p = _params(x, m, floor)
    if p is None:
        return m, 0, np.empty(0), COLLAPSE
    lg = _log_gain(p)
    trace = [lg]
    status = MAX_ITERS
    it = 0
    while it < max_iters:
        it += 1
        new = _map(x, p, tie)
        if np.array_equal(new, m):
            status = FIXED
            break
        q = _params(x, new, floor)
        if q is None:
            status = COLLAPSE
            break
        lg_new = _log_gain(q)
        if lg_new > lg + TIE_REL * max(1.0, abs(lg)):
            status = STALLED
            break
        decrease = lg - lg_new
        m, p, lg = new, q, lg_new
        trace.append(lg)
        if decrease < tol and np.array_equal(_map(x, p, tie), m):
            status = FIXED
            break
    return m, it, np.asarray(trace), status


def best_flip(x, m1, floor):
    """Best single-sample class flip for hard memberships ``m1``.

    Returns ``(index, value)`` of the flip with the lowest ln G, or
    ``(-1, inf)`` when every flip empties a class.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    n = x.size
    xc = x - x.mean()
    in1 = m1 > 0.5
    c1, s1, q1 = in1.sum(), xc[in1].sum(), (xc[in1] ** 2).sum()
    c2, s2, q2 = n - c1, xc[~in1].sum(), (xc[~in1] ** 2).sum()
    sign = np.where(in1, -1.0, 1.0)
    nc1 = c1 + sign
    nc2 = c2 - sign
    ns1, nq1 = s1 + sign * xc, q1 + sign * xc**2
    ns2, nq2 = s2 - sign * xc, q2 - sign * xc**2
    ok = (nc1 > 0) & (nc2 > 0)
    vals = np.full(n, np.inf)
    if not ok.any():
        return -1, np.inf
    c1o, c2o = nc1[ok], nc2[ok]
    v1 = np.maximum(nq1[ok] / c1o - (ns1[ok] / c1o) ** 2, floor)
    v2 = np.maximum(nq2[ok] / c2o - (ns2[ok] / c2o) ** 2, floor)
    a1, a2 = c1o / n, c2o / n
    vals[ok] = -2.0 * (a1 * np.log(a1) + a2 * np.log(a2)) + a1 * np.log(v1) + a2 * np.log(v2)
    i = int(np.argmin(vals))
    return i, float(vals[i])


def interval_scan(xs, floor):
    """Best split of sorted samples into a contiguous block and its complement.

    Returns ``(l, r, value)``: positions ``l..r`` (inclusive) of ``xs`` form
    one class. The first block in ``(l, r)`` order attaining the minimum wins.
    """
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    n = xs.size
    xc = xs - xs.mean()
    s_cum = np.concatenate([[0.0], np.cumsum(xc)])
    q_cum = np.concatenate([[0.0], np.cumsum(xc * xc)])
    best, bl, br = np.inf, -1, -1
    for l in range(n):
        # blocks ending at n-1 are complements of prefix blocks
        r = np.arange(l, n - 1)
        if r.size == 0:
            continue
        c = (r - l + 1).astype(np.float64)
        s = s_cum[r + 1] - s_cum[l]
        q = q_cum[r + 1] - q_cum[l]
        co = n - c
        so, qo = s_cum[n] - s, q_cum[n] - q
        v_in = np.maximum(q / c - (s / c) ** 2, floor)
        v_out = np.maximum(qo / co - (so / co) ** 2, floor)
        a = c / n
        vals = -2.0 * (a * np.log(a) + (1.0 - a) * np.log(1.0 - a)) + a * np.log(v_in) + (1.0 - a) * np.log(v_out)
        i = int(np.argmin(vals))
        if vals[i] < best:
            best, bl, br = float(vals[i]), l, int(r[i])
    return bl, br, best
