"""Vectorised numpy kernels; same contracts as the numba ones.

Recovery cannot be vectorised along a raster row (each pixel needs its
recovered west neighbour), so it sweeps wavefronts ``2*r + c = const``: every
causal neighbour of a pixel lies on a strictly earlier wavefront.
"""
import numpy as np

from . import scalar


def _round_div(num, den):
    num = np.asarray(num, dtype=np.int64)
    pos = (2 * num + den) // (2 * den)
    neg = -((-2 * num + den) // (2 * den))
    return np.where(num >= 0, pos, neg)


def predict_values(code, ww, w, nw, n, ne, nn, nne, e, s, a1=0, a2=0, a3=0, a4=0):
    """Array form of :func:`scalar.predict_scalar`; all inputs int64 arrays."""
    if code == scalar.CB:
        v = _round_div(w + n + e + s, 4)
    elif code == scalar.MED:
        lo = np.minimum(w, n)
        hi = np.maximum(w, n)
        v = np.where(nw <= lo, hi, np.where(nw >= hi, lo, w + n - nw))
    elif code == scalar.GAP:
        d = (np.abs(w - nw) + np.abs(ne - nne) + np.abs(n - nn)) - (
            np.abs(w - ww) + np.abs(ne - n) + np.abs(n - nw)
        )
        u4 = 2 * w + 2 * n + ne - nw
        v = np.select(
            [d > 80, d > 32, d > 8, d >= -8, d >= -32, d >= -80],
            [
                w,
                _round_div(4 * w + u4, 8),
                _round_div(4 * w + 3 * u4, 16),
                _round_div(u4, 4),
                _round_div(4 * n + 3 * u4, 16),
                _round_div(4 * n + u4, 8),
            ],
            n,
        )
    elif code == scalar.SGAP:
        v = _round_div(2 * w - nw + 2 * n + ne, 4)
    elif code == scalar.L:
        v = _round_div(7 * w - 3 * nw + 5 * n + ne, 10)
    else:
        v = _round_div(a1 * w + a2 * nw + a3 * n + a4 * ne, scalar.COEF_ONE)
    return np.clip(v, 0, 255).astype(np.int64)


def _neighbour_index(shape, rows, cols):
    """Flat indices of the nine clamped neighbours, keyed by name."""
    H, W = shape
    rr = lambda d: np.clip(rows + d, 0, H - 1)  # noqa: E731
    cc = lambda d: np.clip(cols + d, 0, W - 1)  # noqa: E731
    return {
        "ww": rows * W + cc(-2),
        "w": rows * W + cc(-1),
        "nw": rr(-1) * W + cc(-1),
        "n": rr(-1) * W + cols,
        "ne": rr(-1) * W + cc(1),
        "nn": rr(-2) * W + cols,
        "nne": rr(-2) * W + cc(1),
        "e": rows * W + cc(1),
        "s": rr(1) * W + cols,
    }


def _coef_columns(code, coefs, grid, rows, cols):
    if code != scalar.AL:
        return (0, 0, 0, 0)
    sel = coefs[rows // grid, cols // grid]
    return tuple(sel[:, j].astype(np.int64) for j in range(4))


def _predict_flat(flat, code, idx, acoefs, sel=slice(None)):
    vals = {k: flat[v[sel]].astype(np.int64) for k, v in idx.items()}
    a = tuple(x if np.isscalar(x) else x[sel] for x in acoefs)
    return predict_values(code, vals["ww"], vals["w"], vals["nw"], vals["n"], vals["ne"],
                          vals["nn"], vals["nne"], vals["e"], vals["s"], *a)


def predict_region(img, code, coefs, grid, r0, r1, c0, c1):
    rows, cols = np.mgrid[r0:r1, c0:c1]
    rows = rows.ravel()
    cols = cols.ravel()
    idx = _neighbour_index(img.shape, rows, cols)
    acoefs = _coef_columns(code, coefs, grid, rows, cols)
    return _predict_flat(img.ravel(), code, idx, acoefs).reshape(r1 - r0, c1 - c0)


def recover_region(img, ells, code, coefs, grid, r0, r1, c0, c1):
    if r1 <= r0 or c1 <= c0:
        return
    flat = img.reshape(-1)  # view: writes land in img
    rows, cols = np.mgrid[r0:r1, c0:c1]
    rows = rows.ravel()
    cols = cols.ravel()
    ell = np.asarray(ells, dtype=np.int64).ravel()
    front = 2 * rows + cols
    order = np.argsort(front, kind="stable")
    bounds = np.flatnonzero(np.diff(front[order])) + 1
    idx = _neighbour_index(img.shape, rows, cols)
    acoefs = _coef_columns(code, coefs, grid, rows, cols)
    target = rows * img.shape[1] + cols
    for sel in np.split(order, bounds):
        pred = _predict_flat(flat, code, idx, acoefs, sel)
        flat[target[sel]] = recover_values(flat[target[sel]].astype(np.int64), pred, ell[sel])


def recover_values(decrypted, predicted, ell):
    """Array form of :func:`scalar.recover_value`."""
    decrypted = np.asarray(decrypted, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    ell = np.asarray(ell, dtype=np.int64)
    span = np.left_shift(1, 8 - np.clip(ell, 0, 8))
    mask = span - 1
    h = (decrypted & mask) | (predicted & (255 ^ mask))
    err = h - predicted
    fixed = np.where(np.abs(err) < span // 2, h, np.where(err < 0, h + span, h - span))
    return np.where(ell == 0, decrypted, np.where(ell == 8, predicted, fixed))


def walk_labels(blocks, b0, code0, mask):
    K, I = blocks.shape
    total = 3 * K
    shifts = np.arange(7, -1, -1)
    bits = np.zeros(total, dtype=np.int64)
    weights = np.array([4, 2, 1])
    nread = 0
    codes = np.full(K, -1, dtype=np.int64)
    known = 0

    def consume(k, ell):
        nonlocal nread, known
        if ell == 0 or nread >= total:
            return
        px = blocks[k].astype(np.int64)
        b = ((px[:, None] >> shifts[None, :ell]) & 1).ravel()[: total - nread]
        bits[nread : nread + b.size] = b ^ mask[nread : nread + b.size]
        nread += b.size
        n3 = nread // 3
        if n3 > known:
            codes[known:n3] = bits[3 * known : 3 * n3].reshape(-1, 3) @ weights
            known = n3

    consume(b0, scalar.decode_label(code0))
    for k in range(K):
        if nread >= total:
            break
        if k == b0:
            continue
        if nread < 3 * (k + 1):
            return codes, 1
        consume(k, scalar.decode_label(int(codes[k])))
    if nread < total:
        return codes, 1
    if codes[b0] != code0:
        return codes, 2
    return codes, 0
