import numpy as np
from numba import njit

from . import scalar

_predict = scalar.predict_scalar
_recover = scalar.recover_value
_decode_label = scalar.decode_label


@njit(cache=True)
def _clamp(v, hi):
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


@njit(cache=True)
def _predict_at(img, r, c, code, coefs, grid):
    H, W = img.shape
    r1 = _clamp(r - 1, H - 1)
    r2 = _clamp(r - 2, H - 1)
    rs = _clamp(r + 1, H - 1)
    cw = _clamp(c - 1, W - 1)
    cww = _clamp(c - 2, W - 1)
    ce = _clamp(c + 1, W - 1)
    a1 = 0
    a2 = 0
    a3 = 0
    a4 = 0
    if code == scalar.AL:
        cy = r // grid
        cx = c // grid
        a1 = coefs[cy, cx, 0]
        a2 = coefs[cy, cx, 1]
        a3 = coefs[cy, cx, 2]
        a4 = coefs[cy, cx, 3]
    return _predict(
        code,
        np.int64(img[r, cww]),
        np.int64(img[r, cw]),
        np.int64(img[r1, cw]),
        np.int64(img[r1, c]),
        np.int64(img[r1, ce]),
        np.int64(img[r2, c]),
        np.int64(img[r2, ce]),
        np.int64(img[r, ce]),
        np.int64(img[rs, c]),
        a1,
        a2,
        a3,
        a4,
    )


@njit(cache=True)
def predict_region(img, code, coefs, grid, r0, r1, c0, c1):
    out = np.empty((r1 - r0, c1 - c0), dtype=np.int64)
    for r in range(r0, r1):
        for c in range(c0, c1):
            out[r - r0, c - c0] = _predict_at(img, r, c, code, coefs, grid)
    return out


@njit(cache=True)
def recover_region(img, ells, code, coefs, grid, r0, r1, c0, c1):
    # raster order: every neighbour read below is already final
    for r in range(r0, r1):
        for c in range(c0, c1):
            ell = ells[r - r0, c - c0]
            pred = _predict_at(img, r, c, code, coefs, grid)
            img[r, c] = _recover(np.int64(img[r, c]), pred, ell)


@njit(cache=True)
def walk_labels(blocks, b0, code0, mask):
    K, I = blocks.shape
    total = 3 * K
    bits = np.zeros(total, dtype=np.uint8)
    codes = np.full(K, -1, dtype=np.int64)
    nread = 0
    status = 0
    for step in range(K):
        if nread >= total:
            break
        if step == 0:
            k = b0
            ell = _decode_label(code0)
        else:
            k = step - 1
            if k >= b0:
                k += 1
            if nread < 3 * (k + 1):
                status = 1
                break
            ell = _decode_label(codes[k])
        for i in range(I):
            px = blocks[k, i]
            for j in range(ell):
                if nread < total:
                    bits[nread] = ((px >> (7 - j)) & 1) ^ mask[nread]
                    nread += 1
                    if nread % 3 == 0:
                        t = nread // 3 - 1
                        codes[t] = 4 * bits[nread - 3] + 2 * bits[nread - 2] + bits[nread - 1]
    if status == 0 and nread < total:
        status = 1
    if status == 0 and codes[b0] != code0:
        status = 2
    return codes, status
