"""Scalar reference kernels.

Plain-Python integer code that numba can compile unchanged. Every predictor
is evaluated as an exact rational (integer numerator over a fixed
denominator) and rounded half away from zero, so results never depend on
floating-point evaluation order.
"""

try:
    from numba.extending import register_jitable as _jitable
except ImportError:  # pragma: no cover
    def _jitable(fn):
        return fn

CB = 0
MED = 1
GAP = 2
SGAP = 3
L = 4
AL = 5

COEF_ONE = 8192  # fixed-point scale of AL coefficients (13 fractional bits)


@_jitable
def round_div(num, den):
    # den > 0
    if num >= 0:
        return (2 * num + den) // (2 * den)
    return -((-2 * num + den) // (2 * den))


@_jitable
def predict_scalar(code, ww, w, nw, n, ne, nn, nne, e, s, a1, a2, a3, a4):
    if code == CB:
        v = round_div(w + n + e + s, 4)
    elif code == MED:
        lo = min(w, n)
        hi = max(w, n)
        if nw <= lo:
            v = hi
        elif nw >= hi:
            v = lo
        else:
            v = w + n - nw
    elif code == GAP:
        dv = abs(w - nw) + abs(ne - nne) + abs(n - nn)
        dh = abs(w - ww) + abs(ne - n) + abs(n - nw)
        d = dv - dh
        u4 = 2 * w + 2 * n + ne - nw  # 4u
        if d > 80:
            v = w
        elif d > 32:
            v = round_div(4 * w + u4, 8)
        elif d > 8:
            v = round_div(4 * w + 3 * u4, 16)
        elif d >= -8:
            v = round_div(u4, 4)
        elif d >= -32:
            v = round_div(4 * n + 3 * u4, 16)
        elif d >= -80:
            v = round_div(4 * n + u4, 8)
        else:
            v = n
    elif code == SGAP:
        v = round_div(2 * w - nw + 2 * n + ne, 4)
    elif code == L:
        v = round_div(7 * w - 3 * nw + 5 * n + ne, 10)
    else:
        v = round_div(a1 * w + a2 * nw + a3 * n + a4 * ne, COEF_ONE)
    if v < 0:
        return 0
    if v > 255:
        return 255
    return v


@_jitable
def recover_value(decrypted, predicted, ell):
    """Merge low bits of the decrypted pixel with the prediction's MSBs, then correct."""
    if ell == 0:
        return decrypted
    if ell == 8:
        return predicted
    span = 1 << (8 - ell)
    mask = span - 1
    h = (decrypted & mask) | (predicted & (255 ^ mask))
    err = h - predicted
    if abs(err) < (span >> 1):
        return h
    if err < 0:
        return h + span
    return h - span


@_jitable
def decode_label(code):
    if code == 7:
        return 8
    return code
