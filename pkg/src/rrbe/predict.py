"""Pixel predictors and least-squares fitting of adaptive linear coefficients.

Neighbour naming (target at ``(r, c)``)::

            nn   nne
       nw   n    ne
    ww  w   *    e
            s

Only ``cb`` reads ``e`` and ``s``; every other predictor is causal.
Out-of-image neighbours are clamped to the nearest in-image pixel.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .kernels import scalar

COEF_FRAC_BITS = 13
COEF_BITS = 15  # sign + 14-bit magnitude per stored coefficient
COEF_MAX_CODE = (1 << (COEF_BITS - 1)) - 1
COEF_QUANTUM = 2.0**-COEF_FRAC_BITS

L_COEFS = (0.7, -0.3, 0.5, 0.1)
SGAP_COEFS = (0.5, -0.25, 0.5, 0.25)

SINGULAR_COND = 1e12
SINGULAR_PIVOT = 1e-9


class InsufficientSamples(ValueError):
    pass


class PredictorKind(enum.Enum):
    CB = "cb"
    MED = "med"
    GAP = "gap"
    SGAP = "sgap"
    L = "l"
    AL = "al"
    AL16 = "al16"
    AL32 = "al32"
    AL64 = "al64"

    @property
    def tag(self) -> int:
        return list(PredictorKind).index(self)

    @classmethod
    def from_tag(cls, tag: int) -> "PredictorKind":
        try:
            return list(cls)[tag]
        except IndexError:
            raise ValueError(f"unknown predictor tag {tag}") from None

    @property
    def adaptive(self) -> bool:
        return self.value.startswith("al")

    @property
    def causal(self) -> bool:
        return self is not PredictorKind.CB

    @property
    def grid_size(self) -> int | None:
        """Side of the square coefficient cells, or None for a single global fit."""
        if not self.adaptive or self is PredictorKind.AL:
            return None
        return int(self.value[2:])

    @property
    def kernel_code(self) -> int:
        return {
            PredictorKind.CB: scalar.CB,
            PredictorKind.MED: scalar.MED,
            PredictorKind.GAP: scalar.GAP,
            PredictorKind.SGAP: scalar.SGAP,
            PredictorKind.L: scalar.L,
        }.get(self, scalar.AL)


class Neighborhood(NamedTuple):
    ww: int
    w: int
    nw: int
    n: int
    ne: int
    nn: int
    nne: int
    e: int
    s: int


@dataclass(frozen=True)
class CoefVector:
    """Four fixed-point coefficients for (w, nw, n, ne), stored as signed integer codes."""

    codes: tuple[int, int, int, int]

    def __post_init__(self):
        if len(self.codes) != 4:
            raise ValueError("a coefficient vector has four entries")
        for c in self.codes:
            if abs(c) > COEF_MAX_CODE:
                raise ValueError(f"coefficient code {c} exceeds {COEF_BITS}-bit sign-magnitude")

    def values(self) -> np.ndarray:
        return dequantize(self)


def quantize(coefs) -> CoefVector:
    """Round to the nearest multiple of 2**-13 (half away from zero), saturating."""
    out = []
    for a in np.asarray(coefs, dtype=np.float64):
        mag = int(np.floor(abs(a) * (1 << COEF_FRAC_BITS) + 0.5))
        mag = min(mag, COEF_MAX_CODE)
        out.append(-mag if a < 0 else mag)
    return CoefVector(tuple(out))


def dequantize(cv: CoefVector) -> np.ndarray:
    return np.asarray(cv.codes, dtype=np.float64) * COEF_QUANTUM


def was_clamped(coefs) -> bool:
    return bool(np.any(np.abs(np.asarray(coefs, dtype=np.float64)) * (1 << COEF_FRAC_BITS) + 0.5
                       >= COEF_MAX_CODE + 1))


def pack_codes(codes) -> int:
    """15-bit sign-magnitude word for one coefficient code."""
    code = int(codes)
    return (1 << (COEF_BITS - 1) if code < 0 else 0) | abs(code)


def unpack_code(word: int) -> int:
    mag = word & COEF_MAX_CODE
    return -mag if word >> (COEF_BITS - 1) else mag


L_VECTOR = quantize(L_COEFS)


def gather_neighborhood(img, row: int, col: int) -> Neighborhood:
    img = np.asarray(img)
    H, W = img.shape
    if not (0 <= row < H and 0 <= col < W):
        raise IndexError(f"({row}, {col}) outside {H}x{W} image")

    def px(r, c):
        return int(img[min(max(r, 0), H - 1), min(max(c, 0), W - 1)])

    return Neighborhood(
        ww=px(row, col - 2),
        w=px(row, col - 1),
        nw=px(row - 1, col - 1),
        n=px(row - 1, col),
        ne=px(row - 1, col + 1),
        nn=px(row - 2, col),
        nne=px(row - 2, col + 1),
        e=px(row, col + 1),
        s=px(row + 1, col),
    )


def predict(kind: PredictorKind, nbhd: Neighborhood, coefs: CoefVector | None = None) -> int:
    kind = PredictorKind(kind)
    if kind.adaptive:
        if coefs is None:
            raise ValueError(f"{kind.value} prediction needs a coefficient vector")
        a = coefs.codes
    else:
        if coefs is not None:
            raise ValueError(f"{kind.value} takes no coefficients")
        a = (0, 0, 0, 0)
    n = nbhd
    return scalar.predict_scalar(kind.kernel_code, n.ww, n.w, n.nw, n.n, n.ne, n.nn, n.nne,
                                 n.e, n.s, *a)


@dataclass
class RegressionSystem:
    """Rows of X are (w, nw, n, ne) for each target; Y holds the targets."""

    X: np.ndarray
    Y: np.ndarray

    @property
    def T(self) -> int:
        return len(self.Y)

    def moments(self):
        X = np.asarray(self.X)
        Y = np.asarray(self.Y)
        # integer pixel data stays exact in int64; anything else is solved in float
        dt = np.int64 if X.dtype.kind in "iu" and Y.dtype.kind in "iu" else np.float64
        X = X.astype(dt)
        return X.T @ X, X.T @ Y.astype(dt)


def _solve_4x4(xtx: np.ndarray, xty: np.ndarray) -> np.ndarray | None:
    """Gaussian elimination with partial pivoting; None when the system is singular."""
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.linalg.cond(xtx)
    if not np.isfinite(cond) or cond > SINGULAR_COND:
        return None
    M = np.hstack([xtx.astype(np.float64), xty.astype(np.float64)[:, None]])
    n = 4
    for col in range(n):
        piv = col + int(np.argmax(np.abs(M[col:, col])))
        if abs(M[piv, col]) < SINGULAR_PIVOT:
            return None
        if piv != col:
            M[[col, piv]] = M[[piv, col]]
        M[col + 1 :] -= np.outer(M[col + 1 :, col] / M[col, col], M[col])
    a = np.zeros(n)
    for row in range(n - 1, -1, -1):
        a[row] = (M[row, n] - M[row, row + 1 : n] @ a[row + 1 :]) / M[row, row]
    return a


def solve_least_squares(sys: RegressionSystem) -> np.ndarray | None:
    """Unquantised normal-equation solution, or None if X'X is singular."""
    if sys.T < 4:
        raise InsufficientSamples(f"need at least 4 samples, got {sys.T}")
    return _solve_4x4(*sys.moments())


def fit_coefficients(sys: RegressionSystem) -> CoefVector:
    a = solve_least_squares(sys)
    if a is None:
        return L_VECTOR
    return quantize(a)


def regression_rows(img, rows, cols):
    """Stack (w, nw, n, ne) neighbour rows for the given target coordinates."""
    img = np.asarray(img, dtype=np.int64)
    H, W = img.shape
    rows = np.asarray(rows)
    cols = np.asarray(cols)
    r1 = np.clip(rows - 1, 0, H - 1)
    X = np.stack(
        [
            img[rows, np.clip(cols - 1, 0, W - 1)],
            img[r1, np.clip(cols - 1, 0, W - 1)],
            img[r1, cols],
            img[r1, np.clip(cols + 1, 0, W - 1)],
        ],
        axis=1,
    )
    return X, img[rows, cols]


def coef_table_shape(height: int, width: int, grid: int | None) -> tuple[int, int]:
    if grid is None:
        return (1, 1)
    return (-(-height // grid), -(-width // grid))


def fit_coef_table(img, kind: PredictorKind, r0: int, r1: int, c0: int, c1: int):
    """Fit one coefficient vector per grid cell over the target rectangle.

    Returns ``(codes, cell, n_clamped)``: ``codes`` has shape ``(ny, nx, 4)``,
    ``cell`` is the side used to index it (the full image for a global fit) and
    ``n_clamped`` counts cells whose solution saturated the fixed-point range.
    Cells with fewer than four targets or a singular system get the fixed L vector.
    """
    img = np.asarray(img)
    H, W = img.shape
    grid = kind.grid_size
    ny, nx = coef_table_shape(H, W, grid)
    cell = grid if grid is not None else max(H, W)
    rows, cols = np.mgrid[r0:r1, c0:c1]
    rows = rows.ravel()
    cols = cols.ravel()
    X, Y = regression_rows(img, rows, cols)
    cid = (rows // cell) * nx + cols // cell
    ncell = ny * nx
    # per-cell X'X and X'Y via bincount over the outer products
    xtx = np.zeros((ncell, 4, 4), dtype=np.int64)
    xty = np.zeros((ncell, 4), dtype=np.int64)
    for i in range(4):
        xty[:, i] = np.bincount(cid, weights=X[:, i] * Y, minlength=ncell).astype(np.int64)
        for j in range(i, 4):
            s = np.bincount(cid, weights=X[:, i] * X[:, j], minlength=ncell).astype(np.int64)
            xtx[:, i, j] = s
            xtx[:, j, i] = s
    counts = np.bincount(cid, minlength=ncell)
    table = np.empty((ncell, 4), dtype=np.int64)
    n_clamped = 0
    for k in range(ncell):
        a = _solve_4x4(xtx[k], xty[k]) if counts[k] >= 4 else None
        if a is None:
            table[k] = L_VECTOR.codes
        else:
            n_clamped += was_clamped(a)
            table[k] = quantize(a).codes
    return table.reshape(ny, nx, 4), cell, n_clamped


def cells_in_region(height, width, grid, r0, r1, c0, c1) -> int:
    """Number of coefficient cells that intersect the target rectangle."""
    if grid is None:
        return 1
    return (-(-r1 // grid) - r0 // grid) * (-(-c1 // grid) - c0 // grid)
