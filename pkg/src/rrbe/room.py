"""Room reservation before encryption: prediction errors, blocks, labels, capacity."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .image import check_image
from .predict import (
    COEF_BITS,
    PredictorKind,
    cells_in_region,
    fit_coef_table,
)

LABEL_BITS = 3
FIRST_ROW = 2
FIRST_COL = 2


class RegionTooSmall(ValueError):
    pass


@dataclass(frozen=True)
class TargetRegion:
    """Embeddable rectangle ``[r0, r1) x [c0, c1)`` of an image of the given size."""

    height: int
    width: int
    r0: int
    r1: int
    c0: int
    c1: int

    @classmethod
    def for_image(cls, height: int, width: int, q: int = 1, w: int = 1) -> "TargetRegion":
        """Rows and columns from 2 on, cropped bottom/right to a multiple of ``q`` x ``w``."""
        if q < 1 or w < 1:
            raise ValueError("block dimensions must be positive")
        rows = (height - FIRST_ROW) // q * q
        cols = (width - FIRST_COL) // w * w
        if rows <= 0 or cols <= 0:
            raise RegionTooSmall(
                f"{height - FIRST_ROW}x{width - FIRST_COL} target area cannot hold a {q}x{w} block"
            )
        return cls(height, width, FIRST_ROW, FIRST_ROW + rows, FIRST_COL, FIRST_COL + cols)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.r1 - self.r0, self.c1 - self.c0)

    @property
    def size(self) -> int:
        return (self.r1 - self.r0) * (self.c1 - self.c0)

    def mask(self) -> np.ndarray:
        m = np.zeros((self.height, self.width), dtype=bool)
        m[self.r0 : self.r1, self.c0 : self.c1] = True
        return m


@dataclass(frozen=True)
class BlockGrid:
    region: TargetRegion
    q: int
    w: int

    @property
    def rows(self) -> int:
        return (self.region.r1 - self.region.r0) // self.q

    @property
    def cols(self) -> int:
        return (self.region.c1 - self.region.c0) // self.w

    @property
    def K(self) -> int:
        return self.rows * self.cols

    @property
    def I(self) -> int:  # noqa: E743
        return self.q * self.w

    def to_blocks(self, arr: np.ndarray) -> np.ndarray:
        """Reshape a region-shaped array to ``(K, q*w)`` in block-major, in-block raster order."""
        a = np.asarray(arr).reshape(self.rows, self.q, self.cols, self.w)
        return a.transpose(0, 2, 1, 3).reshape(self.K, self.I)

    def from_blocks(self, blocks: np.ndarray) -> np.ndarray:
        a = np.asarray(blocks).reshape(self.rows, self.cols, self.q, self.w)
        return a.transpose(0, 2, 1, 3).reshape(self.region.shape)

    def block_pixels(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        """Image coordinates of block ``k``'s pixels, in-block raster order."""
        br, bc = divmod(k, self.cols)
        rr, cc = np.mgrid[0 : self.q, 0 : self.w]
        return (self.region.r0 + br * self.q + rr.ravel(), self.region.c0 + bc * self.w + cc.ravel())

    def pixel_index(self) -> np.ndarray:
        """``(K, q*w)`` flat image indices of every block pixel."""
        r = self.region
        rows, cols = np.mgrid[r.r0 : r.r1, r.c0 : r.c1]
        return self.to_blocks(rows * r.width + cols)


def partition_blocks(region: TargetRegion, q: int, w: int) -> BlockGrid:
    if q < 1 or w < 1:
        raise ValueError("block dimensions must be positive")
    rh, rw = region.shape
    if rh < q or rw < w:
        raise RegionTooSmall(f"{rh}x{rw} region cannot hold a {q}x{w} block")
    cropped = TargetRegion(
        region.height, region.width, region.r0, region.r0 + rh // q * q,
        region.c0, region.c0 + rw // w * w,
    )
    return BlockGrid(cropped, q, w)


@dataclass
class CoefTable:
    """Quantised AL coefficient codes, one row of four per grid cell."""

    codes: np.ndarray  # (ny, nx, 4) int64
    cell: int
    n_clamped: int = 0


def fit_table(img, kind: PredictorKind, region: TargetRegion) -> CoefTable | None:
    if not kind.adaptive:
        return None
    codes, cell, n_clamped = fit_coef_table(img, kind, region.r0, region.r1, region.c0, region.c1)
    return CoefTable(codes, cell, n_clamped)


def _kernel_coefs(table: CoefTable | None):
    if table is None:
        return np.zeros((1, 1, 4), dtype=np.int64), 1 << 30
    return np.ascontiguousarray(table.codes, dtype=np.int64), table.cell


def predict_targets(img, kind: PredictorKind, region: TargetRegion, table: CoefTable | None = None,
                    backend=None) -> np.ndarray:
    """Predicted value of every pixel in ``region`` from the (original) image."""
    kind = PredictorKind(kind)
    if kind.adaptive and table is None:
        raise ValueError(f"{kind.value} needs a coefficient table")
    impl = backend or kernels
    coefs, cell = _kernel_coefs(table)
    img = np.ascontiguousarray(img, dtype=np.int64)
    return impl.predict_region(img, kind.kernel_code, coefs, cell,
                               region.r0, region.r1, region.c0, region.c1)


def compute_pe_map(img, kind: PredictorKind, region: TargetRegion,
                   table: CoefTable | None = None) -> np.ndarray:
    """Signed prediction errors over ``region`` (int16, region-shaped)."""
    img = check_image(img)
    pred = predict_targets(img, kind, region, table)
    sub = img[region.r0 : region.r1, region.c0 : region.c1].astype(np.int64)
    return (sub - pred).astype(np.int16)


def label_from_max(e_max) -> np.ndarray:
    """Label for a block whose largest |error| is ``e_max`` (vectorised)."""
    e_max = np.asarray(e_max, dtype=np.int64)
    n = np.zeros_like(e_max)
    for b in range(9):
        n = np.where(e_max >= (1 << b), b + 1, n)
    return np.where(n == 0, 8, np.maximum(0, 7 - n))


def encode_label(ell):
    ell = np.asarray(ell)
    if np.any((ell < 0) | (ell > 8) | (ell == 7)):
        raise ValueError("labels must lie in {0..6, 8}")
    return np.where(ell == 8, 7, ell)


def decode_label(code):
    code = np.asarray(code)
    if np.any((code < 0) | (code > 7)):
        raise ValueError("label codes are 3-bit")
    return np.where(code == 7, 8, code)


def label_block(block_errors) -> int:
    e = np.abs(np.asarray(block_errors, dtype=np.int64))
    if e.size == 0:
        raise ValueError("empty block")
    return int(encode_label(label_from_max(e.max())))


@dataclass
class LabelMap:
    codes: np.ndarray  # (K,) uint8 3-bit codes

    @property
    def K(self) -> int:
        return len(self.codes)

    @property
    def ells(self) -> np.ndarray:
        return decode_label(self.codes).astype(np.int64)

    @classmethod
    def from_ells(cls, ells) -> "LabelMap":
        return cls(encode_label(np.asarray(ells)).astype(np.uint8))

    def __eq__(self, other):
        return isinstance(other, LabelMap) and np.array_equal(self.codes, other.codes)


def label_blocks(pe: np.ndarray, grid: BlockGrid) -> LabelMap:
    e_max = np.abs(grid.to_blocks(pe).astype(np.int64)).max(axis=1)
    return LabelMap.from_ells(label_from_max(e_max))


def coefficient_overhead(kind: PredictorKind, region: TargetRegion) -> int:
    """Bits charged for AL coefficients: 4 x 15 per cell, blocked variants only."""
    kind = PredictorKind(kind)
    if kind.grid_size is None:
        return 0
    n = cells_in_region(region.height, region.width, kind.grid_size,
                        region.r0, region.r1, region.c0, region.c1)
    return 4 * COEF_BITS * n


@dataclass
class CapacityReport:
    block_capacity: np.ndarray = field(repr=False)
    C: int
    K: int
    label_overhead: int
    coef_overhead: int
    C_p: int
    ER: float
    clamped: bool
    n_pixels: int

    @property
    def overhead(self) -> int:
        return self.label_overhead + self.coef_overhead


def capacity_report(labels: LabelMap, grid: BlockGrid, kind: PredictorKind) -> CapacityReport:
    cap = labels.ells * grid.I
    C = int(cap.sum())
    K = labels.K
    coef = coefficient_overhead(PredictorKind(kind), grid.region)
    raw = C - LABEL_BITS * K - coef
    n_pixels = grid.region.height * grid.region.width
    C_p = max(raw, 0)
    return CapacityReport(cap, C, K, LABEL_BITS * K, coef, C_p, C_p / n_pixels, raw < 0, n_pixels)


@dataclass
class Analysis:
    """Everything the content owner derives from the plaintext before encryption."""

    kind: PredictorKind
    grid: BlockGrid
    table: CoefTable | None
    pe: np.ndarray
    labels: LabelMap
    report: CapacityReport


def analyze(img, kind, q: int, w: int) -> Analysis:
    img = check_image(img)
    kind = PredictorKind(kind)
    region = TargetRegion.for_image(*img.shape, q, w)
    grid = partition_blocks(region, q, w)
    table = fit_table(img, kind, grid.region)
    pe = compute_pe_map(img, kind, grid.region, table)
    labels = label_blocks(pe, grid)
    return Analysis(kind, grid, table, pe, labels, capacity_report(labels, grid, kind))
