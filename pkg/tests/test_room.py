import numpy as np
import pytest

from rrbe.predict import PredictorKind
from rrbe.room import (
    LabelMap,
    RegionTooSmall,
    TargetRegion,
    analyze,
    capacity_report,
    coefficient_overhead,
    compute_pe_map,
    decode_label,
    encode_label,
    fit_table,
    label_block,
    label_from_max,
    partition_blocks,
)


def test_region_512():
    r = TargetRegion.for_image(512, 512, 2, 4)
    assert (r.r0, r.c0) == (2, 2) and r.shape == (510, 508)
    assert partition_blocks(r, 2, 4).K == 255 * 127 == 32385


def test_region_small():
    # an image whose target area is 8x8
    r = TargetRegion.for_image(10, 10, 4, 4)
    assert r.shape == (8, 8) and partition_blocks(r, 4, 4).K == 4
    # 9x9 target area is cropped to 8x8, leaving 17 target pixels unembedded
    r = TargetRegion.for_image(11, 11, 4, 4)
    assert r.shape == (8, 8) and partition_blocks(r, 4, 4).K == 4
    assert 9 * 9 - r.size == 17
    assert r.mask().sum() == 64 and not r.mask()[0:2].any()


def test_region_too_small():
    with pytest.raises(RegionTooSmall):
        TargetRegion.for_image(8, 8, 7, 1)
    with pytest.raises(ValueError):
        TargetRegion.for_image(8, 8, 0, 1)


def test_block_grid_layout():
    r = TargetRegion.for_image(10, 14, 2, 4)  # 8 x 12 target area: 4 x 3 blocks
    g = partition_blocks(r, 2, 4)
    assert (g.rows, g.cols, g.K, g.I) == (4, 3, 12, 8)
    idx = g.pixel_index()
    # block 1 is the second tile of the first block row
    assert idx[1].tolist() == [2 * 14 + 6, 2 * 14 + 7, 2 * 14 + 8, 2 * 14 + 9,
                               3 * 14 + 6, 3 * 14 + 7, 3 * 14 + 8, 3 * 14 + 9]
    rr, cc = g.block_pixels(1)
    assert np.array_equal(rr * 14 + cc, idx[1])
    a = np.arange(r.size).reshape(r.shape)
    assert np.array_equal(g.from_blocks(g.to_blocks(a)), a)


@pytest.mark.parametrize("e_max,ell,code", [(0, 8, 7), (1, 6, 6), (2, 5, 5), (3, 5, 5),
                                            (5, 4, 4), (63, 1, 1), (64, 0, 0), (100, 0, 0),
                                            (200, 0, 0), (255, 0, 0)])
def test_labels(e_max, ell, code):
    assert label_from_max(e_max) == ell
    assert encode_label(ell) == code
    assert decode_label(code) == ell


def test_label_rule_matches_bound():
    # the label must leave room for |e| < 2**(8 - l - 1) and be the largest such l
    for e in range(256):
        ell = int(label_from_max(e))
        if ell == 8:
            assert e == 0
            continue
        if ell:
            assert e < 2 ** (8 - ell - 1)
        if ell < 6:
            assert e >= 2 ** (8 - (ell + 1) - 1)


def test_label_block_and_codes():
    assert label_block([0, 0, 0]) == 7
    assert label_block([3, -5, 1]) == 4
    with pytest.raises(ValueError):
        encode_label(7)
    with pytest.raises(ValueError):
        decode_label(8)
    lm = LabelMap.from_ells([2, 0, 8, 2])
    assert lm.codes.tolist() == [2, 0, 7, 2] and lm.ells.tolist() == [2, 0, 8, 2]


def test_capacity_single_block():
    g = partition_blocks(TargetRegion.for_image(4, 6, 2, 4), 2, 4)
    rep = capacity_report(LabelMap.from_ells([4]), g, PredictorKind.GAP)
    assert g.K == 1 and rep.C == 32 and rep.C_p == 32 - 3


def test_capacity_identity():
    # ten blocks whose capacities sum to 1000 bits
    g = partition_blocks(TargetRegion.for_image(22, 12, 2, 10), 2, 10)
    assert g.K == 10
    ells = [5, 5, 5, 5, 5, 5, 5, 5, 5, 5]
    rep = capacity_report(LabelMap.from_ells(ells), g, PredictorKind.GAP)
    assert rep.C == 1000 and rep.C_p == 970 and rep.overhead == 30


def test_coefficient_overhead():
    r = TargetRegion.for_image(512, 512, 2, 4)
    assert coefficient_overhead(PredictorKind.GAP, r) == 0
    assert coefficient_overhead(PredictorKind.AL, r) == 0
    assert coefficient_overhead(PredictorKind.AL32, r) == 16 * 16 * 60
    assert coefficient_overhead(PredictorKind.AL64, r) == 8 * 8 * 60
    # a region starting at row/col 2 still touches every 16-cell of a 512 image
    assert coefficient_overhead(PredictorKind.AL16, r) == 32 * 32 * 60


@pytest.mark.parametrize("kind", list(PredictorKind))
def test_constant_image(kind):
    img = np.full((512, 512), 93, np.uint8)
    a = analyze(img, kind, 2, 4)
    assert not a.pe.any()
    assert (a.labels.ells == 8).all()
    region_pixels = 510 * 508
    assert a.report.C == 8 * region_pixels
    assert a.report.C_p == a.report.C - 3 * a.grid.K - a.report.coef_overhead


def test_ramp_l_interior():
    img = np.tile(np.arange(64, dtype=np.uint8), (64, 1))
    r = TargetRegion.for_image(64, 64)
    pe = compute_pe_map(img, PredictorKind.L, r)
    assert not pe[:, :-1].any()  # last column clamps NE and is excluded


def _med_reference(img):
    """Plain loop MED written from scratch, no package helpers."""
    img = img.astype(int)
    H, W = img.shape
    total = 0
    for r in range(2, H):
        for c in range(2, W):
            a, b, cc = img[r, c - 1], img[r - 1, c], img[r - 1, c - 1]
            if cc >= max(a, b):
                p = min(a, b)
            elif cc <= min(a, b):
                p = max(a, b)
            else:
                p = a + b - cc
            total += abs(img[r, c] - p)
    return total


def test_med_mean_error_oracle(lena):
    pe = compute_pe_map(lena, PredictorKind.MED, TargetRegion.for_image(*lena.shape))
    assert int(np.abs(pe.astype(np.int64)).sum()) == _med_reference(lena)


def test_labels_from_pe(patch):
    a = analyze(patch, "gap", 2, 4)
    blocks = a.grid.to_blocks(a.pe.astype(np.int64))
    for k in range(a.grid.K):
        assert a.labels.codes[k] == label_block(blocks[k])
    assert a.report.C == int((a.labels.ells * 8).sum())
    assert a.report.ER == a.report.C_p / (64 * 64)


def test_adaptive_needs_table(patch):
    r = TargetRegion.for_image(*patch.shape)
    with pytest.raises(ValueError):
        compute_pe_map(patch, PredictorKind.AL32, r)
    assert fit_table(patch, PredictorKind.GAP, r) is None
    t = fit_table(patch, PredictorKind.AL32, r)
    assert t.codes.shape == (2, 2, 4)
