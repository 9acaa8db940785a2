"""Embedding into encrypted pixels, separable extraction, and lossless recovery.

Bit stream written into the marked image, slot by slot along the schedule::

    label codes c_1..c_K (3 bits each, block-index order)
    saved encrypted values of pixels (0,0), (0,1), (0,2)   24 bits
    payload length                                          32 bits
    payload                                                 n bits
    zero fill up to the total capacity C

The schedule visits the start block first, then every other block with a
non-zero label in index order; each pixel of a block contributes its block's
label-many MSB slots. The three first pixels carry a 24-bit header: the
start block index (21 bits) and its label code (3 bits).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import kernels
from .cipher import KeyMaterial, keystream_bits, xor_bits, xor_image
from .image import check_image, low_mask
from .kernels import scalar
from .predict import COEF_BITS, PredictorKind, coef_table_shape, pack_codes, unpack_code
from .room import (
    LABEL_BITS,
    Analysis,
    BlockGrid,
    CoefTable,
    LabelMap,
    TargetRegion,
    _kernel_coefs,
    analyze,
    coefficient_overhead,
    partition_blocks,
)

HEADER_PIXELS = 3
HEADER_BITS = 24
INDEX_BITS = 21
LENGTH_BITS = 32
FRAME_BITS = HEADER_BITS + LENGTH_BITS  # saved header pixels + length field
MAGIC = b"RRBE1"

FLAG_KS = 1
FLAG_AL = 2


class CodecError(ValueError):
    pass


class NoCapacity(CodecError):
    pass


class InfeasibleLabelChain(CodecError):
    pass


class PayloadTooLarge(CodecError):
    def __init__(self, requested: int, max_bits: int):
        super().__init__(f"payload of {requested} bits exceeds the maximum of {max_bits} bits")
        self.requested = requested
        self.max_bits = max_bits


class NonCausalPredictor(CodecError):
    """The predictor cannot be evaluated during sequential recovery."""


class CorruptHeader(CodecError):
    pass


class CorruptStream(CodecError):
    pass


class FormatError(CodecError):
    pass


def bytes_to_bits(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def int_to_bits(value: int, nbits: int) -> np.ndarray:
    return np.array([(value >> (nbits - 1 - i)) & 1 for i in range(nbits)], dtype=np.uint8)


def bits_to_int(bits) -> int:
    v = 0
    for b in np.asarray(bits, dtype=np.int64):
        v = (v << 1) | int(b)
    return v


@dataclass(frozen=True)
class Header:
    start_block: int
    start_code: int

    def __post_init__(self):
        if not 0 <= self.start_block < 1 << INDEX_BITS:
            raise ValueError("start block index does not fit in 21 bits")
        if not 0 <= self.start_code < 8:
            raise ValueError("label code is 3-bit")

    def bits(self) -> np.ndarray:
        return int_to_bits((self.start_block << LABEL_BITS) | self.start_code, HEADER_BITS)

    @classmethod
    def from_bits(cls, bits) -> "Header":
        v = bits_to_int(bits)
        return cls(v >> LABEL_BITS, v & 7)


@dataclass
class EmbedSchedule:
    """Slot order shared by embedder and (once labels are known) extractor."""

    order: np.ndarray  # blocks in visiting order (non-zero labels only)
    pixels: np.ndarray  # flat image index of each visited pixel
    nbits: np.ndarray  # MSB slots per visited pixel
    offsets: np.ndarray  # first stream bit of each visited pixel

    @property
    def total(self) -> int:
        return int(self.nbits.sum())

    def slot_pixels(self) -> np.ndarray:
        return np.repeat(self.pixels, self.nbits)

    def slot_bit(self) -> np.ndarray:
        """Bit position (7 = MSB) addressed by every slot."""
        j = np.arange(self.total) - np.repeat(self.offsets, self.nbits)
        return 7 - j

    def slot_blocks(self, I: int) -> np.ndarray:
        return np.repeat(np.repeat(self.order, I), self.nbits)


def start_block(labels: LabelMap) -> int:
    ells = labels.ells
    if not np.any(ells > 0):
        raise NoCapacity("every block has label 0")
    return int(np.argmax(ells))  # first index among ties


def check_chain(ells: np.ndarray, I: int, b0: int) -> None:
    """Raise InfeasibleLabelChain unless a decoder starting at ``b0`` never starves."""
    K = len(ells)
    need_total = LABEL_BITS * K
    rest = np.delete(np.arange(K), b0)
    gained = np.concatenate([[ells[b0] * I], ells[rest] * I])
    have = np.cumsum(gained)[:-1]  # label bits decodable before visiting rest[i]
    need = LABEL_BITS * (rest + 1)
    bad = (have < need) & (have < need_total)
    if np.any(bad):
        k = int(rest[np.argmax(bad)])
        raise InfeasibleLabelChain(
            f"label of block {k} is not decodable when the schedule reaches it"
        )
    if ells.sum() * I < need_total:
        raise InfeasibleLabelChain("total capacity is smaller than the label stream")


def build_schedule(labels: LabelMap, grid: BlockGrid) -> tuple[Header, EmbedSchedule]:
    ells = labels.ells
    if len(ells) != grid.K:
        raise ValueError("label map does not match the block grid")
    b0 = start_block(labels)
    check_chain(ells, grid.I, b0)
    rest = np.flatnonzero(ells > 0)
    order = np.concatenate([[b0], rest[rest != b0]]).astype(np.int64)
    pixels = grid.pixel_index()[order].ravel()
    nbits = np.repeat(ells[order], grid.I)
    offsets = np.cumsum(nbits) - nbits
    return Header(b0, int(labels.codes[b0])), EmbedSchedule(order, pixels, nbits, offsets)


def max_payload_bits(labels: LabelMap, grid: BlockGrid, kind: PredictorKind) -> int:
    C = int(labels.ells.sum()) * grid.I
    return C - LABEL_BITS * labels.K - coefficient_overhead(kind, grid.region) - FRAME_BITS


@dataclass
class MarkedImage:
    pixels: np.ndarray
    nonce: bytes
    kind: PredictorKind
    q: int
    w: int
    table: CoefTable | None = None
    ks_used: bool = False
    bits_written: int = 0  # stream bits set by embed (labels + container), not serialised

    @property
    def grid(self) -> BlockGrid:
        h, w = self.pixels.shape
        return partition_blocks(TargetRegion.for_image(h, w, self.q, self.w), self.q, self.w)


def _bind(key: KeyMaterial | None, nonce: bytes) -> KeyMaterial | None:
    # every stream of one image is keyed with that image's nonce
    return None if key is None else key.with_nonce(nonce)


def write_stream(enc: np.ndarray, sched: EmbedSchedule, stream: np.ndarray) -> np.ndarray:
    out = enc.copy()
    flat = out.reshape(-1)
    vals = np.add.reduceat(stream.astype(np.int64) << sched.slot_bit(), sched.offsets)
    px = sched.pixels
    flat[px] = (flat[px] & low_mask(sched.nbits)) | vals
    return out


def read_stream(marked: np.ndarray, sched: EmbedSchedule) -> np.ndarray:
    flat = marked.reshape(-1).astype(np.int64)
    return ((flat[sched.slot_pixels()] >> sched.slot_bit()) & 1).astype(np.uint8)


def embed(enc_img, labels: LabelMap, grid: BlockGrid, payload, *, kind: PredictorKind,
          nonce: bytes, table: CoefTable | None = None, K_d: KeyMaterial | None = None,
          K_s: KeyMaterial | None = None) -> MarkedImage:
    """Data-hider side: write labels and the payload container into an encrypted image."""
    enc = check_image(enc_img).copy()
    kind = PredictorKind(kind)
    if not kind.causal:
        raise NonCausalPredictor(f"{kind.value} reads pixels the decoder has not restored yet")
    payload = np.asarray(payload, dtype=np.uint8).ravel()
    if payload.size and payload.max() > 1:
        raise ValueError("payload must be a bit array")
    if len(payload) >= 1 << LENGTH_BITS:
        raise PayloadTooLarge(len(payload), (1 << LENGTH_BITS) - 1)
    if kind.adaptive != (table is not None):
        raise ValueError("a coefficient table is required exactly for AL predictors")
    header, sched = build_schedule(labels, grid)
    limit = max_payload_bits(labels, grid, kind)
    if len(payload) > limit:
        raise PayloadTooLarge(len(payload), max(limit, 0))

    K_d = _bind(K_d, nonce)
    K_s = _bind(K_s, nonce)
    label_bits = np.unpackbits(labels.codes.astype(np.uint8)[:, None], axis=1)[:, 5:].ravel()
    head_bits = header.bits()
    if K_s is not None:
        side = xor_bits(np.concatenate([head_bits, label_bits]), K_s)
        head_bits, label_bits = side[:HEADER_BITS], side[HEADER_BITS:]
    saved = np.unpackbits(enc.reshape(-1)[:HEADER_PIXELS])
    body = payload if K_d is None else xor_bits(payload, K_d)
    stream = np.zeros(sched.total, dtype=np.uint8)
    parts = [label_bits, saved, int_to_bits(len(payload), LENGTH_BITS), body]
    used = sum(len(p) for p in parts)
    stream[:used] = np.concatenate(parts)

    marked = write_stream(enc, sched, stream)
    marked.reshape(-1)[:HEADER_PIXELS] = np.packbits(head_bits)
    return MarkedImage(marked, nonce, kind, grid.q, grid.w, table, K_s is not None, used)


def read_header(marked: MarkedImage, K_s: KeyMaterial | None = None) -> Header:
    bits = np.unpackbits(marked.pixels.reshape(-1)[:HEADER_PIXELS])
    if K_s is not None:
        bits = xor_bits(bits, _bind(K_s, marked.nonce))
    return Header.from_bits(bits)


def recover_labels(marked: MarkedImage, K_s: KeyMaterial | None = None,
                   backend=None) -> tuple[LabelMap, Header]:
    """Decode the label map by walking the schedule from the header's start block."""
    grid = marked.grid
    header = read_header(marked, K_s)
    if header.start_block >= grid.K:
        raise CorruptHeader(f"start block {header.start_block} outside 0..{grid.K - 1}")
    if scalar.decode_label(header.start_code) == 0:
        raise CorruptHeader("start block has no capacity")
    if K_s is not None:
        mask = keystream_bits(_bind(K_s, marked.nonce), LABEL_BITS * grid.K, HEADER_BITS)
    else:
        mask = np.zeros(LABEL_BITS * grid.K, dtype=np.uint8)
    blocks = np.ascontiguousarray(marked.pixels.reshape(-1)[grid.pixel_index()])
    impl = backend or kernels
    codes, status = impl.walk_labels(blocks, header.start_block, header.start_code, mask)
    if status == 1:
        raise CorruptStream("label chain starved before all labels were decoded")
    if status == 2:
        raise CorruptStream("decoded start-block label disagrees with the header")
    return LabelMap(np.asarray(codes, dtype=np.uint8)), header


@dataclass
class Container:
    labels: LabelMap
    saved_pixels: np.ndarray
    payload_bits: np.ndarray  # as stored (still under K_d if one was used)


def read_container(marked: MarkedImage, K_s: KeyMaterial | None = None) -> Container:
    labels, _ = recover_labels(marked, K_s)
    grid = marked.grid
    _, sched = build_schedule(labels, grid)
    stream = read_stream(marked.pixels, sched)
    pos = LABEL_BITS * grid.K
    saved = np.packbits(stream[pos : pos + HEADER_BITS])
    pos += HEADER_BITS
    n = bits_to_int(stream[pos : pos + LENGTH_BITS])
    pos += LENGTH_BITS
    if n > max_payload_bits(labels, grid, marked.kind):
        raise CorruptStream(f"declared payload length {n} exceeds the capacity")
    return Container(labels, saved, stream[pos : pos + n])


def extract(marked: MarkedImage, K_d: KeyMaterial | None = None,
            K_s: KeyMaterial | None = None) -> np.ndarray:
    """Payload bits; needs only the data-hider key (and K_s if it was used)."""
    bits = read_container(marked, K_s).payload_bits
    if K_d is not None:
        bits = xor_bits(bits, _bind(K_d, marked.nonce))
    return bits


def recover_pixel(decrypted: int, predicted: int, ell: int) -> int:
    if ell not in (0, 1, 2, 3, 4, 5, 6, 8):
        raise ValueError(f"invalid label {ell}")
    if not 0 <= predicted <= 255 or not 0 <= decrypted <= 255:
        raise ValueError("intensities must lie in [0, 255]")
    return scalar.recover_value(decrypted, predicted, ell)


def recover_image(marked: MarkedImage, K_e: KeyMaterial, K_s: KeyMaterial | None = None,
                  backend=None) -> np.ndarray:
    """Content-owner side: restore the original image bit-exactly."""
    if marked.kind.adaptive and marked.table is None:
        raise ValueError("coefficient table unavailable; load the container with K_s")
    box = read_container(marked, K_s)
    grid = marked.grid
    img = marked.pixels.copy()
    img.reshape(-1)[:HEADER_PIXELS] = box.saved_pixels
    img = np.ascontiguousarray(xor_image(img, _bind(K_e, marked.nonce)))
    ells = grid.from_blocks(np.repeat(box.labels.ells[:, None], grid.I, axis=1))
    ells = np.ascontiguousarray(ells, dtype=np.int64)
    kind = marked.kind
    coefs, cell = _kernel_coefs(marked.table)
    r = grid.region
    impl = backend or kernels
    impl.recover_region(img, ells, kind.kernel_code, coefs, cell, r.r0, r.r1, r.c0, r.c1)
    return img


def encode(img, payload, kind, q: int, w: int, K_e: KeyMaterial, K_d: KeyMaterial | None = None,
           K_s: KeyMaterial | None = None, analysis: Analysis | None = None) -> MarkedImage:
    """Whole sender pipeline: analyse, encrypt under ``K_e``, then embed."""
    img = check_image(img)
    if analysis is None:
        analysis = analyze(img, kind, q, w)
    enc = xor_image(img, K_e)
    return embed(enc, analysis.labels, analysis.grid, payload, kind=analysis.kind,
                 nonce=K_e.nonce, table=analysis.table, K_d=K_d, K_s=K_s)


# --- container file ------------------------------------------------------------

_FIXED = struct.Struct("<5sIIBBBB12s")


def _table_words(table: CoefTable) -> np.ndarray:
    return np.array([pack_codes(c) for c in table.codes.reshape(-1)], dtype=np.int64)


def marked_bytes(marked: MarkedImage, K_s: KeyMaterial | None = None) -> bytes:
    """Serialise; pass ``K_s`` to encrypt the AL table when the marked image used one."""
    h, w = marked.pixels.shape
    flags = (FLAG_KS if marked.ks_used else 0) | (FLAG_AL if marked.table is not None else 0)
    out = [_FIXED.pack(MAGIC, w, h, marked.kind.tag, marked.q, marked.w, flags, marked.nonce)]
    if marked.table is not None:
        grid = marked.kind.grid_size or 0
        words = _table_words(marked.table)
        bits = ((words[:, None] >> np.arange(COEF_BITS - 1, -1, -1)) & 1).astype(np.uint8).ravel()
        if marked.ks_used:
            bits = _table_mask(bits, marked, K_s)
        out.append(struct.pack("<H", grid))
        out.append(np.packbits(bits).tobytes())
    out.append(np.ascontiguousarray(marked.pixels).tobytes())
    return b"".join(out)


def _table_mask(bits, marked: MarkedImage, K_s: KeyMaterial | None):
    if K_s is None:
        raise ValueError("this marked image protects its coefficient table with K_s")
    grid = marked.grid
    return xor_bits(bits, _bind(K_s, marked.nonce), HEADER_BITS + LABEL_BITS * grid.K)


def parse_marked(data: bytes, K_s: KeyMaterial | None = None) -> MarkedImage:
    """Parse a container. ``K_s`` is needed only to decrypt a protected AL table."""
    if len(data) < _FIXED.size or not data.startswith(MAGIC):
        raise FormatError("not an RRBE1 container")
    _, w, h, tag, q, bw, flags, nonce = _FIXED.unpack_from(data)
    kind = PredictorKind.from_tag(tag)
    pos = _FIXED.size
    marked = MarkedImage(np.zeros((h, w), np.uint8), nonce, kind, q, bw, None, bool(flags & FLAG_KS))
    if bool(flags & FLAG_AL) != kind.adaptive:
        raise FormatError("coefficient-table flag disagrees with the predictor kind")
    table_bits = None
    if flags & FLAG_AL:
        if len(data) < pos + 2:
            raise FormatError("truncated coefficient table")
        (grid,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if grid != (kind.grid_size or 0):
            raise FormatError(f"grid size {grid} does not match predictor {kind.value}")
        ny, nx = coef_table_shape(h, w, kind.grid_size)
        nbits = ny * nx * 4 * COEF_BITS
        nbytes = (nbits + 7) // 8
        if len(data) < pos + nbytes:
            raise FormatError("truncated coefficient table")
        table_bits = np.unpackbits(np.frombuffer(data, np.uint8, nbytes, pos))[:nbits]
        pos += nbytes
    if len(data) != pos + h * w:
        raise FormatError(f"expected {h * w} pixel bytes, found {len(data) - pos}")
    marked.pixels = np.frombuffer(data, np.uint8, h * w, pos).reshape(h, w).copy()
    if table_bits is not None:
        if marked.ks_used and K_s is not None:
            table_bits = _table_mask(table_bits, marked, K_s)
        if not marked.ks_used or K_s is not None:
            words = table_bits.reshape(-1, COEF_BITS).astype(np.int64) @ (
                1 << np.arange(COEF_BITS - 1, -1, -1)
            )
            codes = np.array([unpack_code(int(x)) for x in words], dtype=np.int64)
            cell = kind.grid_size or max(h, w)
            marked.table = CoefTable(codes.reshape(ny, nx, 4), cell)
        else:
            marked.table = None  # still encrypted; recovery needs K_s
    return marked


def save_marked(marked: MarkedImage, path, K_s: KeyMaterial | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(marked_bytes(marked, K_s))


def load_marked(path, K_s: KeyMaterial | None = None) -> MarkedImage:
    with open(path, "rb") as fh:
        return parse_marked(fh.read(), K_s)
