"""Command-line front end: ``rrbe embed|extract|recover|analyze|bench``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

from . import bench
from .cipher import NONCE_BYTES, KeyMaterial, KeyRole, new_nonce
from .codec import (CodecError, bits_to_bytes, bytes_to_bits, encode, extract, load_marked,
                    parse_marked, recover_image, save_marked)
from .image import PGMError, load_pgm, save_pgm
from .predict import PredictorKind
from .room import analyze

log = logging.getLogger("rrbe")

PRED_CHOICES = [k.value for k in PredictorKind]
DEFAULT_BENCH_PREDS = ["med", "gap", "sgap", "l", "al16", "al32", "al64"]
ANALYZE_FIELDS = ["image", "predictor", "q", "w", "K", "C", "overhead", "C_p", "ER"]


def parse_block(text: str) -> tuple[int, int]:
    try:
        q, w = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"block size must look like 2x4, got {text!r}") from None
    if not (1 <= q <= 255 and 1 <= w <= 255):
        raise argparse.ArgumentTypeError("block dimensions must be in 1..255")
    return q, w


def read_hex(value: str) -> str:
    """A hex string given inline or as the path of a file that holds it."""
    if os.path.isfile(value):
        return Path(value).read_text().strip()
    return value.strip()


def load_key(value: str | None, role: KeyRole, nonce: bytes) -> KeyMaterial | None:
    if value is None:
        return None
    return KeyMaterial.from_hex(role, read_hex(value), nonce)


def parse_nonce(value: str | None) -> bytes:
    if value is None:
        return new_nonce()
    raw = bytes.fromhex(read_hex(value))
    if len(raw) != NONCE_BYTES:
        raise ValueError(f"nonce must be {2 * NONCE_BYTES} hex characters")
    return raw


def cmd_embed(args) -> int:
    img = load_pgm(args.input)
    nonce = parse_nonce(args.nonce)
    K_e = load_key(args.key_ke, KeyRole.CONTENT_OWNER, nonce)
    K_d = load_key(args.key_kd, KeyRole.DATA_HIDER, nonce)
    K_s = load_key(args.key_ks, KeyRole.SHARED, nonce)
    payload = bytes_to_bits(Path(args.payload).read_bytes())
    q, w = args.block
    marked = encode(img, payload, args.pred, q, w, K_e, K_d, K_s)
    save_marked(marked, args.out, K_s)
    log.info("embedded %d bits into %s", len(payload), args.out)
    return 0


def cmd_extract(args) -> int:
    marked = load_marked(args.input)
    K_d = load_key(args.key_kd, KeyRole.DATA_HIDER, marked.nonce)
    K_s = load_key(args.key_ks, KeyRole.SHARED, marked.nonce)
    bits = extract(marked, K_d=K_d, K_s=K_s)
    if len(bits) % 8:
        log.warning("payload is %d bits; padding the last byte with zeros", len(bits))
    Path(args.out).write_bytes(bits_to_bytes(bits))
    return 0


def cmd_recover(args) -> int:
    K_s_hex = None if args.key_ks is None else read_hex(args.key_ks)
    data = Path(args.input).read_bytes()
    probe = parse_marked(data)
    K_s = None if K_s_hex is None else KeyMaterial.from_hex(KeyRole.SHARED, K_s_hex, probe.nonce)
    marked = parse_marked(data, K_s) if K_s is not None else probe
    K_e = load_key(args.key_ke, KeyRole.CONTENT_OWNER, marked.nonce)
    save_pgm(recover_image(marked, K_e, K_s), args.out)
    return 0


def cmd_analyze(args) -> int:
    rows = []
    for path in args.input:
        img = load_pgm(path)
        for pred in args.pred:
            for q, w in args.block:
                r = analyze(img, pred, q, w).report
                rows.append({"image": Path(path).stem, "predictor": pred, "q": q, "w": w,
                             "K": r.K, "C": r.C, "overhead": r.overhead, "C_p": r.C_p, "ER": r.ER})
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        if args.format == "json":
            out.write(json.dumps(rows, indent=2) + "\n")
        else:
            wr = csv.DictWriter(out, fieldnames=ANALYZE_FIELDS)
            wr.writeheader()
            wr.writerows(rows)
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def cmd_bench(args) -> int:
    corpus, errors = bench.load_corpus(args.corpus)
    if not corpus:
        log.error("no readable images in %s", args.corpus)
        return 2
    try:
        records = bench.er_table(corpus, args.preds, args.blocks, args.seed, jobs=args.jobs)
    except bench.RoundTripError as exc:
        log.error("round trip failed: %s", exc)
        return 1
    stats = None
    if args.hist is not None:
        stats = bench.pe_histogram(corpus, args.hist or PRED_CHOICES)
    for path in bench.emit_report(records, stats, args.out, args.format, timing=args.timing):
        log.info("wrote %s", path)
    status = 0
    if args.check_paper:
        for row in bench.check_reference(records):
            measured = "missing" if row["measured"] is None else f"{row['measured']:.3f}"
            verdict = "ok" if row["ok"] else "FAIL"
            print(f"{row['image']}/{row['predictor']}/{row['q']}x{row['w']}: "
                  f"target {row['target']:.3f} measured {measured} [{verdict}]")
            if not row["ok"]:
                status = 1
    if errors:
        status = status or 2
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rrbe", description="Reversible data hiding in encrypted "
                                 "grayscale images (MSB prediction, room reserved before encryption).")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="encrypt an image and hide a payload in it")
    p.add_argument("--in", dest="input", required=True, help="cover image (PGM)")
    p.add_argument("--key-ke", required=True, help="image key: 32 hex chars or a file")
    p.add_argument("--key-kd", help="data-hiding key")
    p.add_argument("--key-ks", help="shared key protecting labels and side information")
    p.add_argument("--payload", required=True, help="file whose bytes are embedded")
    p.add_argument("--pred", choices=PRED_CHOICES, default="gap")
    p.add_argument("--block", type=parse_block, default=(2, 4), help="QxW, e.g. 2x4")
    p.add_argument("--nonce", help="24 hex chars; random if omitted")
    p.add_argument("--out", required=True, help="marked container")
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("extract", help="read the payload with the data-hiding key")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--key-kd")
    p.add_argument("--key-ks")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("recover", help="restore the original image with the image key")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--key-ke", required=True)
    p.add_argument("--key-ks")
    p.add_argument("--out", required=True, help="output PGM")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("analyze", help="report embedding capacity without embedding")
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--pred", nargs="+", choices=PRED_CHOICES, default=["gap"])
    p.add_argument("--block", nargs="+", type=parse_block, default=[(2, 4)])
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bench", help="run the corpus round-trip and capacity experiment")
    p.add_argument("--corpus", default=os.environ.get("RRBE_CORPUS", "corpus"))
    p.add_argument("--preds", nargs="+", choices=PRED_CHOICES, default=DEFAULT_BENCH_PREDS)
    p.add_argument("--blocks", nargs="+", type=parse_block, default=list(bench.BLOCK_SIZES))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--hist", nargs="*", choices=PRED_CHOICES,
                   help="also write PE histograms for these predictors")
    p.add_argument("--timing", action="store_true", help="add a wall_time column")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--check-paper", action="store_true",
                   help="fail unless the published reference rates are met within tolerance")
    p.set_defaults(func=cmd_bench)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (CodecError, PGMError, ValueError, OSError) as exc:
        print(f"rrbe: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
