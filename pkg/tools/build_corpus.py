#!/usr/bin/env python3
"""Regenerate the bundled PGM corpus under ``corpus/``.

Sources (fetched from the package indexes, so only PyPI/npm access is needed):

* lena      -- ``scipy/misc/lena.dat`` from the scipy 0.16.1 sdist (8-bit gray)
* baboon    -- ``baboon.png`` from the npm package ``baboon-image`` (RGB)
* cameraman -- ``cameraman.png`` from the npm package ``cameraman``
* ascent, face -- ``scipy/misc/*.dat`` from the same scipy sdist
* everything else -- images shipped inside scikit-image's ``data`` directory

RGB sources are converted with Y = 0.299 R + 0.587 G + 0.114 B, rounded.
Anything larger than 512 on a side is centre-cropped to 512.

Usage: python tools/build_corpus.py [--out corpus]
"""
import argparse
import bz2
import hashlib
import io
import json
import os
import pickle
import re
import tarfile
import urllib.request
from pathlib import Path

import numpy as np
from PIL import Image

DESK = ["lena", "baboon", "ascent", "camera", "astronaut", "brick",
        "grass", "gravel", "moon", "ihc", "coffee", "rocket"]
EXTRA = ["chelsea", "coins", "page", "text", "hubble_deep_field", "retina",
         "cell", "motorcycle_left", "clock_motion", "face", "cameraman"]

SCIPY_SDIST = "scipy-0.16.1.tar.gz"
NPM = {
    "baboon": ("https://registry.npmjs.org/baboon-image/-/baboon-image-2.1.0.tgz", "package/baboon.png"),
    "cameraman": ("https://registry.npmjs.org/cameraman/-/cameraman-1.0.0.tgz", "package/cameraman.png"),
}


def fetch(url):
    with urllib.request.urlopen(url, timeout=300) as r:
        return r.read()


def scipy_member(cache, name):
    path = cache / SCIPY_SDIST
    if not path.exists():
        index = fetch("https://pypi.org/simple/scipy/").decode()
        href = re.search(r'href="([^"]*%s)[#"]' % re.escape(SCIPY_SDIST), index).group(1)
        path.write_bytes(fetch(urllib.request.urljoin("https://pypi.org/simple/scipy/", href)))
    with tarfile.open(path) as tf:
        return tf.extractfile(f"scipy-0.16.1/scipy/misc/{name}.dat").read()


def to_gray(arr):
    arr = np.asarray(arr)
    if arr.ndim == 3:
        rgb = arr[..., :3].astype(np.float64)
        arr = np.floor(rgb @ np.array([0.299, 0.587, 0.114]) + 0.5)
    return np.clip(arr, 0, 255).astype(np.uint8)


def crop(arr, side=512):
    h, w = arr.shape
    r0 = max(0, (h - side) // 2)
    c0 = max(0, (w - side) // 2)
    return arr[r0 : r0 + side, c0 : c0 + side]


def load(name, cache):
    if name in ("lena", "ascent"):
        return np.asarray(pickle.loads(scipy_member(cache, name), encoding="latin1"))
    if name == "face":
        raw = bz2.decompress(scipy_member(cache, "face"))
        return np.frombuffer(raw, np.uint8).reshape(768, 1024, 3)
    if name in NPM:
        url, member = NPM[name]
        with tarfile.open(fileobj=io.BytesIO(fetch(url))) as tf:
            return np.asarray(Image.open(io.BytesIO(tf.extractfile(member).read())).convert("RGB"))
    import skimage

    data_dir = Path(skimage.__file__).parent / "data"
    fname = next(f for f in os.listdir(data_dir) if f.rsplit(".", 1)[0] == name)
    return np.asarray(Image.open(data_dir / fname))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "corpus"))
    ap.add_argument("--cache", default=os.path.expanduser("~/.cache/rrbe-corpus"))
    args = ap.parse_args()
    out = Path(args.out)
    cache = Path(args.cache)
    out.mkdir(parents=True, exist_ok=True)
    cache.mkdir(parents=True, exist_ok=True)
    from rrbe.image import save_pgm

    manifest = {"desk": DESK, "extra": EXTRA, "files": {}}
    for name in DESK + EXTRA:
        img = crop(to_gray(load(name, cache)))
        path = out / f"{name}.pgm"
        save_pgm(img, path)
        manifest["files"][name] = {
            "shape": list(img.shape),
            "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
        }
        print(f"{name:20s} {img.shape[1]}x{img.shape[0]}")
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


if __name__ == "__main__":
    main()
