"""Reversible data hiding in encrypted images by reserving room before encryption."""
from .cipher import KeyMaterial, KeyRole, keystream, new_nonce, xor_bits, xor_image
from .codec import (
    MarkedImage,
    embed,
    encode,
    extract,
    load_marked,
    recover_image,
    recover_labels,
    save_marked,
)
from .image import load_pgm, save_pgm
from .predict import PredictorKind
from .room import analyze, capacity_report

__version__ = "0.1.0"

__all__ = [
    "KeyMaterial", "KeyRole", "keystream", "new_nonce", "xor_bits", "xor_image",
    "MarkedImage", "embed", "encode", "extract", "load_marked", "recover_image",
    "recover_labels", "save_marked", "load_pgm", "save_pgm", "PredictorKind",
    "analyze", "capacity_report",
]
