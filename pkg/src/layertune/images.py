from __future__ import annotations

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DecodeError

RESAMPLING = "bilinear"


def preprocess_image(raw: bytes, target: int = 512) -> np.ndarray:
    """Decode ``raw`` to RGB, bilinearly resize to ``target`` x ``target``, scale to [0, 1]."""
    try:
        with Image.open(io.BytesIO(raw)) as img:
            img = img.convert("RGB")
            if img.size != (target, target):
                img = img.resize((target, target), Image.Resampling.BILINEAR)
            arr = np.asarray(img, dtype=np.float32)
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"not a decodable image: {exc}") from exc
    return arr / np.float32(255.0)


def encode_jpeg(pixels: np.ndarray, quality: int = 95) -> bytes:
    """Encode a uint8 (or [0, 1] float) RGB array as JPEG bytes."""
    arr = np.asarray(pixels)
    if arr.dtype != np.uint8:
        arr = np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=quality)
    return buf.getvalue()
