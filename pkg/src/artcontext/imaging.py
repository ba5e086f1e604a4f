"""Image tensors: validation, digests and PNG round-trips."""

from __future__ import annotations

import hashlib
import io
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractViolation

IMAGE_SIZE = 512
IMAGE_SHAPE = (IMAGE_SIZE, IMAGE_SIZE, 3)


def check_image(image: np.ndarray) -> np.ndarray:
    """Return ``image`` if it is a 512x512x3 uint8 array, else raise."""
    image = np.asarray(image)
    if image.shape != IMAGE_SHAPE or image.dtype != np.uint8:
        raise ContractViolation(
            f"expected uint8 image of shape {IMAGE_SHAPE}, got {image.dtype} {image.shape}"
        )
    return image


def image_digest(image: np.ndarray) -> int:
    """64-bit content digest of the raw pixel bytes."""
    data = np.ascontiguousarray(image).tobytes()
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def digest_hex(image: np.ndarray) -> str:
    return f"{image_digest(image):016x}"


def load_rgb(path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def save_png(image: np.ndarray, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(path, format="PNG")
    return path


def png_bytes(image: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def from_png_bytes(data: bytes) -> np.ndarray:
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def store_content_addressed(image: np.ndarray, root) -> Path:
    """Write ``image`` under ``root`` named by its digest; skip if present."""
    path = Path(root) / f"{digest_hex(image)}.png"
    if not path.exists():
        save_png(image, path)
    return path
