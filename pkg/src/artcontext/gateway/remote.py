"""JSON-over-HTTP client for a remote inference service.

Endpoints (all POST): /encode_formal, /decode_formal, /encode_context,
/interrogate, /generate, /count_tokens. Images travel as base64 PNG under
``"image"``; latents as float arrays under ``"latent"``. Every response must
echo the configured ``checkpoint_id``.
"""

from __future__ import annotations

import base64
import logging
import threading
import time
from typing import Optional, Sequence

import httpx
import numpy as np

from ..errors import ContractViolation, GatewayError, RetryableGatewayError
from ..imaging import check_image, from_png_bytes, png_bytes
from .base import (
    GenerationParams,
    ModelGateway,
    check_context,
    check_formal,
    strip_artist_flavors,
    warn_if_over_budget,
)

logger = logging.getLogger(__name__)


def encode_image(image: np.ndarray) -> str:
    return base64.b64encode(png_bytes(image)).decode("ascii")


def decode_image(data: str) -> np.ndarray:
    return from_png_bytes(base64.b64decode(data))


class RemoteBackend(ModelGateway):
    def __init__(
        self,
        endpoint: str,
        checkpoint_id: str,
        *,
        client: Optional[httpx.Client] = None,
        max_in_flight: int = 4,
        attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 120.0,
        artist_flavors: Sequence[str] = (),
    ):
        self.endpoint = endpoint.rstrip("/")
        self.checkpoint_id = checkpoint_id
        self.client = client or httpx.Client(timeout=timeout)
        self.attempts = attempts
        self.backoff = backoff
        self.artist_flavors = list(artist_flavors)
        self._slots = threading.BoundedSemaphore(max_in_flight)

    def _post(self, op: str, payload: dict) -> dict:
        url = f"{self.endpoint}/{op}"
        last = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self.client.post(url, json=payload)
            except httpx.TransportError as exc:
                last = exc
                logger.warning("%s attempt %d failed: %s", op, attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = RetryableGatewayError(f"{op}: HTTP {resp.status_code}")
                logger.warning("%s attempt %d: HTTP %d", op, attempt + 1, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise GatewayError(f"{op}: HTTP {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            if body.get("checkpoint_id") != self.checkpoint_id:
                raise ContractViolation(
                    f"{op}: backend checkpoint {body.get('checkpoint_id')!r} != {self.checkpoint_id!r}"
                )
            return body
        raise RetryableGatewayError(f"{op} failed after {self.attempts} attempts: {last}")

    def encode_formal(self, image):
        body = self._post("encode_formal", {"image": encode_image(check_image(image))})
        return check_formal(body["latent"])

    def decode_formal(self, latent):
        latent = check_formal(latent)
        body = self._post("decode_formal", {"latent": latent.tolist()})
        return check_image(decode_image(body["image"]))

    def encode_context(self, image):
        body = self._post("encode_context", {"image": encode_image(check_image(image))})
        return check_context(body["latent"])

    def count_tokens(self, prompt):
        if not prompt:
            return 0
        return int(self._post("count_tokens", {"prompt": prompt})["count"])

    def generate(self, image, params: GenerationParams):
        same = self._identity_if_no_steps(image, params)
        if same is not None:
            return same
        warn_if_over_budget(self.count_tokens(params.prompt))
        body = self._post("generate", {"image": encode_image(image), **params.as_dict()})
        return check_image(decode_image(body["image"]))

    def interrogate(self, image):
        body = self._post("interrogate", {"image": encode_image(check_image(image))})
        return strip_artist_flavors(body["prompt"], self.artist_flavors)
