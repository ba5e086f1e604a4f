"""Server side of the inference wire protocol, backed by any gateway.

``wire_handler`` turns a gateway into a request handler usable with
``httpx.MockTransport``; it is the reference for what a remote deployment
must accept and return.
"""

from __future__ import annotations

import json

import httpx
import numpy as np

from ..errors import ArtContextError
from .base import GenerationParams, ModelGateway
from .remote import decode_image, encode_image


def handle(backend: ModelGateway, op: str, body: dict) -> dict:
    if op == "encode_formal":
        out = {"latent": backend.encode_formal(decode_image(body["image"])).tolist()}
    elif op == "decode_formal":
        out = {"image": encode_image(backend.decode_formal(np.asarray(body["latent"], dtype=np.float32)))}
    elif op == "encode_context":
        out = {"latent": backend.encode_context(decode_image(body["image"])).tolist()}
    elif op == "interrogate":
        out = {"prompt": backend.interrogate(decode_image(body["image"]))}
    elif op == "count_tokens":
        out = {"count": backend.count_tokens(body["prompt"])}
    elif op == "generate":
        params = GenerationParams(
            prompt=body.get("prompt", ""),
            ddim_steps=int(body["ddim_steps"]),
            diffusion_steps=int(body["diffusion_steps"]),
            seed=int(body["seed"]),
        )
        out = {"image": encode_image(backend.generate(decode_image(body["image"]), params))}
    else:
        raise KeyError(op)
    out["checkpoint_id"] = backend.checkpoint_id
    return out


def wire_handler(backend: ModelGateway):
    def _handler(request: httpx.Request) -> httpx.Response:
        op = request.url.path.rstrip("/").rsplit("/", 1)[-1]
        if request.method != "POST":
            return httpx.Response(405)
        try:
            body = json.loads(request.content or b"{}")
            return httpx.Response(200, json=handle(backend, op, body))
        except KeyError as exc:
            return httpx.Response(404, json={"error": f"unknown operation or field: {exc}"})
        except ArtContextError as exc:
            return httpx.Response(422, json={"error": str(exc)})

    return _handler
