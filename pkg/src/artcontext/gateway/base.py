"""Backend-independent pieces of the model gateway."""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..errors import ContractViolation, PreconditionError
from ..imaging import check_image

FORMAL_SHAPE = (4, 64, 64)  # flattened channel-major
FORMAL_DIM = 16384
CONTEXT_DIM = 1024
TOKEN_BUDGET = 77
DEFAULT_DDIM_STEPS = 50
NOISE_ATTRACTOR_YEAR = 1950.0


class PromptTruncationWarning(UserWarning):
    """Prompt exceeds the text encoder budget; trailing tokens are ignored."""


@dataclass(frozen=True)
class GenerationParams:
    prompt: str = ""
    ddim_steps: int = DEFAULT_DDIM_STEPS
    diffusion_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.ddim_steps <= 0:
            raise PreconditionError("ddim_steps must be positive")
        if not 0 <= self.diffusion_steps <= self.ddim_steps:
            raise PreconditionError(
                f"diffusion_steps={self.diffusion_steps} outside [0, ddim_steps={self.ddim_steps}]"
            )
        if not 0 <= self.seed < 2**64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")

    def as_dict(self) -> dict:
        return {
            "prompt": self.prompt,
            "ddim_steps": self.ddim_steps,
            "diffusion_steps": self.diffusion_steps,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class BackendDescriptor:
    kind: str
    checkpoint_id: str = "sd2-512-base-ema"
    endpoint: Optional[str] = None
    mock_profile: Optional[str] = None
    max_in_flight: int = 4
    cache_dir: Optional[str] = None
    artist_flavors: Optional[str] = None  # path to a newline-separated list

    def __post_init__(self):
        if self.kind not in ("remote", "mock"):
            raise ValueError(f"backend kind must be 'remote' or 'mock', not {self.kind!r}")
        if self.kind == "remote" and not self.endpoint:
            raise ValueError("remote backend requires an endpoint")
        if self.kind == "mock" and not self.mock_profile:
            raise ValueError("mock backend requires a mock_profile")


def check_formal(latent) -> np.ndarray:
    latent = np.asarray(latent, dtype=np.float32).reshape(-1)
    if latent.shape != (FORMAL_DIM,):
        raise ContractViolation(f"formal latent must have {FORMAL_DIM} values, got {latent.size}")
    if not np.all(np.isfinite(latent)):
        raise ContractViolation("formal latent contains non-finite values")
    return latent


def check_context(latent) -> np.ndarray:
    latent = np.asarray(latent, dtype=np.float32).reshape(-1)
    if latent.shape != (CONTEXT_DIM,):
        raise ContractViolation(f"context latent must have {CONTEXT_DIM} values, got {latent.size}")
    if not np.all(np.isfinite(latent)):
        raise ContractViolation("context latent contains non-finite values")
    return latent


def formal_grid(latent) -> np.ndarray:
    """View a flat formal latent as its 4x64x64 grid."""
    return check_formal(latent).reshape(FORMAL_SHAPE)


_FLAVOR_SPLIT = re.compile(r"\s*,\s*")


def strip_artist_flavors(prompt: str, artist_flavors: Sequence[str]) -> str:
    """Drop comma-separated prompt segments that name a listed artist."""
    if not artist_flavors:
        return prompt
    banned = {a.strip().casefold() for a in artist_flavors if a.strip()}
    kept = []
    for seg in _FLAVOR_SPLIT.split(prompt.strip()):
        key = seg.strip().casefold()
        if key.startswith("by "):
            key = key[3:].strip()
        if key and key not in banned:
            kept.append(seg.strip())
    return ", ".join(kept)


def warn_if_over_budget(n_tokens: int, budget: int = TOKEN_BUDGET) -> bool:
    if n_tokens > budget:
        warnings.warn(
            f"prompt has {n_tokens} tokens; tokens beyond {budget} are ignored",
            PromptTruncationWarning,
            stacklevel=3,
        )
        return True
    return False


class ModelGateway:
    """Contract every backend implements.

    Images are 512x512x3 uint8 arrays; latents are float32 vectors of length
    16,384 (formal) or 1,024 (context).
    """

    checkpoint_id: str = ""

    def encode_formal(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def decode_formal(self, latent) -> np.ndarray:
        raise NotImplementedError

    def encode_context(self, image: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def count_tokens(self, prompt: str) -> int:
        raise NotImplementedError

    def generate(self, image: np.ndarray, params: GenerationParams) -> np.ndarray:
        raise NotImplementedError

    def interrogate(self, image: np.ndarray) -> str:
        raise NotImplementedError

    @staticmethod
    def _identity_if_no_steps(image: np.ndarray, params: GenerationParams):
        check_image(image)
        if params.diffusion_steps == 0:
            return image.copy()
        return None
