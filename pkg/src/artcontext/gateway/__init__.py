from pathlib import Path

from .base import (
    CONTEXT_DIM,
    DEFAULT_DDIM_STEPS,
    FORMAL_DIM,
    NOISE_ATTRACTOR_YEAR,
    TOKEN_BUDGET,
    BackendDescriptor,
    GenerationParams,
    ModelGateway,
    PromptTruncationWarning,
    strip_artist_flavors,
)
from .cache import CachedGateway
from .mock import FixtureEntry, MockBackend, MockProfile
from .remote import RemoteBackend


def make_gateway(desc: BackendDescriptor, cache: bool = True) -> ModelGateway:
    if desc.kind == "mock":
        backend = MockBackend.from_file(desc.mock_profile)
    else:
        flavors = []
        if desc.artist_flavors:
            flavors = [l.strip() for l in Path(desc.artist_flavors).read_text(encoding="utf-8").splitlines() if l.strip()]
        backend = RemoteBackend(
            desc.endpoint, desc.checkpoint_id, max_in_flight=desc.max_in_flight, artist_flavors=flavors
        )
    return CachedGateway(backend, desc.cache_dir) if cache else backend


__all__ = [
    "BackendDescriptor",
    "CachedGateway",
    "CONTEXT_DIM",
    "DEFAULT_DDIM_STEPS",
    "FORMAL_DIM",
    "FixtureEntry",
    "GenerationParams",
    "MockBackend",
    "MockProfile",
    "ModelGateway",
    "NOISE_ATTRACTOR_YEAR",
    "PromptTruncationWarning",
    "RemoteBackend",
    "TOKEN_BUDGET",
    "make_gateway",
    "strip_artist_flavors",
]
