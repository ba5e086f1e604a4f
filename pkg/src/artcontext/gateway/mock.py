"""Deterministic mock backend driven by a fixture table.

Every output is a pure function of the image digest ``h`` (64-bit blake2b of
the pixel bytes), the checkpoint id and the fixture profile:

* formal latent: counter-based uniforms ``r(h, i)``, except coordinates 0-3
  which hold mean R, mean G, mean B and the luminance standard deviation;
* context latent: counter-based uniforms, except coordinate 0 (year signal)
  and coordinate 1 (style signal) taken from the fixture entry of ``h``;
  images absent from the fixtures sit at the noise attractor (1950);
* generate: moves the source's (year, style) signals toward the prompt's
  century signal, or toward the attractor for an empty or untagged prompt,
  by the fraction ``diffusion_steps / ddim_steps``. The formal statistics of
  the source are carried over unchanged.

Generated images are registered in an in-process table so that encoding them
later returns the drifted signals.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from ..errors import ConfigurationError
from ..imaging import check_image, digest_hex, image_digest
from .base import (
    CONTEXT_DIM,
    FORMAL_DIM,
    NOISE_ATTRACTOR_YEAR,
    TOKEN_BUDGET,
    GenerationParams,
    ModelGateway,
    check_formal,
    strip_artist_flavors,
    warn_if_over_budget,
)

logger = logging.getLogger(__name__)

_TAG_FORMAL = 0xF0
_TAG_CONTEXT = 0xC0
_MOCK_TOKEN = re.compile(r"[^\s,]+|,")


@dataclass
class FixtureEntry:
    year_signal: float
    style_signal: float
    prompt: Optional[str] = None
    formal_stats: Optional[tuple] = None  # only for generated images


@dataclass
class MockProfile:
    checkpoint_id: str = "mock-sd2"
    entries: dict = field(default_factory=dict)  # digest hex -> FixtureEntry
    century_tags: dict = field(default_factory=dict)  # word -> century
    century_signals: dict = field(default_factory=dict)  # century -> (year, style)
    attractor: tuple = (NOISE_ATTRACTOR_YEAR, NOISE_ATTRACTOR_YEAR)
    artist_flavors: list = field(default_factory=list)

    def century_signal(self, century: int) -> tuple:
        if century in self.century_signals:
            return tuple(self.century_signals[century])
        return (float(century), float(century))

    def to_dict(self) -> dict:
        return {
            "checkpoint_id": self.checkpoint_id,
            "attractor": list(self.attractor),
            "entries": {
                k: {"year_signal": e.year_signal, "style_signal": e.style_signal, "prompt": e.prompt}
                for k, e in sorted(self.entries.items())
            },
            "century_tags": dict(sorted(self.century_tags.items())),
            "century_signals": {str(c): list(v) for c, v in sorted(self.century_signals.items())},
            "artist_flavors": list(self.artist_flavors),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MockProfile":
        return cls(
            checkpoint_id=d.get("checkpoint_id", "mock-sd2"),
            entries={
                k: FixtureEntry(float(v["year_signal"]), float(v["style_signal"]), v.get("prompt"))
                for k, v in d.get("entries", {}).items()
            },
            century_tags={w: int(c) for w, c in d.get("century_tags", {}).items()},
            century_signals={int(c): tuple(v) for c, v in d.get("century_signals", {}).items()},
            attractor=tuple(d.get("attractor", (NOISE_ATTRACTOR_YEAR, NOISE_ATTRACTOR_YEAR))),
            artist_flavors=list(d.get("artist_flavors", [])),
        )

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "MockProfile":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigurationError(f"cannot load mock profile {path}: {exc}") from exc


def mock_tokens(prompt: str) -> list:
    return _MOCK_TOKEN.findall(prompt or "")


def _uniforms(h: int, tag: int, ckpt: int, n: int) -> np.ndarray:
    bitgen = np.random.Philox(key=[h, (ckpt << 8 | tag) & (2**64 - 1)])
    return np.random.Generator(bitgen).random(n, dtype=np.float32)


def formal_statistics(image: np.ndarray) -> tuple:
    px = image.reshape(-1, 3).astype(np.float64)
    mean = px.mean(axis=0)
    lum = px @ np.array([0.299, 0.587, 0.114])
    return (float(mean[0]), float(mean[1]), float(mean[2]), float(lum.std()))


class MockBackend(ModelGateway):
    def __init__(self, profile: MockProfile):
        self.profile = profile
        self.checkpoint_id = profile.checkpoint_id
        self._ckpt = int.from_bytes(hashlib.blake2b(profile.checkpoint_id.encode(), digest_size=7).digest(), "little")
        self._derived = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "MockBackend":
        return cls(MockProfile.load(path))

    def _entry(self, key: str) -> Optional[FixtureEntry]:
        with self._lock:
            derived = self._derived.get(key)
        return derived if derived is not None else self.profile.entries.get(key)

    def _signals(self, key: str) -> tuple:
        entry = self._entry(key)
        if entry is None:
            return tuple(self.profile.attractor)
        return (entry.year_signal, entry.style_signal)

    def encode_formal(self, image):
        check_image(image)
        h = image_digest(image)
        out = _uniforms(h, _TAG_FORMAL, self._ckpt, FORMAL_DIM)
        entry = self._entry(f"{h:016x}")
        stats = entry.formal_stats if entry is not None and entry.formal_stats else formal_statistics(image)
        out[:4] = stats
        return out

    def decode_formal(self, latent):
        latent = check_formal(latent)
        rgb = np.clip(np.rint(latent[:3].astype(np.float64)), 0, 255).astype(np.uint8)
        return np.broadcast_to(rgb, (512, 512, 3)).copy()

    def encode_context(self, image):
        check_image(image)
        h = image_digest(image)
        out = _uniforms(h, _TAG_CONTEXT, self._ckpt, CONTEXT_DIM)
        out[0], out[1] = self._signals(f"{h:016x}")
        return out

    def count_tokens(self, prompt):
        return len(mock_tokens(prompt))

    def prompt_century(self, prompt: str) -> Optional[int]:
        """Majority century among tagged words within the token budget."""
        tokens = mock_tokens(prompt)[:TOKEN_BUDGET]
        votes = Counter(
            self.profile.century_tags[t.lower()] for t in tokens if t.lower() in self.profile.century_tags
        )
        if not votes:
            return None
        best = max(votes.values())
        return min(c for c, v in votes.items() if v == best)

    def generate(self, image, params: GenerationParams):
        same = self._identity_if_no_steps(image, params)
        if same is not None:
            return same
        warn_if_over_budget(self.count_tokens(params.prompt))

        src_key = digest_hex(image)
        src_entry = self._entry(src_key)
        y0, s0 = self._signals(src_key)
        century = self.prompt_century(params.prompt) if params.prompt else None
        ty, ts = self.profile.century_signal(century) if century is not None else self.profile.attractor
        frac = params.diffusion_steps / params.ddim_steps
        new_y = y0 + frac * (ty - y0)
        new_s = s0 + frac * (ts - s0)

        out = self._perturb(image, params)
        stats = src_entry.formal_stats if src_entry is not None and src_entry.formal_stats else formal_statistics(image)
        entry = FixtureEntry(
            float(np.float32(new_y)),
            float(np.float32(new_s)),
            prompt=src_entry.prompt if src_entry is not None else None,
            formal_stats=stats,
        )
        with self._lock:
            self._derived[digest_hex(out)] = entry
        return out

    @staticmethod
    def _perturb(image: np.ndarray, params: GenerationParams) -> np.ndarray:
        # a pixel permutation: channel means and luminance spread are untouched
        key = json.dumps(params.as_dict(), sort_keys=True).encode()
        v = int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little")
        dy, dx = 1 + v % 511, 1 + (v >> 16) % 511
        out = np.roll(image, (dy, dx), axis=(0, 1))
        if np.array_equal(out, image):
            out = out.copy()
            out[0, 0, 0] ^= 1
        return out

    def interrogate(self, image):
        check_image(image)
        key = digest_hex(image)
        entry = self._entry(key)
        if entry is None or entry.prompt is None:
            raise ConfigurationError(f"mock profile has no prompt for image {key}")
        return strip_artist_flavors(entry.prompt, self.profile.artist_flavors)
