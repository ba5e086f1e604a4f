"""Synthetic painting corpus paired with a mock-backend profile.

Context latents of these paintings carry a year signal (decade plus Gaussian
noise) and a style signal (the style period's representative year). Their
pixels are random colour blocks drawn independently of the decade, so formal
latents carry no year information. Prompts mix generic caption words with a
per-century vocabulary, plus artist-name, movement and numeral flavors that
the keyword pipeline has to screen out.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .gateway.mock import FixtureEntry, MockProfile
from .imaging import digest_hex, save_png
from .ingest import PaintingRecord, normalize_artist, painting_id

STYLES = [
    ("Renaissance", 1500), ("Mannerism", 1550), ("Baroque", 1600), ("Dutch Golden Age", 1650),
    ("Rococo", 1700), ("Neoclassicism", 1750), ("Romanticism", 1800), ("Impressionism", 1850),
    ("Expressionism", 1900), ("Abstract Expressionism", 1950),
]
FIRST = ["Albrecht", "Jan", "Maria", "Pieter", "Élisabeth", "Gustav", "Egon", "Claude", "Berthe",
         "Francisco", "Joaquín", "Artemisia", "Hans", "Søren", "Édouard", "Paula", "Wassily", "Frida"]
LAST = ["Dürer", "Vermeer", "Ruysch", "Brueghel", "Vigée", "Klimt", "Schiele", "Monet", "Morisot",
        "Goya", "Sorolla", "Gentileschi", "Holbein", "Kierkegaard", "Manet", "Modersohn", "Kandinsky", "Kahlo"]
SUBJECTS = ["a man", "a woman", "a group of people", "a landscape", "a still life", "a portrait of a man",
            "a portrait of a woman", "a city street", "a river", "a boat"]
MEDIA = ["oil on canvas", "oil on panel", "tempera", "watercolor"]
_CONS = "bcdfghklmnprstvz"
_VOWELS = "aeiou"


def _pseudo_words(rng, n, taken):
    out = []
    while len(out) < n:
        k = int(rng.integers(2, 4))
        w = "".join(rng.choice(list(_CONS)) + rng.choice(list(_VOWELS)) for _ in range(k))
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def block_image(rng, blocks: int = 16) -> np.ndarray:
    small = rng.integers(0, 256, size=(blocks, blocks, 3), dtype=np.uint8)
    scale = 512 // blocks
    return np.repeat(np.repeat(small, scale, axis=0), scale, axis=1)


def style_for(decade: int) -> tuple:
    name, start = STYLES[0]
    for s_name, s_start in STYLES:
        if decade >= s_start:
            name, start = s_name, s_start
    return name, float(start + 20)


@dataclass
class SyntheticPainting:
    record: PaintingRecord
    image_seed: tuple
    year_signal: float
    style_signal: float
    prompt: str
    date_text: str
    title: str
    artist_name: str

    def image(self) -> np.ndarray:
        return block_image(np.random.default_rng(list(self.image_seed)))


@dataclass
class SyntheticCorpus:
    paintings: list
    profile: MockProfile
    century_vocab: dict
    artist_names: list = field(default_factory=list)
    movement_names: list = field(default_factory=list)

    @property
    def records(self) -> list:
        return [p.record for p in self.paintings]

    def image_of(self, record) -> np.ndarray:
        return self._by_id[record.id].image()

    def __post_init__(self):
        self._by_id = {p.record.id: p for p in self.paintings}


def _date_text(rng, decade: int) -> str:
    year = decade + int(rng.integers(0, 10))
    form = int(rng.integers(0, 4))
    if form == 0:
        return str(year)
    if form == 1 and year - 2 >= decade:
        return f"{year - 2}-{year}"
    if form == 2:
        return f"c{year}"
    if form == 3:
        return f"{decade}s"
    return str(year)


def make_corpus(n: int = 1000, seed: int = 0, year_noise: float = 5.0, vocab_per_century: int = 120,
                words_per_prompt: int = 10, checkpoint_id: str = "mock-sd2") -> SyntheticCorpus:
    rng = np.random.default_rng(seed)
    taken = set()
    vocab = {c: _pseudo_words(np.random.default_rng([seed, c]), vocab_per_century, taken)
             for c in range(1500, 2000, 100)}
    artists = [f"{FIRST[i % len(FIRST)]} {LAST[(i * 7) % len(LAST)]}" for i in range(40)]
    artist_century = {a: 1500 + 100 * (i % 5) for i, a in enumerate(artists)}

    paintings = []
    profile = MockProfile(checkpoint_id=checkpoint_id)
    for i in range(n):
        decade = int(rng.integers(150, 200)) * 10
        century = decade // 100 * 100
        pool = [a for a in artists if artist_century[a] == century]
        artist = pool[int(rng.integers(0, len(pool)))]
        style, style_signal = style_for(decade)
        year_signal = float(np.float32(decade + rng.normal(0.0, year_noise)))

        words = list(rng.choice(vocab[century], size=words_per_prompt, replace=False))
        parts = [f"{SUBJECTS[int(rng.integers(0, len(SUBJECTS)))]} {' '.join(words)}",
                 MEDIA[int(rng.integers(0, len(MEDIA)))]]
        if rng.random() < 0.3:
            parts.append(style.lower())
        if rng.random() < 0.2:
            parts.append(f"painted in {decade + int(rng.integers(0, 10))}")
        if rng.random() < 0.5:
            parts.append(f"by {normalize_artist(artist).lower()}")
        prompt = ", ".join(parts)

        image_seed = (seed, 7919, i)
        image = block_image(np.random.default_rng(list(image_seed)))
        digest = digest_hex(image)
        title = f"Composition {i}"
        pid = painting_id(normalize_artist(artist), title, digest)
        record = PaintingRecord(pid, normalize_artist(artist), decade, style, f"synthetic:{i}",
                                {"painting_name": title, "content_digest": digest})
        profile.entries[digest] = FixtureEntry(year_signal, style_signal, prompt)
        paintings.append(SyntheticPainting(record, image_seed, year_signal, style_signal, prompt,
                                           _date_text(rng, decade), title, artist))

    profile.century_tags = {w: c for c, ws in vocab.items() for w in ws}
    profile.artist_flavors = sorted({normalize_artist(a).lower() for a in artists})
    return SyntheticCorpus(paintings, profile, vocab, artists, [s for s, _ in STYLES])


def write_corpus_files(corpus: SyntheticCorpus, root, extras: bool = True) -> dict:
    """Write metadata.csv, PNG images and mock_profile.json under ``root``.

    With ``extras``, rows that the ingest cascade must drop are appended
    (sculpture, wrong field, extreme aspect, low resolution, undated, pre-1500,
    missing image).
    """
    root = Path(root)
    img_dir = root / "images"
    rows = []
    for i, p in enumerate(corpus.paintings):
        name = f"p{i:05d}.png"
        save_png(p.image(), img_dir / name)
        rows.append([p.title, p.artist_name, p.date_text, p.record.style, "painting", "portrait",
                     "Dutch", f"images/{name}"])
    if extras:
        rng = np.random.default_rng(12345)
        def extra(name, shape):
            arr = rng.integers(0, 256, size=shape, dtype=np.uint8)
            save_png(arr, img_dir / name)
            return f"images/{name}"
        rows.append(["Bust", "Anon", "1650", "sculpture", "sculpture", "bust", "Italian", extra("x0.png", (512, 512, 3))])
        rows.append(["Sketch", "Anon", "1650", "Baroque", "drawing", "study", "Italian", extra("x1.png", (512, 512, 3))])
        rows.append(["Scroll", "Anon", "1650", "Baroque", "painting", "landscape", "Italian", extra("x2.png", (400, 900, 3))])
        rows.append(["Thumb", "Anon", "1650", "Baroque", "painting", "landscape", "Italian", extra("x3.png", (300, 350, 3))])
        rows.append(["Storm at sea", "Anon", "", "Baroque", "painting", "marine", "Italian", extra("x4.png", (512, 512, 3))])
        rows.append(["Icon", "Anon", "1420s", "Gothic", "painting", "religious", "Italian", extra("x5.png", (512, 512, 3))])
        rows.append(["Lost", "Anon", "1650", "Baroque", "painting", "landscape", "Italian", "images/missing.png"])
    meta = root / "metadata.csv"
    with open(meta, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["painting_name", "artist_name", "Date", "Style", "Field", "Genre", "Nationality", "image_path"])
        w.writerows(rows)
    profile_path = corpus.profile.save(root / "mock_profile.json")
    (root / "artist_names.txt").write_text("\n".join(corpus.artist_names) + "\n", encoding="utf-8")
    (root / "movement_names.txt").write_text("\n".join(corpus.movement_names) + "\n", encoding="utf-8")
    return {"metadata": meta, "images": img_dir, "profile": profile_path}
