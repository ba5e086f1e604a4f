"""Corpus ingest: metadata parsing, year resolution, filtering and image screening.

The filter cascade follows a fixed order: paintings without image files are
dropped, a creation year is resolved (``Date`` column first, then the title)
and floored to its decade, metadata keyword filters run (Style, Field, Genre,
Nationality removal, then the Field keep-list), images are screened for
aspect ratio and resolution, and finally decades outside 1500-1990 go.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import logging
import os
import re
import unicodedata
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO

import numpy as np
from PIL import Image

from .errors import IngestError
from .imaging import IMAGE_SIZE, digest_hex, load_rgb, save_png

logger = logging.getLogger(__name__)

FILTER_FIELDS = ("Style", "Field", "Genre", "Nationality")
MANDATORY_COLUMNS = ("painting_name", "artist_name", "Date", "Style", "Field", "Genre", "Nationality")

YEAR_MIN, YEAR_MAX = 1000, 2100
DECADE_MIN, DECADE_MAX = 1500, 1990
MIN_RESOLUTION = 410


@dataclass(frozen=True)
class RawRecord:
    painting_name: str
    artist_name: str
    date_text: str
    style_text: str
    field_text: str
    genre_text: str
    nationality_text: str
    image_path: str
    width: Optional[int] = None
    height: Optional[int] = None

    def field_value(self, name: str) -> str:
        return {
            "Style": self.style_text,
            "Field": self.field_text,
            "Genre": self.genre_text,
            "Nationality": self.nationality_text,
        }[name]


@dataclass(frozen=True)
class PaintingRecord:
    id: str
    artist: str
    decade: int
    style: Optional[str]
    image_ref: str
    source: dict = field(default_factory=dict, compare=False)

    @property
    def century(self) -> int:
        return century_of(self.decade)

    def to_json(self) -> str:
        return json.dumps(
            {
                "id": self.id,
                "artist": self.artist,
                "decade": self.decade,
                "style": self.style,
                "image_ref": self.image_ref,
                "provenance": self.source,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, line: str) -> "PaintingRecord":
        d = json.loads(line)
        return cls(d["id"], d["artist"], int(d["decade"]), d["style"], d["image_ref"], d.get("provenance", {}))


@dataclass
class FilterConfig:
    """Keyword lists for the metadata filter cascade.

    ``remove_keywords`` maps each of Style/Field/Genre/Nationality to keywords
    whose presence removes a record. ``keep_field_keywords`` is the Field
    keep-list; ``None`` disables the keep stage.
    """

    remove_keywords: dict = field(default_factory=lambda: {f: [] for f in FILTER_FIELDS})
    keep_field_keywords: Optional[list] = None
    match: str = "substring"  # or "exact"

    def __post_init__(self):
        unknown = set(self.remove_keywords) - set(FILTER_FIELDS)
        if unknown:
            raise ValueError(f"unknown filter fields: {sorted(unknown)}")
        # normalise to the canonical field order regardless of input order
        self.remove_keywords = {f: list(self.remove_keywords.get(f, [])) for f in FILTER_FIELDS}
        if self.match not in ("substring", "exact"):
            raise ValueError(f"match must be 'substring' or 'exact', not {self.match!r}")

    def matches(self, text: str, keywords: Iterable[str]) -> bool:
        text = (text or "").casefold()
        for kw in keywords:
            kw = kw.casefold()
            if self.match == "exact":
                if text.strip() == kw.strip():
                    return True
            elif kw and kw in text:
                return True
        return False

    @classmethod
    def from_dict(cls, d: dict) -> "FilterConfig":
        return cls(
            remove_keywords=d.get("remove_keywords", {}),
            keep_field_keywords=d.get("keep_field_keywords"),
            match=d.get("match", "substring"),
        )


# --------------------------------------------------------------------------
# metadata parsing


@dataclass
class ParseResult:
    records: list
    skipped: int = 0


def parse_metadata(stream: TextIO, image_column: str = "image_path") -> ParseResult:
    """Parse a comma- or tab-delimited metadata table.

    Records are one per physical line. Rows with unbalanced quotes or the
    wrong number of fields are skipped and counted.
    """
    try:
        text = stream.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable metadata stream: {exc}") from exc

    lines = text.splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise IngestError("metadata stream has no header row")

    header_line = lines[0]
    delimiter = "\t" if header_line.count("\t") > header_line.count(",") else ","
    header = [h.strip() for h in next(csv.reader([header_line], delimiter=delimiter))]
    required = list(MANDATORY_COLUMNS) + [image_column]
    missing = [c for c in required if c not in header]
    if missing:
        raise IngestError(f"missing mandatory columns: {', '.join(missing)}")
    col = {name: i for i, name in enumerate(header)}

    records, skipped = [], 0
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            row = next(csv.reader([line], delimiter=delimiter, strict=True))
        except csv.Error:
            skipped += 1
            continue
        if len(row) != len(header):
            skipped += 1
            continue
        records.append(
            RawRecord(
                painting_name=row[col["painting_name"]].strip(),
                artist_name=row[col["artist_name"]].strip(),
                date_text=row[col["Date"]].strip(),
                style_text=row[col["Style"]].strip(),
                field_text=row[col["Field"]].strip(),
                genre_text=row[col["Genre"]].strip(),
                nationality_text=row[col["Nationality"]].strip(),
                image_path=row[col[image_column]].strip(),
            )
        )
    if skipped:
        logger.warning("skipped %d malformed metadata rows", skipped)
    return ParseResult(records, skipped)


# --------------------------------------------------------------------------
# years and decades

_RANGE_RE = re.compile(r"(?<!\d)(\d{4})\s*(?:-{1,2}|–|—|\bto\b)\s*(\d{2,4})(?!\d)", re.IGNORECASE)
_YEAR_RE = re.compile(r"(?<!\d)(\d{4})(?!\d)")


def _range_end(start: int, end_text: str) -> Optional[int]:
    if len(end_text) == 4:
        end = int(end_text)
    elif len(end_text) == 2:
        end = start // 100 * 100 + int(end_text)
    else:
        return None
    return end if end >= start else None


def _year_from(text: str) -> Optional[int]:
    if not text:
        return None
    for m in _RANGE_RE.finditer(text):
        end = _range_end(int(m.group(1)), m.group(2))
        if end is not None and YEAR_MIN <= end <= YEAR_MAX:
            return end
    for m in _YEAR_RE.finditer(text):
        year = int(m.group(1))
        if YEAR_MIN <= year <= YEAR_MAX:
            return year
    return None


def resolve_year(date_text: str, title: str = "") -> Optional[int]:
    """Creation year from the date column, falling back to the title.

    Ranges resolve to their final year; circa and decade forms ("c1540",
    "1420s") resolve to the year they contain.
    """
    year = _year_from(date_text)
    if year is None:
        year = _year_from(title)
    return year


def to_decade(raw_year: int) -> int:
    return (raw_year // 10) * 10


def century_of(decade: int) -> int:
    return (decade // 100) * 100


# --------------------------------------------------------------------------
# artist names

_ALLOWED_NAME_CHARS = re.compile(r"[^A-Za-z0-9 '\-.]")


def normalize_artist(name: str) -> str:
    decomposed = unicodedata.normalize("NFKD", name or "")
    stripped = "".join(ch for ch in decomposed if not unicodedata.combining(ch))
    stripped = re.sub(r"\s", " ", stripped)
    kept = _ALLOWED_NAME_CHARS.sub("", stripped)
    return " ".join(kept.split())


# --------------------------------------------------------------------------
# filters and screening


@dataclass
class FilterResult:
    records: list
    removed: dict


def filter_records(records: Sequence[RawRecord], cfg: FilterConfig) -> FilterResult:
    removed = {}
    current = list(records)
    for name in FILTER_FIELDS:
        keywords = cfg.remove_keywords[name]
        kept = [r for r in current if not cfg.matches(r.field_value(name), keywords)]
        removed[f"removed_{name.lower()}"] = len(current) - len(kept)
        current = kept
    if cfg.keep_field_keywords is not None:
        kept = [r for r in current if cfg.matches(r.field_text, cfg.keep_field_keywords)]
        removed["not_kept_field"] = len(current) - len(kept)
        current = kept
    else:
        removed["not_kept_field"] = 0
    return FilterResult(current, removed)


class Screen(enum.Enum):
    ACCEPT = "accept"
    REJECT_ASPECT = "reject_aspect"
    REJECT_RESOLUTION = "reject_resolution"


def screen_image(width: int, height: int) -> Screen:
    if width <= 0 or height <= 0:
        raise ValueError("image dimensions must be positive")
    lo, hi = min(width, height), max(width, height)
    if hi >= 2 * lo:
        return Screen.REJECT_ASPECT
    if lo < MIN_RESOLUTION:
        return Screen.REJECT_RESOLUTION
    return Screen.ACCEPT


def canonicalize_image(image) -> np.ndarray:
    """Bilinear resize to 512x512 RGB uint8."""
    if isinstance(image, Image.Image):
        im = image.convert("RGB")
    else:
        arr = np.asarray(image, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected HxWx3 RGB array, got shape {arr.shape}")
        if arr.shape[:2] == (IMAGE_SIZE, IMAGE_SIZE):
            return arr.copy()
        im = Image.fromarray(arr, mode="RGB")
    if im.size == (IMAGE_SIZE, IMAGE_SIZE):
        return np.asarray(im, dtype=np.uint8).copy()
    return np.asarray(im.resize((IMAGE_SIZE, IMAGE_SIZE), Image.BILINEAR), dtype=np.uint8)


def painting_id(artist: str, painting_name: str, content_digest: str) -> str:
    h = hashlib.blake2b(digest_size=8)
    for part in (artist, painting_name, content_digest):
        h.update(part.encode("utf-8"))
        h.update(b"\x1f")
    return h.hexdigest()


# --------------------------------------------------------------------------
# full cascade

DROP_STAGES = (
    "malformed_row",
    "missing_image",
    "no_year",
    "removed_style",
    "removed_field",
    "removed_genre",
    "removed_nationality",
    "not_kept_field",
    "unreadable_image",
    "reject_aspect",
    "reject_resolution",
    "out_of_range",
)


@dataclass
class IngestResult:
    records: list
    drops: dict
    flagged_unnamed_artist: int = 0
    drop_reasons: list = field(default_factory=list)

    def report(self) -> dict:
        return {
            "input_rows": sum(self.drops.values()) + len(self.records),
            "emitted": len(self.records),
            "drops": {k: self.drops.get(k, 0) for k in DROP_STAGES},
            "flagged_unnamed_artist": self.flagged_unnamed_artist,
        }


def _resolve_image(path_text: str, image_root) -> Optional[Path]:
    if not path_text:
        return None
    p = Path(path_text)
    if not p.is_absolute() and image_root is not None:
        p = Path(image_root) / p
    return p if p.is_file() else None


def ingest_corpus(metadata_path, image_root, cfg: FilterConfig, out_image_dir=None,
                  image_column: str = "image_path") -> IngestResult:
    """Run the whole ingest cascade over a metadata file."""
    try:
        with open(metadata_path, encoding="utf-8", newline="") as fh:
            parsed = parse_metadata(fh, image_column=image_column)
    except OSError as exc:
        raise IngestError(f"cannot open metadata {metadata_path}: {exc}") from exc

    drops = Counter({k: 0 for k in DROP_STAGES})
    drops["malformed_row"] = parsed.skipped
    reasons = []

    with_image = []
    for rec in parsed.records:
        p = _resolve_image(rec.image_path, image_root)
        if p is None:
            drops["missing_image"] += 1
            reasons.append((rec.painting_name, "missing_image"))
        else:
            with_image.append((rec, p))

    dated = []
    for rec, p in with_image:
        year = resolve_year(rec.date_text, rec.painting_name)
        if year is None:
            drops["no_year"] += 1
            reasons.append((rec.painting_name, "no_year"))
        else:
            dated.append((rec, p, year))

    filtered = filter_records([r for r, _, _ in dated], cfg)
    drops.update(filtered.removed)
    survivors = {id(r) for r in filtered.records}
    dated = [t for t in dated if id(t[0]) in survivors]

    records, unnamed = [], 0
    for rec, p, year in dated:
        try:
            with Image.open(p) as im:
                width, height = im.size
        except (OSError, Image.DecompressionBombError):
            drops["unreadable_image"] += 1
            reasons.append((rec.painting_name, "unreadable_image"))
            continue
        verdict = screen_image(width, height)
        if verdict is not Screen.ACCEPT:
            drops[verdict.value] += 1
            reasons.append((rec.painting_name, verdict.value))
            continue
        decade = to_decade(year)
        if not DECADE_MIN <= decade <= DECADE_MAX:
            drops["out_of_range"] += 1
            reasons.append((rec.painting_name, "out_of_range"))
            continue
        try:
            canonical = canonicalize_image(load_rgb(p))
        except OSError:
            drops["unreadable_image"] += 1
            reasons.append((rec.painting_name, "unreadable_image"))
            continue
        artist = normalize_artist(rec.artist_name)
        if not artist:
            unnamed += 1
        content = digest_hex(canonical)
        pid = painting_id(artist, rec.painting_name, content)
        image_ref = str(p)
        if out_image_dir is not None:
            image_ref = str(save_png(canonical, Path(out_image_dir) / f"{pid}.png"))
        rec = RawRecord(**{**asdict(rec), "width": width, "height": height})
        records.append(
            PaintingRecord(
                id=pid,
                artist=artist,
                decade=decade,
                style=rec.style_text or None,
                image_ref=image_ref,
                source={
                    "painting_name": rec.painting_name,
                    "artist_name": rec.artist_name,
                    "date_text": rec.date_text,
                    "image_path": rec.image_path,
                    "width": width,
                    "height": height,
                    "content_digest": content,
                },
            )
        )
    return IngestResult(records, dict(drops), unnamed, reasons)


def write_manifest(records: Sequence[PaintingRecord], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")
    os.replace(tmp, path)
    return path


def read_manifest(path) -> list:
    with open(path, encoding="utf-8") as fh:
        return [PaintingRecord.from_json(line) for line in fh if line.strip()]


def write_drop_report(result: IngestResult, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(result.report(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
