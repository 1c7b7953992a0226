"""Geo-tagged document ingestion, tokenization, vocabulary and region lookup."""
from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import shapely

UNKNOWN = "unknown"

_URL = re.compile(r"^(?:[a-z][a-z0-9+.\-]*://|www\.|[\w\-]+(?:\.[\w\-]+)+/)", re.IGNORECASE)
_SPLIT = re.compile(r"[\W_]+")
_APOSTROPHES = re.compile(r"['’ʼ]")


def _chunk_tokens(chunk: str) -> list[str]:
    if not chunk or chunk.startswith("@") or _URL.match(chunk):
        return []
    chunk = _APOSTROPHES.sub("", chunk.lstrip("#").lower())
    return [t for t in _SPLIT.split(chunk) if any(ch.isalpha() for ch in t)]


def tokenize(text: str) -> list[str]:
    """Split raw tweet-like text into lowercase word tokens.

    URLs, @-mentions, emoji and purely numeric or symbolic pieces are dropped;
    a leading ``#`` is stripped so hashtags keep their word.

    >>> tokenize("Check https://t.co/x my FLAT!!")
    ['check', 'my', 'flat']
    >>> tokenize("@bob loves #football")
    ['loves', 'football']
    """
    return [t for chunk in text.split() for t in _chunk_tokens(chunk)]


def tokenize_tagged(text: str, tags: Sequence[str]) -> tuple[list[str], list[str]]:
    """Tokenize ``text`` whose whitespace chunks carry one POS tag each.

    Every token produced from a chunk inherits that chunk's tag.
    """
    chunks = text.split()
    if len(chunks) != len(tags):
        raise ValueError(
            f"pos has {len(tags)} tags but text has {len(chunks)} whitespace-separated chunks"
        )
    tokens, out_tags = [], []
    for chunk, tag in zip(chunks, tags):
        for t in _chunk_tokens(chunk):
            tokens.append(t)
            out_tags.append(tag)
    return tokens, out_tags


@dataclass(frozen=True)
class Document:
    """One geo-tagged text record.

    ``tokens`` holds token strings; use :meth:`Vocabulary.encode` for id arrays.
    """

    id: str
    text: str = ""
    tokens: tuple[str, ...] = ()
    pos_tags: tuple[str, ...] | None = None
    lat: float | None = None
    lon: float | None = None
    region_labels: Mapping[str, str] = field(default_factory=dict)
    timestamp: str | None = None

    def __post_init__(self):
        if self.pos_tags is not None and len(self.pos_tags) != len(self.tokens):
            raise ValueError(
                f"document {self.id!r}: {len(self.pos_tags)} POS tags for {len(self.tokens)} tokens"
            )
        if (self.lat is None) != (self.lon is None):
            raise ValueError(f"document {self.id!r}: lat and lon must be given together")
        if self.lat is not None:
            if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
                raise ValueError(f"document {self.id!r}: coordinates out of range")
        elif not any(self.region_labels.values()):
            raise ValueError(f"document {self.id!r}: needs coordinates or a region label")

    @property
    def has_coordinates(self) -> bool:
        return self.lat is not None

    @classmethod
    def from_record(cls, record: Mapping) -> "Document":
        """Build a document from one parsed corpus-file line.

        A ``tokens`` array, when present, is taken as already tokenized; otherwise
        ``text`` is tokenized and ``pos`` (if any) aligns with its whitespace chunks.
        """
        text = record.get("text") or ""
        pos = record.get("pos")
        if record.get("tokens") is not None:
            tokens = [str(t) for t in record["tokens"]]
            tags = [str(t) for t in pos] if pos is not None else None
        elif pos is not None:
            tokens, tags = tokenize_tagged(text, [str(t) for t in pos])
        else:
            tokens, tags = tokenize(text), None
        lat, lon = record.get("lat"), record.get("lon")
        return cls(
            id=str(record.get("id", "")),
            text=text,
            tokens=tuple(tokens),
            pos_tags=tuple(tags) if tags is not None else None,
            lat=float(lat) if lat is not None else None,
            lon=float(lon) if lon is not None else None,
            region_labels={str(k): str(v) for k, v in (record.get("region") or {}).items()},
            timestamp=record.get("created_at"),
        )

    def to_record(self) -> dict:
        record = {"id": self.id, "text": self.text, "tokens": list(self.tokens)}
        if self.pos_tags is not None:
            record["pos"] = list(self.pos_tags)
        if self.lat is not None:
            record["lat"], record["lon"] = self.lat, self.lon
        if self.region_labels:
            record["region"] = dict(self.region_labels)
        if self.timestamp is not None:
            record["created_at"] = self.timestamp
        return record


def iter_corpus(path: str | Path) -> Iterator[Document]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield Document.from_record(json.loads(line))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc


def read_corpus(path: str | Path) -> list[Document]:
    return list(iter_corpus(path))


def write_corpus(documents: Iterable[Document], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for doc in documents:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-filtered token/id mapping.

    Ids are assigned by descending frequency, ties broken by token string, so
    the mapping depends only on token counts and never on document order.
    """

    id_to_token: tuple[str, ...]
    frequency: np.ndarray
    min_freq: int
    total_tokens: int
    token_to_id: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "token_to_id", {t: i for i, t in enumerate(self.id_to_token)})
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self) -> int:
        return len(self.id_to_token)

    def __contains__(self, token) -> bool:
        return token in self.token_to_id

    def __getitem__(self, token: str) -> int:
        try:
            return self.token_to_id[token]
        except KeyError:
            raise KeyError(f"word {token!r} not in vocabulary") from None

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        """Token ids for in-vocabulary tokens, OOV tokens dropped."""
        ids = [self.token_to_id[t] for t in tokens if t in self.token_to_id]
        return np.asarray(ids, dtype=np.int32)

    def filter_document(self, doc: Document) -> Document:
        keep = [i for i, t in enumerate(doc.tokens) if t in self.token_to_id]
        tags = tuple(doc.pos_tags[i] for i in keep) if doc.pos_tags is not None else None
        return replace(doc, tokens=tuple(doc.tokens[i] for i in keep), pos_tags=tags)

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# min_freq={self.min_freq} total_tokens={self.total_tokens}\n")
            for token, freq in zip(self.id_to_token, self.frequency):
                fh.write(f"{token}\t{int(freq)}\n")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        tokens, freqs = [], []
        min_freq, total = 1, 0
        with open(path, encoding="utf-8") as fh:
            header = fh.readline()
            for item in header.lstrip("# ").split():
                key, _, value = item.partition("=")
                if key == "min_freq":
                    min_freq = int(value)
                elif key == "total_tokens":
                    total = int(value)
            for line in fh:
                token, freq = line.rstrip("\n").split("\t")
                tokens.append(token)
                freqs.append(int(freq))
        return cls(tuple(tokens), np.asarray(freqs, dtype=np.int64), min_freq, total)


def build_vocabulary(documents: Iterable, min_freq: int = 20) -> Vocabulary:
    """Count tokens and keep those occurring at least ``min_freq`` times.

    ``documents`` may hold :class:`Document` objects or plain token sequences.
    """
    if min_freq < 1:
        raise ValueError("min_freq must be >= 1")
    counts: Counter[str] = Counter()
    total = 0
    for doc in documents:
        toks = doc.tokens if isinstance(doc, Document) else doc
        counts.update(toks)
        total += len(toks)
    kept = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
    if not kept:
        raise ValueError("no tokens survive min_freq")
    freq = np.asarray([counts[t] for t in kept], dtype=np.int64)
    return Vocabulary(tuple(kept), freq, min_freq, total)


@dataclass(frozen=True)
class RegionMap:
    """Ordered region geometries for one resolution; first match wins."""

    resolution: str
    regions: tuple[tuple[str, object], ...]

    def __post_init__(self):
        ids = [rid for rid, _ in self.regions]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate region ids in resolution {self.resolution!r}")
        if UNKNOWN in ids:
            raise ValueError(f"region id {UNKNOWN!r} is reserved")

    @property
    def region_ids(self) -> list[str]:
        return [rid for rid, _ in self.regions]

    def locate(self, lat: float, lon: float) -> str:
        point = shapely.Point(lon, lat)
        for rid, geom in self.regions:
            if geom.covers(point):
                return rid
        return UNKNOWN

    @classmethod
    def from_dict(cls, data: Mapping) -> "RegionMap":
        regions = []
        for i, entry in enumerate(data["regions"]):
            if "bbox" in entry:
                lon_min, lat_min, lon_max, lat_max = entry["bbox"]
                geom = shapely.box(lon_min, lat_min, lon_max, lat_max)
            elif "polygon" in entry:
                geom = shapely.Polygon(entry["polygon"])
            else:
                raise ValueError(f"regions[{i}]: needs 'bbox' or 'polygon'")
            shapely.prepare(geom)
            regions.append((str(entry["id"]), geom))
        return cls(str(data["resolution"]), tuple(regions))

    @classmethod
    def load(cls, path: str | Path) -> "RegionMap":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        regions = []
        for rid, geom in self.regions:
            coords = [list(c) for c in geom.exterior.coords]
            regions.append({"id": rid, "polygon": coords})
        return {"resolution": self.resolution, "regions": regions}


def assign_region(doc: Document, resolution: str, region_map: RegionMap | None = None) -> str:
    """Region id of ``doc`` at ``resolution``.

    An explicit label wins; otherwise the first region of ``region_map``
    covering the document's point, or ``"unknown"``.
    """
    label = doc.region_labels.get(resolution)
    if label:
        return label
    if region_map is None or region_map.resolution != resolution:
        raise ValueError(
            f"document {doc.id!r} has no {resolution!r} label and no region map for that resolution"
        )
    if not doc.has_coordinates:
        return UNKNOWN
    return region_map.locate(doc.lat, doc.lon)


@dataclass
class CorpusStats:
    """Document, token and distinct-term counts per region plus totals.

    Document and token totals are sums over regions (``unknown`` included);
    the distinct-term total counts the union of region vocabularies.
    """

    resolution: str
    docs: dict[str, int]
    tokens: dict[str, int]
    terms: dict[str, int]
    total_docs: int = 0
    total_tokens: int = 0
    total_terms: int = 0

    def rows(self) -> list[tuple[str, int, int, int]]:
        return [(r, self.docs[r], self.tokens[r], self.terms[r]) for r in self.docs]

    def to_dict(self) -> dict:
        return {
            "resolution": self.resolution,
            "regions": {r: {"docs": d, "tokens": t, "terms": m} for r, d, t, m in self.rows()},
            "total": {"docs": self.total_docs, "tokens": self.total_tokens, "terms": self.total_terms},
        }


def corpus_stats(
    documents: Iterable[Document],
    resolution: str,
    region_map: RegionMap | None = None,
    vocab: Vocabulary | None = None,
) -> CorpusStats:
    docs: Counter[str] = Counter()
    tokens: Counter[str] = Counter()
    terms: dict[str, set[str]] = {}
    if region_map is not None and region_map.resolution == resolution:
        for rid in region_map.region_ids:
            docs[rid] += 0
            terms.setdefault(rid, set())
    for doc in documents:
        region = assign_region(doc, resolution, region_map)
        toks = doc.tokens if vocab is None else [t for t in doc.tokens if t in vocab]
        docs[region] += 1
        tokens[region] += len(toks)
        terms.setdefault(region, set()).update(toks)
    order = list(docs)
    all_terms = set().union(*terms.values()) if terms else set()
    return CorpusStats(
        resolution=resolution,
        docs={r: docs[r] for r in order},
        tokens={r: tokens[r] for r in order},
        terms={r: len(terms.get(r, ())) for r in order},
        total_docs=sum(docs.values()),
        total_tokens=sum(tokens.values()),
        total_terms=len(all_terms),
    )
