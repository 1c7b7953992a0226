"""Synthetic geo-tagged corpora with planted region-dependent word senses.

Each document is a few segments; a segment is one target word surrounded by
context words drawn i.i.d. from the context distribution of the sense chosen
for that occurrence. Planted words choose senses with region-specific mixtures,
stable words have one sense everywhere. Target occurrences are allocated to
regions exactly in proportion to each word's per-region rate, so with equal
rates a word is perfectly frequency-balanced across regions.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import Document, RegionMap, write_corpus


class SynthSpecError(ValueError):
    """Invalid synthetic corpus specification; the message starts with the field path."""


@dataclass
class SynthRegion:
    id: str
    n_docs: int
    bbox: tuple[float, float, float, float]  # lon_min, lat_min, lon_max, lat_max


@dataclass
class SynthSense:
    context: dict[str, float]
    pos: str = "NOUN"


@dataclass
class SynthWord:
    word: str
    senses: list[SynthSense]
    mixture: dict[str, list[float]] = field(default_factory=dict)
    rate: dict[str, float] = field(default_factory=dict)

    def mixture_for(self, region: str) -> list[float]:
        return self.mixture.get(region, [1.0 / len(self.senses)] * len(self.senses))

    def rate_for(self, region: str) -> float:
        return self.rate.get(region, 1.0)


@dataclass
class SynthSpec:
    regions: list[SynthRegion]
    planted: list[SynthWord]
    stable: list[SynthWord]
    segments_per_doc: int = 3
    context_length: tuple[int, int] = (8, 12)
    context_pos: str = "X"
    resolution: str = "country"
    seed: int = 0

    @property
    def targets(self) -> list[SynthWord]:
        return self.planted + self.stable

    @property
    def vocabulary(self) -> list[str]:
        words = {t.word for t in self.targets}
        for t in self.targets:
            for s in t.senses:
                words.update(s.context)
        return sorted(words)

    def region_map(self) -> RegionMap:
        return RegionMap.from_dict({"resolution": self.resolution,
                                    "regions": [{"id": r.id, "bbox": list(r.bbox)} for r in self.regions]})

    def validate(self) -> "SynthSpec":
        def fail(path, msg):
            raise SynthSpecError(f"{path}: {msg}")

        if not self.regions:
            fail("regions", "at least one region required")
        region_ids = [r.id for r in self.regions]
        if len(set(region_ids)) != len(region_ids):
            fail("regions", "duplicate region id")
        for i, r in enumerate(self.regions):
            if r.n_docs < 0:
                fail(f"regions[{i}].n_docs", "must be >= 0")
            lon0, lat0, lon1, lat1 = r.bbox
            if not (-180 <= lon0 <= lon1 <= 180 and -90 <= lat0 <= lat1 <= 90):
                fail(f"regions[{i}].bbox", "must be [lon_min, lat_min, lon_max, lat_max] within range")
        if self.segments_per_doc < 1:
            fail("segments_per_doc", "must be >= 1")
        lo, hi = self.context_length
        if not 0 <= lo <= hi:
            fail("context_length", "must satisfy 0 <= min <= max")
        if not self.targets:
            fail("planted", "need at least one planted or stable word")
        targets = {t.word for t in self.targets}
        overlap = {t.word for t in self.planted} & {t.word for t in self.stable}
        if overlap:
            fail("stable", f"words also planted: {sorted(overlap)}")
        if len(targets) != len(self.targets):
            fail("planted", "duplicate target word")
        for group in ("planted", "stable"):
            for i, t in enumerate(getattr(self, group)):
                base = f"{group}[{i}]"
                if not t.senses:
                    fail(f"{base}.senses", "at least one sense required")
                if group == "stable" and len(t.senses) != 1:
                    fail(f"{base}.senses", "stable words have exactly one sense")
                for j, s in enumerate(t.senses):
                    probs = np.asarray(list(s.context.values()), dtype=float)
                    if not len(probs) or (probs < 0).any() or abs(probs.sum() - 1) > 1e-9:
                        fail(f"{base}.senses[{j}].context", "must be a probability distribution")
                    if set(s.context) & targets:
                        fail(f"{base}.senses[{j}].context", "context words may not be target words")
                for region, mix in t.mixture.items():
                    if region not in region_ids:
                        fail(f"{base}.mixture.{region}", "unknown region")
                    m = np.asarray(mix, dtype=float)
                    if len(m) != len(t.senses) or (m < 0).any() or abs(m.sum() - 1) > 1e-9:
                        fail(f"{base}.mixture.{region}", "must be a probability vector over senses")
                for region, rate in t.rate.items():
                    if region not in region_ids:
                        fail(f"{base}.rate.{region}", "unknown region")
                    if rate <= 0:
                        fail(f"{base}.rate.{region}", "must be > 0")
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        try:
            def words(items):
                return [SynthWord(word=t["word"], senses=[SynthSense(**s) for s in t["senses"]],
                                  mixture=dict(t.get("mixture", {})), rate=dict(t.get("rate", {})))
                        for t in items]
            spec = cls(
                regions=[SynthRegion(r["id"], int(r["n_docs"]), tuple(r["bbox"])) for r in data["regions"]],
                planted=words(data.get("planted", [])),
                stable=words(data.get("stable", [])),
                segments_per_doc=int(data.get("segments_per_doc", 3)),
                context_length=tuple(data.get("context_length", (8, 12))),
                context_pos=data.get("context_pos", "X"),
                resolution=data.get("resolution", "country"),
                seed=int(data.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise SynthSpecError(f"spec: malformed ({exc})") from exc
        return spec.validate()

    @classmethod
    def load(cls, path: str | Path) -> "SynthSpec":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)


def _allocate(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer split of ``total`` proportional to ``weights`` (largest remainder)."""
    quota = total * weights / weights.sum()
    counts = np.floor(quota).astype(int)
    order = np.argsort(-(quota - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def generate(spec: SynthSpec) -> tuple[list[Document], dict[str, int]]:
    """Documents (shuffled across regions) and the ground-truth word labels."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    targets = spec.targets
    contexts = [[(list(s.context), np.asarray(list(s.context.values()))) for s in t.senses]
                for t in targets]
    lo, hi = spec.context_length
    docs = []
    for region in spec.regions:
        rates = np.asarray([t.rate_for(region.id) for t in targets], dtype=float)
        slots = _allocate(region.n_docs * spec.segments_per_doc, rates)
        schedule = rng.permutation(np.repeat(np.arange(len(targets)), slots))
        lon0, lat0, lon1, lat1 = region.bbox
        for j in range(region.n_docs):
            tokens, tags = [], []
            for t_idx in schedule[j * spec.segments_per_doc:(j + 1) * spec.segments_per_doc]:
                target = targets[t_idx]
                sense = int(rng.choice(len(target.senses), p=target.mixture_for(region.id)))
                words, probs = contexts[t_idx][sense]
                ctx = [words[k] for k in rng.choice(len(words), size=int(rng.integers(lo, hi + 1)), p=probs)]
                half = len(ctx) // 2
                tokens += ctx[:half] + [target.word] + ctx[half:]
                tags += [spec.context_pos] * half + [target.senses[sense].pos] + \
                    [spec.context_pos] * (len(ctx) - half)
            docs.append(Document(
                id=f"{region.id}-{j:06d}",
                text=" ".join(tokens),
                tokens=tuple(tokens),
                pos_tags=tuple(tags),
                lat=round(float(rng.uniform(lat0, lat1)), 6),
                lon=round(float(rng.uniform(lon0, lon1)), 6),
                region_labels={spec.resolution: region.id},
            ))
    docs = [docs[i] for i in rng.permutation(len(docs))]
    labels = {t.word: 1 for t in spec.planted} | {t.word: 0 for t in spec.stable}
    return docs, labels


def expected_unigram(spec: SynthSpec) -> dict[str, float]:
    """Expected token distribution of corpora generated from ``spec``."""
    mean_len = sum(spec.context_length) / 2.0
    mass: dict[str, float] = {}
    targets = spec.targets
    for region in spec.regions:
        rates = np.asarray([t.rate_for(region.id) for t in targets], dtype=float)
        slots = _allocate(region.n_docs * spec.segments_per_doc, rates)
        for t, n in zip(targets, slots):
            mass[t.word] = mass.get(t.word, 0.0) + n
            for sense, p_sense in zip(t.senses, t.mixture_for(region.id)):
                for w, p in sense.context.items():
                    mass[w] = mass.get(w, 0.0) + n * mean_len * p_sense * p
    total = sum(mass.values())
    return {w: m / total for w, m in mass.items()}


def write_labels(labels: dict[str, int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for word, label in labels.items():
            fh.write(f"{word}\t{label}\n")


def generate_to_files(spec: SynthSpec, corpus_path, labels_path) -> None:
    docs, labels = generate(spec)
    write_corpus(docs, corpus_path)
    write_labels(labels, labels_path)


DEFAULT_REGIONS = (
    ("US", (-125.0, 25.0, -66.0, 49.0)),
    ("UK", (-8.0, 50.0, 2.0, 59.0)),
)


def planted_spec(n_planted: int = 20, n_stable: int = 20, vocab_size: int = 200,
                 docs_per_region: int = 2000, mixtures=((0.9, 0.1), (0.1, 0.9)),
                 regions=DEFAULT_REGIONS, core_size: int = 6, core_mass: float = 0.8,
                 segments_per_doc: int = 3, context_length=(8, 12), seed: int = 0,
                 planted_pos=("NOUN", "NOUN")) -> SynthSpec:
    """Two-sense planted words against one-sense stable words.

    Every sense concentrates ``core_mass`` on ``core_size`` context words (the
    two senses of a planted word never share core words) and spreads the rest
    uniformly over all context words. ``mixtures[i]`` is the sense mixture of
    planted words in region ``i``.
    """
    n_context = vocab_size - n_planted - n_stable
    if n_context < 2 * core_size:
        raise SynthSpecError("vocab_size: too small for the requested targets and core size")
    if len(mixtures) != len(regions):
        raise SynthSpecError("mixtures: need one mixture per region")
    rng = np.random.default_rng(seed)
    ctx_words = [f"ctx{i:03d}" for i in range(n_context)]
    background = (1.0 - core_mass) / n_context

    def sense_dist(exclude=()):
        pool = [i for i in range(n_context) if i not in exclude]
        core = rng.choice(pool, size=core_size, replace=False)
        probs = np.full(n_context, background)
        probs[core] += core_mass / core_size
        probs /= probs.sum()
        return {w: float(p) for w, p in zip(ctx_words, probs)}, set(core.tolist())

    planted = []
    for i in range(n_planted):
        first, core = sense_dist()
        second, _ = sense_dist(exclude=core)
        planted.append(SynthWord(
            word=f"shift{i:02d}",
            senses=[SynthSense(first, planted_pos[0]), SynthSense(second, planted_pos[1])],
            mixture={rid: list(mix) for (rid, _), mix in zip(regions, mixtures)},
        ))
    stable = [SynthWord(word=f"same{i:02d}", senses=[SynthSense(sense_dist()[0])])
              for i in range(n_stable)]
    return SynthSpec(
        regions=[SynthRegion(rid, docs_per_region, tuple(bbox)) for rid, bbox in regions],
        planted=planted, stable=stable, segments_per_doc=segments_per_doc,
        context_length=tuple(context_length), seed=seed,
    ).validate()


def split_region_map(spec: SynthSpec, resolution: str = "subregion") -> tuple[RegionMap, dict[str, str]]:
    """West/east halves of every spec region, plus the child-to-parent mapping."""
    entries, parent = [], {}
    for r in spec.regions:
        lon0, lat0, lon1, lat1 = r.bbox
        mid = (lon0 + lon1) / 2.0
        for suffix, box in (("W", [lon0, lat0, mid, lat1]), ("E", [mid, lat0, lon1, lat1])):
            entries.append({"id": f"{r.id}-{suffix}", "bbox": box})
            parent[f"{r.id}-{suffix}"] = r.id
    return RegionMap.from_dict({"resolution": resolution, "regions": entries}), parent
