"""Greedy SSIM filtering of correlated images within each individual's set.

Frames pulled from the same video are often near-identical; keeping them all
inflates apparent accuracy and hurts generalization. For each individual, a
seed-chosen starting image is retained and the remaining images are visited in
manifest order (cyclically from the start); a candidate joins the retained set
only if its SSIM against every already-retained image stays below the
threshold. Identities are never compared against each other.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field

from .errors import DataError
from .imaging import SsimParams, ssim
from .manifest import DatasetManifest


@dataclass(frozen=True)
class DedupParams:
    threshold: float = 0.6
    seed: int = 0
    ssim: SsimParams = field(default_factory=SsimParams)

    def __post_init__(self):
        if not math.isfinite(self.threshold):
            raise DataError("dedup threshold must be finite")


@dataclass(frozen=True)
class IndividualDedup:
    identity: str
    retained: tuple[str, ...]
    discarded: tuple[str, ...]
    comparisons: int

    @property
    def retained_count(self) -> int:
        return len(self.retained)

    @property
    def discarded_count(self) -> int:
        return len(self.discarded)


@dataclass(frozen=True)
class DedupReport:
    threshold: float
    seed: int
    individuals: tuple[IndividualDedup, ...]

    @property
    def total_retained(self) -> int:
        return sum(ind.retained_count for ind in self.individuals)

    @property
    def total_discarded(self) -> int:
        return sum(ind.discarded_count for ind in self.individuals)

    @property
    def total_comparisons(self) -> int:
        return sum(ind.comparisons for ind in self.individuals)

    def to_json_lines(self) -> str:
        lines = [
            json.dumps(
                {"kind": "params", "threshold": self.threshold, "seed": self.seed},
                sort_keys=True,
            )
        ]
        for ind in self.individuals:
            lines.append(
                json.dumps(
                    {
                        "kind": "individual",
                        "identity": ind.identity,
                        "retained": list(ind.retained),
                        "discarded": list(ind.discarded),
                        "retained_count": ind.retained_count,
                        "discarded_count": ind.discarded_count,
                        "comparisons": ind.comparisons,
                    },
                    sort_keys=True,
                )
            )
        lines.append(
            json.dumps(
                {
                    "kind": "totals",
                    "identities": len(self.individuals),
                    "retained": self.total_retained,
                    "discarded": self.total_discarded,
                    "comparisons": self.total_comparisons,
                    "threshold": self.threshold,
                },
                sort_keys=True,
            )
        )
        return "\n".join(lines) + "\n"


def start_index(n_images: int, seed: int, identity: str = "") -> int:
    """Seed-derived index of the retained starting image."""
    return random.Random(f"{seed}|dedup-start|{identity}").randrange(n_images)


def dedup_individual(images, params: DedupParams, load, identity: str = "", ssim_fn=None):
    """Filter one individual's ordered image refs.

    `load` maps a ref to an ImageBuffer; `ssim_fn` defaults to imaging.ssim
    and exists so callers can instrument or stub the comparison. Returns
    (retained refs, discarded refs, comparison count).
    """
    refs = list(images)
    if not refs:
        raise DataError(
            f"individual '{identity}' has no images to deduplicate" if identity
            else "cannot deduplicate an empty image set"
        )
    compare = ssim_fn or (lambda a, b: ssim(a, b, params.ssim))

    start = start_index(len(refs), params.seed, identity)
    order = [(start + k) % len(refs) for k in range(len(refs))]

    retained = [refs[start]]
    retained_imgs = [load(refs[start])]
    discarded = []
    comparisons = 0
    for pos in order[1:]:
        candidate = load(refs[pos])
        keep = True
        best = -1.0
        for kept in retained_imgs:
            comparisons += 1
            best = max(best, compare(candidate, kept))
            if best >= params.threshold:
                keep = False
                break
        if keep:
            retained.append(refs[pos])
            retained_imgs.append(candidate)
        else:
            discarded.append(refs[pos])
    return tuple(retained), tuple(discarded), comparisons


def dedup_dataset(manifest: DatasetManifest, params: DedupParams, load, ssim_fn=None) -> DedupReport:
    """Apply the greedy filter independently to every identity in the manifest."""
    individuals = []
    for identity, records in manifest.by_identity().items():
        try:
            retained, discarded, comparisons = dedup_individual(
                [r.path for r in records], params, load, identity=identity, ssim_fn=ssim_fn
            )
        except DataError as exc:
            raise DataError(f"identity '{identity}': {exc}") from None
        individuals.append(
            IndividualDedup(
                identity=identity,
                retained=retained,
                discarded=discarded,
                comparisons=comparisons,
            )
        )
    return DedupReport(threshold=params.threshold, seed=params.seed, individuals=tuple(individuals))
