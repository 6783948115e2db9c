"""Evaluation protocols: dataset splits, CMC curves, ROC/AUC, rank-k tables.

The split protocol partitions identities into train/test, enrolls all train
images plus half of each test identity's images as the gallery, and holds the
other half as probes. All randomness is seeded and every operation is
deterministic given its inputs.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .errors import DataError
from .gallery import Embedding, Gallery

DEFAULT_TRAIN_IDENTITIES = 34
DEFAULT_TEST_IDENTITIES = 17
DEFAULT_PROBE_FRACTION = 0.5
DEFAULT_RANKS = (1, 5, 10)


@dataclass(frozen=True)
class LabeledRef:
    """An image reference with its identity label."""

    ref: str
    identity: str


@dataclass(frozen=True)
class SplitSpec:
    train_identities: int = DEFAULT_TRAIN_IDENTITIES
    test_identities: int = DEFAULT_TEST_IDENTITIES
    probe_fraction: float = DEFAULT_PROBE_FRACTION
    seed: int = 0

    def __post_init__(self):
        if self.train_identities < 1 or self.test_identities < 1:
            raise DataError("train/test identity counts must be >= 1")
        if not 0.0 < self.probe_fraction < 1.0:
            raise DataError(f"probe_fraction must be in (0, 1), got {self.probe_fraction}")


@dataclass(frozen=True)
class EvalSplit:
    """A realized gallery/probe partition plus what is needed to re-halve it."""

    train: tuple[LabeledRef, ...]
    gallery: tuple[LabeledRef, ...]
    probe: tuple[LabeledRef, ...]
    train_identities: tuple[str, ...]
    test_identities: tuple[str, ...]
    probe_fraction: float
    seed: int


def _probe_count(n_images: int, fraction: float) -> int:
    # round-half-up for the probe share, clamped so the identity keeps at
    # least one image on each side
    k = int(math.floor(fraction * n_images + 0.5))
    return max(1, min(n_images - 1, k))


def _halve_test_identity(refs: list[str], rng: random.Random, fraction: float):
    shuffled = refs[:]
    rng.shuffle(shuffled)
    k = _probe_count(len(shuffled), fraction)
    return shuffled[:k], shuffled[k:]  # (probe, gallery half)


def make_split(items: list[LabeledRef] | tuple[LabeledRef, ...], spec: SplitSpec) -> EvalSplit:
    """Identity-level random partition, then per-test-identity halving.

    Identities are shuffled by the seed; the first train_identities become
    training identities and the next test_identities become test identities
    (extras, if any, are left out entirely). Each test identity's images are
    shuffled and split into probe and gallery halves.
    """
    by_identity: dict[str, list[str]] = {}
    for it in items:
        by_identity.setdefault(it.identity, []).append(it.ref)

    identities = list(by_identity)
    needed = spec.train_identities + spec.test_identities
    if len(identities) < needed:
        raise DataError(
            f"need at least {needed} identities "
            f"({spec.train_identities} train + {spec.test_identities} test), "
            f"found {len(identities)}"
        )

    rng = random.Random(f"{spec.seed}|identity-partition")
    shuffled = identities[:]
    rng.shuffle(shuffled)
    train_ids = tuple(shuffled[: spec.train_identities])
    test_ids = tuple(shuffled[spec.train_identities : needed])

    for identity in test_ids:
        if len(by_identity[identity]) < 2:
            raise DataError(
                f"test identity '{identity}' has {len(by_identity[identity])} image(s); "
                "need at least 2 to halve into gallery and probe"
            )

    train = tuple(LabeledRef(r, i) for i in train_ids for r in by_identity[i])
    gallery: list[LabeledRef] = list(train)
    probe: list[LabeledRef] = []
    for identity in test_ids:
        halve_rng = random.Random(f"{spec.seed}|halve|{identity}")
        p_refs, g_refs = _halve_test_identity(by_identity[identity], halve_rng, spec.probe_fraction)
        probe.extend(LabeledRef(r, identity) for r in p_refs)
        gallery.extend(LabeledRef(r, identity) for r in g_refs)

    return EvalSplit(
        train=train,
        gallery=tuple(gallery),
        probe=tuple(probe),
        train_identities=train_ids,
        test_identities=test_ids,
        probe_fraction=spec.probe_fraction,
        seed=spec.seed,
    )


def rehalve_split(split: EvalSplit, seed: int) -> EvalSplit:
    """Re-draw only the probe/gallery halving of the test identities."""
    pools: dict[str, list[str]] = {i: [] for i in split.test_identities}
    for it in list(split.gallery) + list(split.probe):
        if it.identity in pools:
            pools[it.identity].append(it.ref)
    for identity in split.test_identities:
        pools[identity].sort()

    gallery: list[LabeledRef] = list(split.train)
    probe: list[LabeledRef] = []
    for identity in split.test_identities:
        rng = random.Random(f"{seed}|halve|{identity}")
        p_refs, g_refs = _halve_test_identity(pools[identity], rng, split.probe_fraction)
        probe.extend(LabeledRef(r, identity) for r in p_refs)
        gallery.extend(LabeledRef(r, identity) for r in g_refs)
    return EvalSplit(
        train=split.train,
        gallery=tuple(gallery),
        probe=tuple(probe),
        train_identities=split.train_identities,
        test_identities=split.test_identities,
        probe_fraction=split.probe_fraction,
        seed=seed,
    )


@dataclass(frozen=True)
class CmcCurve:
    """Cumulative match rates indexed by rank k = 1..K."""

    rates: tuple[float, ...]

    def rate(self, k: int) -> float:
        if not 1 <= k <= len(self.rates):
            raise DataError(f"rank {k} outside curve range 1..{len(self.rates)}")
        return self.rates[k - 1]


def compute_cmc(rankings, truths, max_rank: int) -> CmcCurve:
    """Fraction of probes whose true identity appears within the top k.

    rankings holds one identity list (best first) per probe; probes whose
    identity is absent from their ranking never count as hits.
    """
    if len(rankings) == 0:
        raise DataError("compute_cmc needs at least one probe")
    if len(rankings) != len(truths):
        raise DataError(f"{len(rankings)} rankings vs {len(truths)} truth labels")
    if max_rank < 1:
        raise DataError("max_rank must be >= 1")

    hits_at = [0] * (max_rank + 1)
    for ranked, truth in zip(rankings, truths):
        for pos, identity in enumerate(ranked, start=1):
            if identity == truth:
                if pos <= max_rank:
                    hits_at[pos] += 1
                break
    n = len(rankings)
    cumulative = 0
    rates = []
    for k in range(1, max_rank + 1):
        cumulative += hits_at[k]
        rates.append(cumulative / n)
    return CmcCurve(rates=tuple(rates))


@dataclass(frozen=True)
class PairSample:
    """Genuine (same-identity) and imposter (cross-identity) unordered pairs."""

    genuine: tuple[tuple[str, str], ...]
    imposter: tuple[tuple[str, str], ...]
    seed: int


def sample_pairs(
    items: list[LabeledRef] | tuple[LabeledRef, ...],
    n_genuine: int,
    n_imposter: int,
    seed: int,
) -> PairSample:
    """Uniform sampling without replacement over valid unordered pairs."""
    if n_genuine < 0 or n_imposter < 0:
        raise DataError("pair counts must be nonnegative")
    refs = [it.ref for it in items]
    labels = [it.identity for it in items]
    if len(set(refs)) != len(refs):
        raise DataError("image refs must be unique to sample pairs")

    by_identity: dict[str, list[int]] = {}
    for idx, lab in enumerate(labels):
        by_identity.setdefault(lab, []).append(idx)

    genuine_all: list[tuple[int, int]] = []
    for idxs in by_identity.values():
        for i in range(len(idxs)):
            for j in range(i + 1, len(idxs)):
                genuine_all.append((idxs[i], idxs[j]))
    if n_genuine > len(genuine_all):
        raise DataError(
            f"requested {n_genuine} genuine pairs but only {len(genuine_all)} exist"
        )

    n = len(refs)
    total_pairs = n * (n - 1) // 2
    imposter_available = total_pairs - len(genuine_all)
    if n_imposter > imposter_available:
        raise DataError(
            f"requested {n_imposter} imposter pairs but only {imposter_available} exist"
        )

    rng = random.Random(f"{seed}|pairs")
    genuine = rng.sample(genuine_all, n_genuine)

    if imposter_available <= max(4 * n_imposter, 10000):
        imposter_all = [
            (i, j)
            for i in range(n)
            for j in range(i + 1, n)
            if labels[i] != labels[j]
        ]
        imposter = rng.sample(imposter_all, n_imposter)
    else:
        chosen: set[tuple[int, int]] = set()
        imposter = []
        while len(imposter) < n_imposter:
            i = rng.randrange(n)
            j = rng.randrange(n)
            if i == j or labels[i] == labels[j]:
                continue
            pair = (i, j) if i < j else (j, i)
            if pair in chosen:
                continue
            chosen.add(pair)
            imposter.append(pair)

    return PairSample(
        genuine=tuple((refs[i], refs[j]) for i, j in genuine),
        imposter=tuple((refs[i], refs[j]) for i, j in imposter),
        seed=seed,
    )


@dataclass(frozen=True)
class RocCurve:
    """Operating points along a descending threshold sweep, plus the AUC."""

    points: tuple[tuple[float, float], ...]  # (fpr, tpr)
    thresholds: tuple[float, ...]
    auc: float


def compute_roc(genuine_scores, imposter_scores) -> RocCurve:
    """Sweep thresholds over the distinct scores (plus +-inf sentinels).

    tpr(t) is the fraction of genuine scores >= t, fpr(t) the same for
    imposters; the AUC integrates the swept polyline by the trapezoidal rule.
    """
    gen = [float(s) for s in genuine_scores]
    imp = [float(s) for s in imposter_scores]
    if not gen or not imp:
        raise DataError("ROC needs at least one genuine and one imposter score")

    thresholds = [math.inf] + sorted(set(gen) | set(imp), reverse=True) + [-math.inf]
    points = []
    for t in thresholds:
        tpr = sum(1 for s in gen if s >= t) / len(gen)
        fpr = sum(1 for s in imp if s >= t) / len(imp)
        points.append((fpr, tpr))

    auc = 0.0
    for (f0, t0), (f1, t1) in zip(points, points[1:]):
        auc += (f1 - f0) * (t0 + t1) / 2.0
    return RocCurve(points=tuple(points), thresholds=tuple(thresholds), auc=auc)


@dataclass(frozen=True)
class RankTable:
    """Identification rates (in [0, 1]) at fixed ranks across folds."""

    ranks: tuple[int, ...]
    per_fold: tuple[dict, ...]
    mean: dict
    std: dict

    def as_rows(self) -> list[dict]:
        rows = []
        for fold, rates in enumerate(self.per_fold):
            rows.append({"fold": fold, **{f"rank{k}": rates[k] for k in self.ranks}})
        rows.append({"fold": "mean", **{f"rank{k}": self.mean[k] for k in self.ranks}})
        rows.append({"fold": "std", **{f"rank{k}": self.std[k] for k in self.ranks}})
        return rows


def _sample_std(values) -> float:
    n = len(values)
    if n < 2:
        return 0.0
    m = sum(values) / n
    return math.sqrt(sum((v - m) ** 2 for v in values) / (n - 1))


def rank_k_table(
    split: EvalSplit,
    embed,
    folds: int,
    ranks: tuple[int, ...] = DEFAULT_RANKS,
) -> RankTable:
    """Cross-validated rank-k identification rates.

    Each fold re-draws the probe/gallery halving with seed split.seed + fold,
    enrolls the fold's gallery through `embed` (a ref, identity -> Embedding
    callable), identifies every probe, and reads the CMC at the requested
    ranks. Mean and sample (n-1) standard deviation summarize the folds.
    """
    if folds < 2:
        raise DataError("cross-validation needs folds >= 2")
    if not ranks or any(k < 1 for k in ranks):
        raise DataError("ranks must be positive")

    per_fold = []
    max_rank = max(ranks)
    for fold in range(folds):
        fold_split = rehalve_split(split, split.seed + fold)
        gal = Gallery()
        for it in fold_split.gallery:
            gal.enroll(it.identity, embed(it.ref, it.identity), source_ref=it.ref)
        rankings = []
        truths = []
        for it in fold_split.probe:
            result = gal.identify(embed(it.ref, it.identity))
            rankings.append([identity for identity, _ in result.ranking])
            truths.append(it.identity)
        curve = compute_cmc(rankings, truths, max_rank)
        per_fold.append({k: curve.rate(k) for k in ranks})

    mean = {k: sum(f[k] for f in per_fold) / folds for k in ranks}
    std = {k: _sample_std([f[k] for f in per_fold]) for k in ranks}
    return RankTable(ranks=tuple(ranks), per_fold=tuple(per_fold), mean=mean, std=std)
