"""Command-line entry point.

Commands: ingest, dedup, split, align, enroll, identify, and
evaluate {cmc,roc,ranks,landmarks}. Every run is reproducible: all sampling
derives from the top-level --seed through fixed labels, batch outputs keep
input order, and files are written atomically (temp + rename).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import dedup as dedup_mod
from . import evaluation as ev
from . import imageio
from .align import AlignParams, align_face
from .errors import DataError, ProviderError, WildfaceError, exit_code_for
from .gallery import Gallery, cosine_similarity, load_gallery, save_gallery
from .landmarks import localization_error
from .manifest import SOURCES, SOURCE_VIDEO, DatasetManifest, dump_manifest, ingest_video, load_manifest
from .pipeline import PipelineStageError, ProviderSet, extract_face_descriptor, run_pipeline
from .providers import MockDetector, MockEmbedder, MockSegmenter


def derive_seed(base: int, label: str) -> int:
    """Stable per-subsystem seed derived from the top-level seed."""
    digest = hashlib.sha256(f"{base}|{label}".encode("utf-8")).digest()
    return int.from_bytes(digest[:6], "little")


def write_text_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_gallery_atomic(gallery: Gallery, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            save_gallery(gallery, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def map_ordered(fn, items, jobs: int):
    """Apply fn over items, optionally in a worker pool, preserving order."""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def resolve_path(manifest_path: str, images_root: str | None, ref: str) -> Path:
    p = Path(ref)
    if p.is_absolute():
        return p
    root = Path(images_root) if images_root else Path(manifest_path).parent
    return root / p


def build_providers(args, manifest: DatasetManifest) -> ProviderSet:
    spec = args.provider
    if spec == "mock":
        return ProviderSet(
            detector=MockDetector.from_manifest(manifest),
            segmenter=MockSegmenter.from_manifest(manifest),
            embedder=MockEmbedder.from_manifest(manifest),
        )
    if spec.startswith("external:"):
        raise ProviderError(
            f"no adapter is registered for external provider '{spec[len('external:'):]}'; "
            "implement the FaceDetector/FaceSegmenter/FaceEmbedder interfaces and wire "
            "them into build_providers"
        )
    raise DataError(f"unknown provider spec '{spec}' (expected 'mock' or 'external:<spec>')")


def parse_align_params(text: str | None) -> AlignParams:
    if not text:
        return AlignParams()
    values: dict = {}
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise DataError(f"bad alignment parameter '{part}' (expected key=value)")
        key, raw = part.split("=", 1)
        key = key.strip()
        if key not in ("a", "b", "c", "output_side"):
            raise DataError(f"unknown alignment parameter '{key}'")
        values[key] = int(raw) if key == "output_side" else float(raw)
    return AlignParams(**values)


def split_to_lines(split: ev.EvalSplit) -> str:
    lines = [
        json_line(
            {
                "kind": "params",
                "seed": split.seed,
                "probe_fraction": split.probe_fraction,
                "train_identities": list(split.train_identities),
                "test_identities": list(split.test_identities),
            }
        )
    ]
    for role, members in (("train", split.train), ("gallery", split.gallery), ("probe", split.probe)):
        for it in members:
            lines.append(json_line({"kind": "member", "role": role, "identity": it.identity, "path": it.ref}))
    return "\n".join(lines) + "\n"


def load_split(path) -> ev.EvalSplit:
    params = None
    members: dict[str, list[ev.LabeledRef]] = {"train": [], "gallery": [], "probe": []}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataError(f"split file line {line_no}: {exc}") from None
            if obj.get("kind") == "params":
                params = obj
            elif obj.get("kind") == "member":
                role = obj.get("role")
                if role not in members:
                    raise DataError(f"split file line {line_no}: unknown role '{role}'")
                members[role].append(ev.LabeledRef(ref=obj["path"], identity=obj["identity"]))
            else:
                raise DataError(f"split file line {line_no}: unknown record kind")
    if params is None:
        raise DataError("split file carries no params record")
    return ev.EvalSplit(
        train=tuple(members["train"]),
        gallery=tuple(members["gallery"]),
        probe=tuple(members["probe"]),
        train_identities=tuple(params["train_identities"]),
        test_identities=tuple(params["test_identities"]),
        probe_fraction=float(params["probe_fraction"]),
        seed=int(params["seed"]),
    )


class DescriptorCache:
    """Embeds each manifest record at most once per run."""

    def __init__(self, args, manifest: DatasetManifest, providers: ProviderSet, align_params: AlignParams):
        self.args = args
        self.manifest = manifest
        self.providers = providers
        self.align_params = align_params
        self._cache: dict[str, object] = {}

    def embedding(self, ref: str):
        if ref not in self._cache:
            img = imageio.read_image(resolve_path(self.args.manifest, self.args.images_root, ref))
            desc = extract_face_descriptor(img, self.providers, self.align_params, ref=ref)
            self._cache[ref] = desc.embedding
        return self._cache[ref]

    def warm(self, refs, jobs: int):
        missing = [r for r in dict.fromkeys(refs) if r not in self._cache]
        map_ordered(self.embedding, missing, jobs)


# ---------------------------------------------------------------------------
# commands


def cmd_ingest(args) -> int:
    frames_dir = Path(args.frames)
    if not frames_dir.is_dir():
        raise DataError(f"frames directory '{frames_dir}' does not exist")
    frames = sorted(p.as_posix() for p in frames_dir.iterdir() if p.is_file())
    records = ingest_video(frames, stride=args.stride, identity=args.identity, video_id=args.video_id)
    existing = ""
    if args.append and Path(args.out).exists():
        existing = Path(args.out).read_text(encoding="utf-8")
        if existing and not existing.endswith("\n"):
            existing += "\n"
    from .manifest import record_to_dict

    body = "".join(json_line(record_to_dict(r)) + "\n" for r in records)
    write_text_atomic(args.out, existing + body)
    print(f"ingested {len(records)} of {len(frames)} frames (stride {args.stride}) -> {args.out}")
    return 0


def cmd_dedup(args) -> int:
    manifest = load_manifest(args.manifest)
    sources = tuple(s.strip() for s in args.sources.split(",")) if args.sources != "all" else SOURCES
    population = manifest.filter_sources(sources)
    params = dedup_mod.DedupParams(threshold=args.threshold, seed=derive_seed(args.seed, "dedup"))

    def load(ref):
        return imageio.read_image(resolve_path(args.manifest, args.images_root, ref))

    report = dedup_mod.dedup_dataset(population, params, load)
    write_text_atomic(args.out, report.to_json_lines())
    print(
        f"dedup threshold={args.threshold}: retained {report.total_retained}, "
        f"discarded {report.total_discarded} across {len(report.individuals)} identities -> {args.out}"
    )
    return 0


def cmd_split(args) -> int:
    manifest = load_manifest(args.manifest)
    spec = ev.SplitSpec(
        train_identities=args.train_identities,
        test_identities=args.test_identities,
        probe_fraction=args.probe_fraction,
        seed=derive_seed(args.seed, "split"),
    )
    items = [ev.LabeledRef(ref=r.path, identity=r.identity) for r in manifest.records]
    split = ev.make_split(items, spec)
    write_text_atomic(args.out, split_to_lines(split))
    print(
        f"split: {len(split.train_identities)} train ids / {len(split.test_identities)} test ids, "
        f"gallery {len(split.gallery)}, probe {len(split.probe)} -> {args.out}"
    )
    return 0


def cmd_align(args) -> int:
    manifest = load_manifest(args.manifest)
    params = parse_align_params(args.params)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    todo = [(i, rec) for i, rec in enumerate(manifest.records) if rec.landmarks is not None]
    skipped = len(manifest.records) - len(todo)

    def work(item):
        i, rec = item
        img = imageio.read_image(resolve_path(args.manifest, args.images_root, rec.path))
        aligned = align_face(img, rec.landmarks, params)
        out_name = f"{i:06d}_{Path(rec.path).stem}.png"
        imageio.write_image(aligned.image, out_dir / out_name)
        return json_line(
            {
                "path": rec.path,
                "aligned_path": out_name,
                "identity": rec.identity,
                "transform": [list(row) for row in aligned.transform],
            }
        )

    lines = map_ordered(work, todo, args.jobs)
    write_text_atomic(out_dir / "alignment.jsonl", "".join(line + "\n" for line in lines))
    print(f"aligned {len(todo)} faces ({skipped} records without landmarks skipped) -> {out_dir}")
    return 0


def cmd_enroll(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    params = parse_align_params(args.params)
    cache = DescriptorCache(args, manifest, providers, params)
    refs = [rec.path for rec in manifest.records]
    cache.warm(refs, args.jobs)

    gallery = Gallery()
    for rec in manifest.records:
        gallery.enroll(rec.identity, cache.embedding(rec.path), source_ref=rec.path)
    write_gallery_atomic(gallery, args.gallery)
    print(
        f"enrolled {len(gallery)} images of {len(gallery.identities())} identities -> {args.gallery}"
    )
    return 0


def cmd_identify(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    params = parse_align_params(args.params)
    gallery = load_gallery(args.gallery)

    if args.image:
        targets = [args.ref or args.image]
    else:
        targets = [rec.path for rec in manifest.records]

    def work(ref):
        if args.image:
            img = imageio.read_image(args.image)
        else:
            img = imageio.read_image(resolve_path(args.manifest, args.images_root, ref))
        result = run_pipeline(
            img, providers, gallery, align_params=params, threshold=args.threshold, ref=ref
        )
        out = {
            "path": ref,
            "decision": result.match.decision,
            "identity": result.match.identity,
            "threshold": result.match.threshold_used,
            "ranking": [[identity, score] for identity, score in result.match.ranking],
        }
        if args.trace:
            out["trace"] = result.descriptor.trace.entries
        return json_line(out)

    lines = map_ordered(work, targets, args.jobs)
    text = "".join(line + "\n" for line in lines)
    if args.out:
        write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_evaluate_cmc(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    align_params = parse_align_params(args.params)
    split = load_split(args.split)
    cache = DescriptorCache(args, manifest, providers, align_params)
    cache.warm([it.ref for it in split.gallery] + [it.ref for it in split.probe], args.jobs)

    gallery = Gallery()
    for it in split.gallery:
        gallery.enroll(it.identity, cache.embedding(it.ref), source_ref=it.ref)
    rankings, truths = [], []
    for it in split.probe:
        res = gallery.identify(cache.embedding(it.ref))
        rankings.append([identity for identity, _ in res.ranking])
        truths.append(it.identity)
    max_rank = args.max_rank or len(gallery.identities())
    curve = ev.compute_cmc(rankings, truths, max_rank)

    lines = [json_line({"kind": "params", "max_rank": max_rank, "probes": len(truths)})]
    lines += [json_line({"k": k, "rate": rate}) for k, rate in enumerate(curve.rates, start=1)]
    write_text_atomic(args.out, "".join(line + "\n" for line in lines))
    print(f"cmc: rank-1 {curve.rate(1):.4f} over {len(truths)} probes -> {args.out}")
    return 0


def cmd_evaluate_roc(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    align_params = parse_align_params(args.params)

    if args.population == "test":
        if not args.split:
            raise DataError("--population test requires --split")
        split = load_split(args.split)
        test_ids = set(split.test_identities)
        items = [
            ev.LabeledRef(ref=r.path, identity=r.identity)
            for r in manifest.records
            if r.identity in test_ids
        ]
    else:
        items = [ev.LabeledRef(ref=r.path, identity=r.identity) for r in manifest.records]

    pairs = ev.sample_pairs(
        items, args.n_genuine, args.n_imposter, seed=derive_seed(args.seed, "pairs")
    )
    cache = DescriptorCache(args, manifest, providers, align_params)
    used = [r for pair in (pairs.genuine + pairs.imposter) for r in pair]
    cache.warm(used, args.jobs)

    def score(pair):
        return cosine_similarity(cache.embedding(pair[0]), cache.embedding(pair[1]))

    genuine_scores = [score(p) for p in pairs.genuine]
    imposter_scores = [score(p) for p in pairs.imposter]
    curve = ev.compute_roc(genuine_scores, imposter_scores)

    lines = [
        json_line(
            {
                "kind": "params",
                "population": args.population,
                "n_genuine": len(genuine_scores),
                "n_imposter": len(imposter_scores),
                "auc": curve.auc,
            }
        )
    ]
    for (fpr, tpr), thr in zip(curve.points, curve.thresholds):
        lines.append(json_line({"fpr": fpr, "tpr": tpr, "threshold": _json_float(thr)}))
    write_text_atomic(args.out, "".join(line + "\n" for line in lines))
    print(f"roc: auc {curve.auc:.4f} ({len(genuine_scores)}+{len(imposter_scores)} pairs) -> {args.out}")
    return 0


def _json_float(v: float):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def cmd_evaluate_ranks(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    align_params = parse_align_params(args.params)
    split = load_split(args.split)
    cache = DescriptorCache(args, manifest, providers, align_params)
    cache.warm(
        [it.ref for it in split.train]
        + [it.ref for it in split.gallery]
        + [it.ref for it in split.probe],
        args.jobs,
    )

    table = ev.rank_k_table(split, lambda ref, identity: cache.embedding(ref), folds=args.folds)
    lines = [json_line(row) for row in table.as_rows()]
    write_text_atomic(args.out, "".join(line + "\n" for line in lines))
    summary = "  ".join(
        f"rank-{k} {100 * table.mean[k]:.1f}+-{100 * table.std[k]:.1f}%" for k in table.ranks
    )
    print(f"ranks ({args.folds} folds): {summary} -> {args.out}")
    return 0


def cmd_evaluate_landmarks(args) -> int:
    manifest = load_manifest(args.manifest)
    providers = build_providers(args, manifest)
    align_params = parse_align_params(args.params)

    annotated = [rec for rec in manifest.records if rec.landmarks is not None]
    if not annotated:
        raise DataError("no manifest records carry landmark annotations")

    def predict(rec):
        img = imageio.read_image(resolve_path(args.manifest, args.images_root, rec.path))
        desc = extract_face_descriptor(img, providers, align_params, ref=rec.path)
        return desc.aligned.source_landmarks

    predicted = map_ordered(predict, annotated, args.jobs)
    truth = [rec.landmarks for rec in annotated]
    report = localization_error(predicted, truth)

    payload = {
        "count": report.count,
        "left_eye": report.left_eye,
        "right_eye": report.right_eye,
        "nose": report.nose,
        "average": report.average,
        "left_eye_mse": report.left_eye_mse,
        "right_eye_mse": report.right_eye_mse,
        "nose_mse": report.nose_mse,
        "average_mse": report.average_mse,
    }
    if args.out:
        write_text_atomic(args.out, json_line(payload) + "\n")
    print(report.as_table())
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wildface",
        description="Individual animal identification from face images.",
    )
    parser.add_argument("--seed", type=int, default=0, help="top-level seed; all sampling derives from it")
    parser.add_argument("--jobs", type=int, default=1, help="worker pool size for batch commands")
    parser.add_argument("--provider", default="mock", help="'mock' or 'external:<spec>'")
    parser.add_argument("--trace", action="store_true", help="emit per-stage traces where supported")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="subsample a directory of video frames into manifest records")
    p.add_argument("--frames", required=True)
    p.add_argument("--identity", required=True)
    p.add_argument("--video-id", required=True)
    p.add_argument("--stride", type=int, default=10)
    p.add_argument("--out", required=True)
    p.add_argument("--append", action="store_true")
    p.set_defaults(fn=cmd_ingest)

    p = sub.add_parser("dedup", help="greedy SSIM filtering of correlated images per identity")
    p.add_argument("--manifest", required=True)
    p.add_argument("--threshold", type=float, default=0.6)
    p.add_argument("--sources", default=SOURCE_VIDEO, help="comma list of sources, or 'all'")
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_dedup)

    p = sub.add_parser("split", help="identity-level train/test split with gallery/probe halving")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-identities", type=int, default=ev.DEFAULT_TRAIN_IDENTITIES)
    p.add_argument("--test-identities", type=int, default=ev.DEFAULT_TEST_IDENTITIES)
    p.add_argument("--probe-fraction", type=float, default=ev.DEFAULT_PROBE_FRACTION)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_split)

    p = sub.add_parser("align", help="align annotated faces and write canonical crops")
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", default=None, help="e.g. a=1.3,b=1.7,c=1.2[,output_side=224]")
    p.add_argument("--images-root", default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=cmd_align)

    p = sub.add_parser("enroll", help="embed every manifest image and write a gallery file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--gallery", required=True)
    p.set_defaults(fn=cmd_enroll)

    p = sub.add_parser("identify", help="identify one image or every manifest record")
    p.add_argument("--manifest", required=True)
    p.add_argument("--gallery", required=True)
    p.add_argument("--image", default=None)
    p.add_argument("--ref", default=None, help="annotation ref for --image (defaults to the path)")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_identify)

    pe = sub.add_parser("evaluate", help="evaluation protocols")
    esub = pe.add_subparsers(dest="protocol", required=True)

    p = esub.add_parser("cmc", help="cumulative match characteristic over a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--max-rank", type=int, default=None)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate_cmc)

    p = esub.add_parser("roc", help="genuine/imposter pair verification ROC")
    p.add_argument("--manifest", required=True)
    p.add_argument("--population", required=True, choices=["test", "all"])
    p.add_argument("--split", default=None)
    p.add_argument("--n-genuine", type=int, default=1000)
    p.add_argument("--n-imposter", type=int, default=1000)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate_roc)

    p = esub.add_parser("ranks", help="cross-validated rank-1/5/10 identification rates")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_evaluate_ranks)

    p = esub.add_parser("landmarks", help="landmark localization error against annotations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--params", default=None)
    p.add_argument("--images-root", default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_evaluate_landmarks)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except PipelineStageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc.cause)
    except WildfaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
