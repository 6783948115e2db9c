"""Dataset manifest: one line-delimited JSON record per image.

The manifest is the single annotation carrier for the pipeline: identity
labels, acquisition source, face bounding boxes, ground-truth landmarks, and
video provenance all travel here. Line-delimited text keeps it diffable and
streamable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import DataError
from .imaging import BoundingBox, Point2
from .landmarks import FaceLandmarks

SCHEMA_VERSION = 1

SOURCE_PHOTO = "photo"
SOURCE_VIDEO = "video_frame"
SOURCE_PHONE = "phone"
SOURCES = (SOURCE_PHOTO, SOURCE_VIDEO, SOURCE_PHONE)

_KNOWN_FIELDS = {"path", "identity", "source", "bbox", "landmarks", "video_id", "frame_index"}


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    identity: str
    source: str
    bbox: BoundingBox | None = None
    landmarks: FaceLandmarks | None = None
    video_id: str | None = None
    frame_index: int | None = None

    def __post_init__(self):
        if not self.path:
            raise DataError("record path must be nonempty")
        if not self.identity:
            raise DataError(f"record '{self.path}' has an empty identity")
        if self.source not in SOURCES:
            raise DataError(
                f"record '{self.path}' has unknown source '{self.source}' "
                f"(expected one of {', '.join(SOURCES)})"
            )
        has_index = self.frame_index is not None
        if has_index != (self.source == SOURCE_VIDEO):
            raise DataError(
                f"record '{self.path}': frame_index must be present exactly "
                f"when source is '{SOURCE_VIDEO}'"
            )
        if self.landmarks is not None:
            self.landmarks.require_convention()


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple[ManifestRecord, ...]
    schema_version: int = SCHEMA_VERSION
    warning_count: int = 0
    _by_path: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for rec in self.records:
            if rec.path in index:
                raise DataError(f"duplicate path in manifest: '{rec.path}'")
            index[rec.path] = rec
        object.__setattr__(self, "_by_path", index)

    def __len__(self) -> int:
        return len(self.records)

    def get(self, path: str) -> ManifestRecord | None:
        return self._by_path.get(path)

    def identities(self) -> list[str]:
        seen: dict[str, None] = {}
        for rec in self.records:
            seen.setdefault(rec.identity, None)
        return list(seen)

    def by_identity(self) -> dict[str, list[ManifestRecord]]:
        grouped: dict[str, list[ManifestRecord]] = {}
        for rec in self.records:
            grouped.setdefault(rec.identity, []).append(rec)
        return grouped

    def filter_sources(self, sources) -> "DatasetManifest":
        wanted = set(sources)
        unknown = wanted - set(SOURCES)
        if unknown:
            raise DataError(f"unknown source filter value(s): {sorted(unknown)}")
        return DatasetManifest(
            records=tuple(r for r in self.records if r.source in wanted),
            schema_version=self.schema_version,
            warning_count=self.warning_count,
        )


def _parse_point(obj, what: str, line_no: int) -> Point2:
    try:
        x, y = obj
        return Point2(x=float(x), y=float(y))
    except (TypeError, ValueError) as exc:
        raise DataError(f"line {line_no}: bad {what}: {obj!r}") from exc


def record_from_dict(obj: dict, line_no: int = 0) -> tuple[ManifestRecord, int]:
    """Build a record from a parsed JSON object; returns (record, ignored-field count)."""
    unknown = set(obj) - _KNOWN_FIELDS
    bbox = None
    if obj.get("bbox") is not None:
        b = obj["bbox"]
        try:
            bbox = BoundingBox(x=float(b["x"]), y=float(b["y"]), w=float(b["w"]), h=float(b["h"]))
        except (TypeError, KeyError, ValueError) as exc:
            raise DataError(f"line {line_no}: bad bbox: {b!r}") from exc
    lm = None
    if obj.get("landmarks") is not None:
        l = obj["landmarks"]
        if not isinstance(l, dict):
            raise DataError(f"line {line_no}: landmarks must be an object, got {l!r}")
        lm = FaceLandmarks(
            left_eye=_parse_point(l.get("left_eye"), "left_eye", line_no),
            right_eye=_parse_point(l.get("right_eye"), "right_eye", line_no),
            nose=_parse_point(l.get("nose"), "nose", line_no),
        )
    try:
        rec = ManifestRecord(
            path=str(obj.get("path", "")),
            identity=str(obj.get("identity", "")),
            source=str(obj.get("source", "")),
            bbox=bbox,
            landmarks=lm,
            video_id=obj.get("video_id"),
            frame_index=obj.get("frame_index"),
        )
    except DataError as exc:
        raise DataError(f"line {line_no}: {exc}") from None
    return rec, len(unknown)


def record_to_dict(rec: ManifestRecord) -> dict:
    out: dict = {"path": rec.path, "identity": rec.identity, "source": rec.source}
    if rec.bbox is not None:
        out["bbox"] = {"x": rec.bbox.x, "y": rec.bbox.y, "w": rec.bbox.w, "h": rec.bbox.h}
    if rec.landmarks is not None:
        out["landmarks"] = {
            "left_eye": [rec.landmarks.left_eye.x, rec.landmarks.left_eye.y],
            "right_eye": [rec.landmarks.right_eye.x, rec.landmarks.right_eye.y],
            "nose": [rec.landmarks.nose.x, rec.landmarks.nose.y],
        }
    if rec.video_id is not None:
        out["video_id"] = rec.video_id
    if rec.frame_index is not None:
        out["frame_index"] = rec.frame_index
    return out


def load_manifest(source) -> DatasetManifest:
    """Parse a manifest from a path, file object, or iterable of lines.

    Records keep file order. Unknown fields are ignored but counted in
    warning_count; malformed lines and duplicate paths fail with the line
    number.
    """
    own = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    fh = open(source, "r", encoding="utf-8") if own else source
    records: list[ManifestRecord] = []
    seen: dict[str, int] = {}
    warnings = 0
    schema = SCHEMA_VERSION
    try:
        for line_no, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            try:
                obj = json.loads(text)
            except json.JSONDecodeError as exc:
                raise DataError(f"line {line_no}: malformed record: {exc}") from None
            if not isinstance(obj, dict):
                raise DataError(f"line {line_no}: record must be a JSON object")
            if "schema_version" in obj and "path" not in obj:
                schema = int(obj["schema_version"])
                if schema != SCHEMA_VERSION:
                    raise DataError(
                        f"line {line_no}: unsupported manifest schema_version {schema}"
                    )
                continue
            rec, ignored = record_from_dict(obj, line_no)
            warnings += ignored
            if rec.path in seen:
                raise DataError(
                    f"line {line_no}: duplicate path '{rec.path}' "
                    f"(first seen on line {seen[rec.path]})"
                )
            seen[rec.path] = line_no
            records.append(rec)
    finally:
        if own:
            fh.close()
    return DatasetManifest(records=tuple(records), schema_version=schema, warning_count=warnings)


def dump_manifest(manifest: DatasetManifest) -> str:
    lines = [json.dumps({"schema_version": manifest.schema_version}, sort_keys=True)]
    lines.extend(
        json.dumps(record_to_dict(rec), sort_keys=True) for rec in manifest.records
    )
    return "\n".join(lines) + "\n"


def ingest_video(frames, stride: int, identity: str, video_id: str) -> list[ManifestRecord]:
    """Subsample an ordered frame listing into manifest records.

    Emits every stride-th frame (0, stride, 2*stride, ...) with frame_index
    set to the position in the listing.
    """
    if stride < 1:
        raise DataError(f"stride must be >= 1, got {stride}")
    frame_list = list(frames)
    if not frame_list:
        raise DataError("video frame source is empty")
    records = []
    for idx in range(0, len(frame_list), stride):
        records.append(
            ManifestRecord(
                path=str(frame_list[idx]),
                identity=identity,
                source=SOURCE_VIDEO,
                video_id=video_id,
                frame_index=idx,
            )
        )
    return records
