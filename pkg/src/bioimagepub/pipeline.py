"""End-to-end orchestration: config loading plus the inspect, publish and
validate entry points that wire sources, conversion, annotations, metadata
and the hub client together.

Everything publish produces is first materialized under config.workdir in
exactly the repo layout; a dry run stops there, leaving the tree ready to
diff or upload later.
"""

import fnmatch
import json
import logging
import re
import shutil
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from . import annotations, card, croissant, hub, images, manifests, s3, sources
from .errors import (
    BudgetBlocked,
    ConfigInvalid,
    ConversionError,
    MetadataError,
    PolicyMismatch,
)

log = logging.getLogger(__name__)

DEFAULT_STUDY_API = "https://www.ebi.ac.uk/biostudies/api/v1"

_SPLIT_NAME_RE = re.compile(r"[A-Za-z0-9_-]+")

#: source filename extensions treated as image containers when normalizing
#: annotation keys to stems
_IMAGE_EXTENSIONS = ("png", "tif", "tiff")


# --- configuration ---------------------------------------------------------


@dataclass(frozen=True)
class AnnotationSourceConfig:
    kind: str  # "idr" | "user" | "omero"
    path: str | None = None
    key_column: str | None = None
    endpoint: str | None = None
    image_ids: tuple = ()


@dataclass(frozen=True)
class PipelineConfig:
    source: sources.SourceLocator
    split_rules: tuple  # ordered (glob, split) pairs, first match wins
    target: hub.RepoTarget
    workdir: str
    selector: sources.PartialSelector = sources.PartialSelector()
    conversion: images.ConversionPolicy = images.ConversionPolicy()
    acquisition_bit_depth: int | None = None
    annotation_sources: tuple = ()
    study_accession: str | None = None
    study_api: str = DEFAULT_STUDY_API
    card_answers: str | None = None
    acknowledge_large: bool = False

    @classmethod
    def from_file(cls, path, *, token=None):
        p = Path(path)
        try:
            raw = json.loads(p.read_text("utf-8"))
        except OSError as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(raw, base_dir=p.parent, token=token)

    @classmethod
    def from_dict(cls, raw, *, base_dir=".", token=None):
        if not isinstance(raw, dict):
            raise ConfigInvalid("config root must be a JSON object")
        base = Path(base_dir)
        known = {
            "source", "selector", "split_rules", "conversion",
            "annotation_sources", "study_accession", "study_api",
            "card_answers", "target", "workdir", "acknowledge_large",
        }
        unknown = set(raw) - known
        if unknown:
            raise ConfigInvalid(f"unknown config keys: {sorted(unknown)}")
        for key in ("source", "split_rules", "target", "workdir"):
            if key not in raw:
                raise ConfigInvalid(f"config is missing required key {key!r}")

        source = _parse_source(raw["source"], base)
        split_rules = _parse_split_rules(raw["split_rules"])
        target = _parse_target(raw["target"], token)
        selector = _parse_selector(raw.get("selector") or {})
        policy, acq_depth = _parse_conversion(raw.get("conversion") or {})
        ann = tuple(
            _parse_annotation_source(entry, base)
            for entry in _expect(raw.get("annotation_sources", []), list, "annotation_sources")
        )
        accession = raw.get("study_accession")
        answers = raw.get("card_answers")
        return cls(
            source=source,
            split_rules=split_rules,
            target=target,
            workdir=str(base / _expect(raw["workdir"], str, "workdir")),
            selector=selector,
            conversion=policy,
            acquisition_bit_depth=acq_depth,
            annotation_sources=ann,
            study_accession=_expect(accession, str, "study_accession") if accession else None,
            study_api=_expect(raw.get("study_api", DEFAULT_STUDY_API), str, "study_api"),
            card_answers=str(base / answers) if answers else None,
            acknowledge_large=bool(raw.get("acknowledge_large", False)),
        )


def _expect(value, kind, name):
    if not isinstance(value, kind):
        raise ConfigInvalid(f"{name} must be {kind.__name__}, got {type(value).__name__}")
    return value


def _parse_source(raw, base):
    raw = _expect(raw, dict, "source")
    root = _expect(raw.get("root", ""), str, "source.root")
    if not root:
        raise ConfigInvalid("source.root is required")
    if root.startswith("s3://"):
        return sources.SourceLocator.s3_uri(
            root,
            endpoint=raw.get("endpoint"),
            region=raw.get("region"),
            anonymous=bool(raw.get("anonymous", False)),
        )
    for key in ("endpoint", "region", "anonymous"):
        if key in raw:
            raise ConfigInvalid(f"source.{key} only applies to s3:// roots")
    return sources.SourceLocator.local(base / root)


def _parse_split_rules(raw):
    rules = []
    for item in _expect(raw, list, "split_rules"):
        if not (isinstance(item, list) and len(item) == 2 and all(isinstance(s, str) for s in item)):
            raise ConfigInvalid(f"split rule must be [glob, split], got {item!r}")
        glob, split = item
        if not _SPLIT_NAME_RE.fullmatch(split):
            raise ConfigInvalid(f"split name must match [A-Za-z0-9_-]+: {split!r}")
        rules.append((glob, split))
    if not rules:
        raise ConfigInvalid("split_rules must not be empty")
    if not any(glob in ("*", "**") for glob, _ in rules):
        raise ConfigInvalid('split_rules need a catch-all rule with glob "*"')
    return tuple(rules)


def _parse_target(raw, token):
    raw = _expect(raw, dict, "target")
    if "token" in raw:
        raise ConfigInvalid("hub token belongs in BIOIMAGEPUB_TOKEN, not the config")
    try:
        return hub.RepoTarget(
            endpoint=_expect(raw.get("endpoint", ""), str, "target.endpoint"),
            repo_id=_expect(raw.get("repo_id", ""), str, "target.repo_id"),
            revision=_expect(raw.get("revision", "main"), str, "target.revision"),
            private=bool(raw.get("private", False)),
            token=token,
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc


def _parse_selector(raw):
    raw = _expect(raw, dict, "selector")
    return sources.PartialSelector(
        include_globs=tuple(raw.get("include", [])),
        exclude_globs=tuple(raw.get("exclude", [])),
        max_files=raw.get("max_files"),
        max_bytes=raw.get("max_bytes"),
    )


def _parse_conversion(raw):
    raw = _expect(raw, dict, "conversion")
    try:
        policy = images.ConversionPolicy(
            target_format=images.TargetFormat(raw.get("target_format", "png16")),
            scaling=images.ScalingMode(raw.get("scaling", "preserve")),
            channel_split=bool(raw.get("channel_split", False)),
            plane_split=bool(raw.get("plane_split", True)),
        )
    except ValueError as exc:
        raise ConfigInvalid(str(exc)) from exc
    depth = raw.get("acquisition_bit_depth")
    if depth is not None and depth not in (8, 12, 16):
        raise ConfigInvalid(f"acquisition_bit_depth must be 8, 12 or 16, got {depth!r}")
    return policy, depth


def _parse_annotation_source(raw, base):
    raw = _expect(raw, dict, "annotation source")
    kind = raw.get("kind")
    if kind in ("idr", "user"):
        if not raw.get("path") or not raw.get("key_column"):
            raise ConfigInvalid(f"{kind} annotation source needs path and key_column")
        return AnnotationSourceConfig(
            kind=kind, path=str(base / raw["path"]), key_column=raw["key_column"]
        )
    if kind == "omero":
        ids = raw.get("image_ids")
        if not raw.get("endpoint") or not isinstance(ids, list) or not ids:
            raise ConfigInvalid("omero annotation source needs endpoint and image_ids")
        return AnnotationSourceConfig(kind=kind, endpoint=raw["endpoint"], image_ids=tuple(ids))
    raise ConfigInvalid(f"unknown annotation source kind: {kind!r}")


# --- reports ---------------------------------------------------------------


@dataclass(frozen=True)
class InspectReport:
    files: int
    total_bytes: int
    extensions: dict
    selected: int
    selected_bytes: int
    split_counts: dict

    def lines(self):
        out = [f"{self.files} files, {self.total_bytes} bytes"]
        out.extend(f"  {ext or '(none)'}: {n}" for ext, n in self.extensions.items())
        out.append(f"selected {self.selected} of {self.files}")
        out.extend(f"  split {name}: {n} files" for name, n in self.split_counts.items())
        return out


@dataclass(frozen=True)
class PublishReport:
    listed: int
    selected: int
    converted: int
    conversion_failures: tuple
    splits: dict  # split -> manifest row count
    total_bytes: int
    budget: hub.BudgetVerdict
    uploaded: int
    skipped: int
    revision: str | None
    workdir: str

    def lines(self):
        out = [
            f"listed {self.listed}, selected {self.selected}, "
            f"converted {self.converted} ({len(self.conversion_failures)} failed)",
        ]
        out.extend(f"  failed {path}: {reason}" for path, reason in self.conversion_failures)
        out.append(
            "manifest rows: "
            + ", ".join(f"{name}={n}" for name, n in self.splits.items())
        )
        out.append(f"plan: {self.total_bytes} bytes, budget {self.budget.value}")
        if self.revision == "dry-run":
            out.append(f"dry-run: repo layout ready under {self.workdir}")
        else:
            out.append(
                f"uploaded {self.uploaded}, skipped {self.skipped}, revision {self.revision}"
            )
        return out


# --- stage plumbing ---------------------------------------------------------


def _split_for(rel_path, rules):
    for glob, split in rules:
        if fnmatch.fnmatchcase(rel_path, glob):
            return split
    return None  # unreachable once the catch-all rule is validated


def _stem(path):
    name = path.rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


def _merge_key(raw_key):
    """Annotation keys may be full file names; manifests key on source
    stems, so strip a trailing image extension when present."""
    name = raw_key.rsplit("/", 1)[-1]
    if "." in name:
        stem, ext = name.rsplit(".", 1)
        if ext.lower() in _IMAGE_EXTENSIONS:
            return stem
    return name


def _normalize_keys(table):
    rows = {}
    for key, cols in table.rows.items():
        rows[_merge_key(key)] = cols
    return annotations.AnnotationTable(table.source, rows)


class _EntryClients:
    """Per-thread S3 clients; requests sessions must not cross threads."""

    def __init__(self, locator):
        self.locator = locator
        self._local = threading.local()

    def get(self):
        if self.locator.kind is sources.SourceKind.LOCAL:
            return None
        client = getattr(self._local, "client", None)
        if client is None:
            client = self._local.client = s3.S3Client.for_locator(self.locator)
        return client


def _convert_entries(config, inventory, workers):
    """Fetch, decode and re-encode each selected entry in parallel.

    Per-file conversion failures are collected; the stage only aborts when
    nothing converted at all. Source errors abort immediately.
    """
    clients = _EntryClients(config.source)
    rules = config.split_rules
    policy = config.conversion
    depth = config.acquisition_bit_depth

    def one(entry):
        data = sources.fetch_entry(config.source, entry, client=clients.get())
        raw = images.decode(data, entry.relative_path)
        if depth is not None and depth != raw.bit_depth:
            if raw.samples.size and int(raw.samples.max()) >= 1 << depth:
                raise PolicyMismatch(
                    f"{entry.relative_path}: samples exceed declared {depth}-bit range"
                )
            raw = images.RawImage(
                raw.width, raw.height, raw.channels, raw.planes, depth, raw.samples
            )
        split = _split_for(entry.relative_path, rules)
        rel_dir = entry.relative_path.rsplit("/", 1)[0] if "/" in entry.relative_path else ""
        # source trees often already group files by split directory; do not
        # repeat that directory under the split
        if rel_dir == split:
            rel_dir = ""
        elif rel_dir.startswith(split + "/"):
            rel_dir = rel_dir[len(split) + 1:]
        base = "/".join(p for p in (split, rel_dir, _stem(entry.relative_path)) if p)
        return split, images.convert(raw, policy, base, source_path=entry.relative_path)

    converted_by_split = {}
    failures = []
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [(e, pool.submit(one, e)) for e in inventory.entries]
        for entry, future in futures:
            try:
                split, outs = future.result()
            except ConversionError as exc:
                failures.append((entry.relative_path, str(exc)))
                continue
            converted_by_split.setdefault(split, []).extend(outs)
    if not converted_by_split:
        detail = f"; first: {failures[0][1]}" if failures else ""
        raise ConversionError(f"all {len(inventory.entries)} files failed conversion{detail}")
    return converted_by_split, tuple(failures)


def _harvest_annotations(config, workers):
    tables = []
    for src in config.annotation_sources:
        if src.kind == "idr":
            tables.append(
                annotations.harvest_idr(_read_table(src.path), src.key_column)
            )
        elif src.kind == "user":
            tables.append(
                annotations.parse_table(
                    _read_table(src.path), src.key_column, annotations.AnnotationSource.USER
                )
            )
        else:
            harvest = annotations.harvest_omero(
                src.endpoint, list(src.image_ids), workers=workers
            )
            for image_id, reason in harvest.failures:
                log.warning("omero image %s skipped: %s", image_id, reason)
            tables.append(harvest.table)
    if not tables:
        return None
    return annotations.merge([_normalize_keys(t) for t in tables])


def _read_table(path):
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise ConfigInvalid(f"cannot read annotation table {path}: {exc}") from exc


def _assemble_card(config, row_count, answers_path=None):
    if config.study_accession:
        fields = card.harvest_study_metadata(config.study_accession, config.study_api)
    else:
        fields = card.CardFields()
    answers = {}
    path = answers_path or config.card_answers
    if path:
        try:
            answers = card.parse_answers(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise ConfigInvalid(f"cannot read answers file {path}: {exc}") from exc
    fields = card.prompt_missing(fields, answers)
    return replace(fields, size_category=card.size_category_for(row_count))


def _write_workdir(workdir, files):
    """Materialize the exact repo layout; the workdir is owned by the
    pipeline and rebuilt from scratch for determinism."""
    root = Path(workdir)
    if root.exists():
        shutil.rmtree(root)
    for rel, data in files.items():
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)


# --- entry points ------------------------------------------------------------


def run_inspect(config):
    """Summarize the source without fetching any file contents."""
    inventory = sources.list_source(config.source)
    selected = sources.select_partial(inventory, config.selector)
    extensions = {}
    for entry in inventory.entries:
        name = entry.relative_path.rsplit("/", 1)[-1]
        ext = name.rsplit(".", 1)[1].lower() if "." in name else ""
        extensions[ext] = extensions.get(ext, 0) + 1
    split_counts = {}
    for entry in selected.entries:
        split = _split_for(entry.relative_path, config.split_rules)
        split_counts[split] = split_counts.get(split, 0) + 1
    return InspectReport(
        files=len(inventory.entries),
        total_bytes=inventory.total_bytes,
        extensions=dict(sorted(extensions.items(), key=lambda kv: (-kv[1], kv[0]))),
        selected=len(selected.entries),
        selected_bytes=selected.total_bytes,
        split_counts=dict(sorted(split_counts.items())),
    )


def run_publish(config, *, dry_run=False, workers=4, answers_path=None,
                acknowledge_large=False):
    """Run every stage through workdir materialization, then (unless dry_run)
    push the planned commit to the hub."""
    ack = acknowledge_large or config.acknowledge_large

    log.info("listing %s", config.source.root)
    inventory = sources.list_source(config.source)
    selected = sources.select_partial(inventory, config.selector)

    log.info("converting %d files with %d workers", len(selected.entries), workers)
    converted_by_split, conversion_failures = _convert_entries(config, selected, workers)

    log.info("harvesting %d annotation sources", len(config.annotation_sources))
    merged = _harvest_annotations(config, workers)

    split_manifests = [
        manifests.build_manifest(split, converted, merged)
        for split, converted in sorted(converted_by_split.items())
    ]
    row_counts = {m.split: len(m.rows) for m in split_manifests}

    fields = _assemble_card(config, sum(row_counts.values()), answers_path)

    identity = croissant.DatasetIdentity(
        name=fields.pretty_name,
        description=fields.description,
        license=fields.license,
        url=f"{config.target.endpoint}/datasets/{config.target.repo_id}",
        keywords=fields.tags,
        citation=fields.citation,
        creators=fields.authors,
    )
    doc = croissant.generate_croissant(
        identity, split_manifests, config.conversion.target_format
    )
    croissant_bytes = croissant.serialize_jsonld(doc)
    report = croissant.validate_croissant(croissant_bytes)
    if not report.ok:
        raise MetadataError(
            f"generated croissant failed validation: {'; '.join(report.violations)}"
        )

    files = {"README.md": card.render_card(fields), "croissant.json": croissant_bytes}
    for m in split_manifests:
        files[f"{m.split}/metadata.csv"] = manifests.serialize_manifest(m)
    for split, converted in converted_by_split.items():
        for image in converted:
            files[image.relative_path] = image.data

    _write_workdir(config.workdir, files)

    plan = hub.plan_commit(config.target, list(files.items()))
    verdict = hub.check_size_budget(plan)

    base = dict(
        listed=len(inventory.entries),
        selected=len(selected.entries),
        converted=sum(len(v) for v in converted_by_split.values()),
        conversion_failures=conversion_failures,
        splits=row_counts,
        total_bytes=plan.total_bytes,
        budget=verdict,
        workdir=config.workdir,
    )
    if dry_run:
        return PublishReport(uploaded=0, skipped=0, revision="dry-run", **base)

    if verdict is not hub.BudgetVerdict.OK and not ack:
        raise BudgetBlocked(
            f"plan totals {plan.total_bytes} bytes, over the {hub.BUDGET_BYTES} byte "
            "budget; pass --ack-large-dataset to proceed"
        )
    client = hub.HubClient(config.target, put_workers=max(1, workers))
    client.ensure_repo()
    outcome = client.upload(plan, files.__getitem__, acknowledge_large=ack)
    return PublishReport(
        uploaded=len(outcome.uploaded),
        skipped=len(outcome.skipped),
        revision=outcome.revision,
        **base,
    )


def run_validate(workdir):
    """Check a materialized repo layout; returns violation strings (empty
    when sound)."""
    root = Path(workdir)
    violations = []
    croissant_path = root / "croissant.json"
    if croissant_path.is_file():
        violations.extend(
            croissant.validate_croissant(croissant_path.read_bytes()).violations
        )
    else:
        violations.append("missing croissant.json")
    if not (root / "README.md").is_file():
        violations.append("missing README.md")

    referenced = set()
    for manifest_path in sorted(root.glob("*/metadata.csv")):
        split = manifest_path.parent.name
        try:
            manifest = manifests.parse_manifest(manifest_path.read_bytes(), split)
        except MetadataError as exc:
            violations.append(f"{split}/metadata.csv: {exc}")
            continue
        for row in manifest.rows:
            rel = f"{split}/{row[0]}"
            referenced.add(rel)
            if not (root / rel).is_file():
                violations.append(f"{split}/metadata.csv: missing file {row[0]}")

    reserved = {"README.md", "croissant.json"}
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        parts = rel.split("/")
        if rel in reserved or (len(parts) == 2 and parts[1] == "metadata.csv"):
            continue
        if rel not in referenced:
            violations.append(f"orphan image: {rel}")
    return violations
