"""Source enumeration over local trees and S3 stores, plus partial selection."""

import fnmatch
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

from . import s3
from .errors import (
    ConfigInvalid,
    EmptySource,
    EntryChanged,
    SelectorMatchesNothing,
    SourceUnreachable,
)


class SourceKind(Enum):
    LOCAL = "local"
    S3 = "s3"


@dataclass(frozen=True)
class SourceLocator:
    kind: SourceKind
    root: str
    endpoint: str | None = None
    region: str | None = None
    anonymous: bool = False

    def __post_init__(self):
        if self.kind is SourceKind.S3:
            if not self.root.startswith("s3://") or not self.bucket:
                raise ConfigInvalid(f"S3 root must be s3://bucket[/prefix]: {self.root!r}")
        if self.endpoint is not None and not self.endpoint.startswith(("http://", "https://")):
            raise ConfigInvalid(f"endpoint must be an absolute http(s) URL: {self.endpoint!r}")

    @classmethod
    def local(cls, root):
        return cls(SourceKind.LOCAL, str(root))

    @classmethod
    def s3_uri(cls, root, *, endpoint=None, region=None, anonymous=False):
        return cls(SourceKind.S3, root, endpoint=endpoint, region=region, anonymous=anonymous)

    @property
    def bucket(self):
        if self.kind is not SourceKind.S3:
            return None
        return self.root[len("s3://"):].split("/", 1)[0]

    @property
    def prefix(self):
        """Key prefix inside the bucket, '/'-terminated when non-empty."""
        if self.kind is not SourceKind.S3:
            return ""
        rest = self.root[len("s3://"):].split("/", 1)
        if len(rest) == 1 or not rest[1]:
            return ""
        p = rest[1].rstrip("/")
        return p + "/" if p else ""


@dataclass(frozen=True)
class SourceEntry:
    relative_path: str
    size_bytes: int
    etag: str | None = None
    last_modified: str | None = None

    def __post_init__(self):
        p = self.relative_path
        parts = p.split("/")
        if not p or p.startswith("/") or "\\" in p or any(s in (".", "..", "") for s in parts):
            raise ValueError(f"non-normalized relative path: {p!r}")
        if self.size_bytes < 0:
            raise ValueError(f"negative size for {p!r}")


@dataclass(frozen=True)
class SourceInventory:
    locator: SourceLocator
    entries: tuple
    total_bytes: int

    @classmethod
    def build(cls, locator, entries):
        ordered = tuple(sorted(entries, key=lambda e: e.relative_path))
        for a, b in zip(ordered, ordered[1:]):
            if a.relative_path == b.relative_path:
                raise ValueError(f"duplicate entry: {a.relative_path!r}")
        return cls(locator, ordered, sum(e.size_bytes for e in ordered))


@dataclass(frozen=True)
class PartialSelector:
    include_globs: tuple = ()
    exclude_globs: tuple = ()
    max_files: int | None = None
    max_bytes: int | None = None

    def __post_init__(self):
        for name in ("max_files", "max_bytes"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ConfigInvalid(f"{name} must be positive, got {v}")

    @property
    def is_empty(self):
        return not (self.include_globs or self.exclude_globs or self.max_files or self.max_bytes)


def _hidden(rel):
    return any(part.startswith(".") for part in rel.split("/"))


def _list_local(root, include_hidden):
    base = Path(root)
    if not base.is_dir():
        raise SourceUnreachable(f"not a readable directory: {root}")
    out = []
    for path in base.rglob("*"):
        if not path.is_file():
            continue
        rel = path.relative_to(base).as_posix()
        if not include_hidden and _hidden(rel):
            continue
        out.append(SourceEntry(rel, path.stat().st_size))
    return out


def _list_s3(locator, include_hidden, client):
    cl = client or s3.S3Client.for_locator(locator)
    prefix = locator.prefix
    out = []
    for obj in cl.list_objects(locator.bucket, prefix):
        if obj.key.endswith("/"):
            continue  # zero-byte directory markers
        rel = obj.key[len(prefix):] if obj.key.startswith(prefix) else obj.key
        if not rel or (not include_hidden and _hidden(rel)):
            continue
        out.append(
            SourceEntry(rel, obj.size, etag=obj.etag, last_modified=obj.last_modified)
        )
    return out


def list_source(locator, *, include_hidden=False, client=None):
    """Enumerate every file under the locator, sorted by relative path."""
    if locator.kind is SourceKind.LOCAL:
        entries = _list_local(locator.root, include_hidden)
    else:
        entries = _list_s3(locator, include_hidden, client)
    if not entries:
        raise EmptySource(f"no files under {locator.root}")
    return SourceInventory.build(locator, entries)


def select_partial(inv, sel):
    """Apply include/exclude globs, then max_files, then the max_bytes prefix.

    max_bytes keeps the longest prefix (in sort order) whose sizes fit, so the
    subset a given budget produces is reproducible run to run.
    """
    kept = list(inv.entries)
    if sel.include_globs:
        kept = [
            e for e in kept
            if any(fnmatch.fnmatchcase(e.relative_path, g) for g in sel.include_globs)
        ]
    if sel.exclude_globs:
        kept = [
            e for e in kept
            if not any(fnmatch.fnmatchcase(e.relative_path, g) for g in sel.exclude_globs)
        ]
    if sel.max_files is not None:
        kept = kept[: sel.max_files]
    if sel.max_bytes is not None:
        total = sum(e.size_bytes for e in kept)
        while kept and total > sel.max_bytes:
            total -= kept.pop().size_bytes
    if inv.entries and not kept:
        raise SelectorMatchesNothing(f"selector removed all {len(inv.entries)} entries")
    return SourceInventory.build(inv.locator, kept)


def fetch_entry(locator, entry, *, client=None):
    """Fetch one entry's bytes, verifying it has not changed since listing."""
    if locator.kind is SourceKind.LOCAL:
        try:
            data = (Path(locator.root) / entry.relative_path).read_bytes()
        except OSError as exc:
            raise SourceUnreachable(f"{entry.relative_path}: {exc}") from exc
    else:
        cl = client or s3.S3Client.for_locator(locator)
        data = cl.get_object(
            locator.bucket, locator.prefix + entry.relative_path, if_match=entry.etag
        )
    if len(data) != entry.size_bytes:
        raise EntryChanged(
            f"{entry.relative_path}: listed {entry.size_bytes} bytes, fetched {len(data)}"
        )
    return data
