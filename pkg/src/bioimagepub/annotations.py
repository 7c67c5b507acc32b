"""Annotation harvesting from IDR-style tables, the OMERO JSON API, and user
tables, plus the precedence merge that feeds the split manifests."""

import io
import csv
import logging
import re
import threading
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import requests

from .errors import (
    MalformedTable,
    MissingKeyColumn,
    NoSuchImage,
    SourceUnreachable,
)
from .httputil import SOURCE_RETRY, request_with_retry

log = logging.getLogger(__name__)

_COLUMN_RE = re.compile(r"[a-z_][a-z0-9_]*")


class AnnotationSource(Enum):
    IDR = "IDR"
    OMERO = "OMERO"
    USER = "USER"


def sanitize_column(name):
    """Fold a raw header to lowercase ASCII [a-z0-9_]; idempotent."""
    folded = unicodedata.normalize("NFKD", name).encode("ascii", "ignore").decode()
    s = "".join(ch if ch.isalnum() or ch == "_" else "_" for ch in folded.lower())
    s = re.sub(r"_+", "_", s).strip("_")
    if not s:
        return "column"
    if s[0].isdigit():
        s = "_" + s
    return s


def sanitize_header(raw_names):
    """Positional raw → sanitized mapping; collisions get _2, _3, … suffixes
    in first-appearance order."""
    out = []
    taken = set()
    counters = {}
    for raw in raw_names:
        base = sanitize_column(raw)
        name = base
        while name in taken:
            counters[base] = counters.get(base, 1) + 1
            name = f"{base}_{counters[base]}"
        taken.add(name)
        out.append(name)
    return out


@dataclass(frozen=True)
class AnnotationTable:
    source: AnnotationSource
    rows: dict  # image_key -> {column -> value}, both insertion-ordered

    def __post_init__(self):
        for key, cols in self.rows.items():
            for name in cols:
                if not _COLUMN_RE.fullmatch(name):
                    raise ValueError(f"unsanitized column {name!r} in row {key!r}")


@dataclass(frozen=True)
class MergedAnnotations:
    rows: dict  # image_key -> {column -> (value, AnnotationSource)}
    columns: tuple

    def value(self, key, column, default=""):
        got = self.rows.get(key, {}).get(column)
        return default if got is None else got[0]

    def as_table(self, source=AnnotationSource.USER):
        """Collapse to a plain table (drops per-value provenance)."""
        return AnnotationTable(
            source,
            {k: {c: v for c, (v, _) in cols.items()} for k, cols in self.rows.items()},
        )


def parse_table(table_bytes, key_column, source):
    """Parse a CSV/TSV export with a header row into an AnnotationTable.

    Delimiter is auto-detected from the header line: tab when present, else
    comma. Duplicate keys are last-wins with a logged count.
    """
    text = table_bytes.decode("utf-8-sig")
    header_line = text.split("\n", 1)[0]
    delim = "\t" if "\t" in header_line else ","
    reader = csv.reader(io.StringIO(text, newline=""), delimiter=delim)
    try:
        raw_header = next(reader)
    except StopIteration:
        raise MalformedTable("table has no header row") from None
    sanitized = sanitize_header(raw_header)
    if key_column in raw_header:
        key_idx = raw_header.index(key_column)
    elif sanitize_column(key_column) in sanitized:
        key_idx = sanitized.index(sanitize_column(key_column))
    else:
        raise MissingKeyColumn(f"no column {key_column!r} among {raw_header}")
    rows = {}
    duplicates = 0
    for lineno, rec in enumerate(reader, start=2):
        if not rec:
            continue  # blank trailing line
        if len(rec) != len(raw_header):
            raise MalformedTable(
                f"line {lineno}: {len(rec)} fields, header has {len(raw_header)}"
            )
        key = rec[key_idx]
        if key in rows:
            duplicates += 1
        rows[key] = {
            sanitized[i]: rec[i] for i in range(len(rec)) if i != key_idx
        }
    if duplicates:
        log.warning("%d duplicate keys in %s table, keeping last", duplicates, source.value)
    return AnnotationTable(source, rows)


def harvest_idr(table_bytes, key_column):
    """IDR bulk-annotation export (CSV/TSV) → AnnotationTable."""
    return parse_table(table_bytes, key_column, AnnotationSource.IDR)


@dataclass(frozen=True)
class OmeroHarvest:
    table: AnnotationTable
    failures: tuple  # (image_id, reason) pairs, in input id order


def harvest_omero(base_url, image_ids, *, workers=8, timeout=10.0):
    """Fetch name + map-annotation pairs for each image id from an OMERO JSON
    API. Per-id failures are collected, not fatal; the whole call fails only
    when every id died of a transport error."""
    if not image_ids:
        raise ValueError("harvest_omero needs at least one image id")
    base = base_url.rstrip("/")
    local = threading.local()

    def session():
        s = getattr(local, "session", None)
        if s is None:
            s = local.session = requests.Session()
        return s

    def one(image_id):
        def get_json(url):
            resp = request_with_retry(session(), "GET", url, policy=SOURCE_RETRY, timeout=timeout)
            if resp.status_code == 404:
                raise NoSuchImage(f"image {image_id}: 404 from {url}")
            if resp.status_code != 200:
                raise SourceUnreachable(f"{url}: HTTP {resp.status_code}")
            return resp.json()

        image = get_json(f"{base}/m/images/{image_id}/")
        anns = get_json(f"{base}/m/images/{image_id}/annotations/")
        name = image.get("data", {}).get("Name")
        if not name:
            raise NoSuchImage(f"image {image_id}: no Name field")
        pairs = []
        for ann in anns.get("annotations", []):
            for kv in ann.get("values", []):
                if isinstance(kv, (list, tuple)) and len(kv) == 2:
                    pairs.append((str(kv[0]), str(kv[1])))
        cols = sanitize_header([k for k, _ in pairs])
        return name, {c: v for c, (_, v) in zip(cols, pairs)}

    results = {}
    failures = []
    with ThreadPoolExecutor(max_workers=min(workers, len(image_ids))) as pool:
        futures = {i: pool.submit(one, i) for i in image_ids}
    transport_failures = 0
    for image_id in image_ids:
        try:
            name, cols = futures[image_id].result()
            results[name] = cols
        except NoSuchImage as exc:
            failures.append((image_id, str(exc)))
        except (SourceUnreachable, requests.RequestException) as exc:
            failures.append((image_id, str(exc)))
            transport_failures += 1
    if transport_failures == len(image_ids):
        raise SourceUnreachable(f"all {len(image_ids)} OMERO requests failed: {failures[0][1]}")
    return OmeroHarvest(AnnotationTable(AnnotationSource.OMERO, results), tuple(failures))


def merge(tables):
    """Later-wins merge over an explicit precedence list.

    Column order is first appearance across tables; each winning value keeps
    the source tag of the table it came from.
    """
    if not tables:
        raise ValueError("merge needs at least one table")
    columns = []
    seen = set()
    rows = {}
    for table in tables:
        for key, cols in table.rows.items():
            target = rows.setdefault(key, {})
            for name, value in cols.items():
                if name not in seen:
                    seen.add(name)
                    columns.append(name)
                target[name] = (value, table.source)
    return MergedAnnotations(rows=rows, columns=tuple(columns))
