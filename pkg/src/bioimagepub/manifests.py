"""Per-split CSV manifests: the metadata.csv files dataset-preview tools read."""

import csv
import io
import re
from dataclasses import dataclass

from .errors import DuplicateFileName, MalformedTable

_SUFFIX_RE = re.compile(r"(?:_z\d+)?(?:_c\d+)?$")


@dataclass(frozen=True)
class SplitManifest:
    split: str
    header: tuple  # starts with "file_name"
    rows: tuple  # tuples aligned to header, sorted by file_name

    def __post_init__(self):
        if not self.header or self.header[0] != "file_name":
            raise ValueError(f"header must start with file_name: {self.header!r}")
        seen = set()
        for row in self.rows:
            if len(row) != len(self.header):
                raise ValueError(f"row width {len(row)} != header width {len(self.header)}")
            if row[0] in seen:
                raise DuplicateFileName(f"{self.split}: {row[0]!r} appears twice")
            seen.add(row[0])


def default_image_key(image):
    """Source filename stem; conversion suffixes stripped when no source path
    was recorded."""
    path = image.source_path or image.relative_path
    name = path.rsplit("/", 1)[-1]
    stem = name.rsplit(".", 1)[0] if "." in name else name
    if image.source_path is None:
        stem = _SUFFIX_RE.sub("", stem)
    return stem


def build_manifest(split, converted, merged, key_fn=default_image_key):
    """One row per converted image; annotation cells come from the merge, empty
    string where a key has no value for a column."""
    if not converted:
        raise ValueError(f"split {split!r} has no images")
    columns = tuple(merged.columns) if merged is not None else ()
    header = ("file_name", *columns)
    prefix = split + "/"
    rows = []
    for image in converted:
        rel = image.relative_path
        if rel.startswith(prefix):
            rel = rel[len(prefix):]
        key = key_fn(image)
        rows.append((rel, *(merged.value(key, c) for c in columns)))
    rows.sort(key=lambda r: r[0])
    return SplitManifest(split, header, tuple(rows))


def serialize_manifest(manifest):
    """RFC 4180 CSV bytes, UTF-8, LF endings, header first."""
    buf = io.StringIO()
    minimal = csv.writer(buf, lineterminator="\n")
    # csv only quotes characters in its lineterminator, so with LF endings a
    # bare CR would escape unquoted and corrupt the row on re-parse
    quote_all = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_ALL)
    for row in (manifest.header, *manifest.rows):
        writer = quote_all if any("\r" in field for field in row) else minimal
        writer.writerow(row)
    return buf.getvalue().encode()


def parse_manifest(data, split):
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text, newline=""))
    records = [tuple(r) for r in reader]
    if not records:
        raise MalformedTable("empty manifest")
    header = records[0]
    if not header or header[0] != "file_name":
        raise MalformedTable(f"manifest header must start with file_name: {header!r}")
    for rec in records[1:]:
        if len(rec) != len(header):
            raise MalformedTable(f"ragged manifest row: {rec!r}")
    return SplitManifest(split, header, tuple(records[1:]))
