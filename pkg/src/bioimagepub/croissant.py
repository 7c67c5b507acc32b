"""CroissantML 1.0 document generation, validation, and serialization.

The @context block is vendored verbatim from the Croissant 1.0 specification
so builds never fetch it at runtime.
"""

import hashlib
import json
import re
from dataclasses import dataclass

from .errors import EmptyManifestSet, NotJson
from .manifests import serialize_manifest

CONFORMS_TO = "http://mlcommons.org/croissant/1.0"

CROISSANT_CONTEXT = {
    "@language": "en",
    "@vocab": "https://schema.org/",
    "citeAs": "cr:citeAs",
    "column": "cr:column",
    "conformsTo": "dct:conformsTo",
    "cr": "http://mlcommons.org/croissant/",
    "rai": "http://mlcommons.org/croissant/RAI/",
    "data": {"@id": "cr:data", "@type": "@json"},
    "dataType": {"@id": "cr:dataType", "@type": "@vocab"},
    "dct": "http://purl.org/dc/terms/",
    "examples": {"@id": "cr:examples", "@type": "@json"},
    "extract": "cr:extract",
    "field": "cr:field",
    "fileProperty": "cr:fileProperty",
    "fileObject": "cr:fileObject",
    "fileSet": "cr:fileSet",
    "format": "cr:format",
    "includes": "cr:includes",
    "isLiveDataset": "cr:isLiveDataset",
    "jsonPath": "cr:jsonPath",
    "key": "cr:key",
    "md5": "cr:md5",
    "parentField": "cr:parentField",
    "path": "cr:path",
    "recordSet": "cr:recordSet",
    "references": "cr:references",
    "regex": "cr:regex",
    "repeated": "cr:repeated",
    "replace": "cr:replace",
    "sc": "https://schema.org/",
    "separator": "cr:separator",
    "source": "cr:source",
    "subField": "cr:subField",
    "transform": "cr:transform",
}

KNOWN_DATA_TYPES = frozenset(
    {
        "sc:Text",
        "sc:Integer",
        "sc:Float",
        "sc:Boolean",
        "sc:Date",
        "sc:URL",
        "sc:ImageObject",
        "cr:Label",
        "cr:BoundingBox",
    }
)

_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class DatasetIdentity:
    name: str
    description: str
    license: str
    url: str
    keywords: tuple = ()
    citation: str | None = None
    creators: tuple = ()

    def __post_init__(self):
        if not self.name or len(self.name) > 200:
            raise ValueError(f"dataset name must be 1..200 chars, got {len(self.name)}")
        if not self.license:
            raise ValueError("license is required")
        if not self.url.startswith(("http://", "https://")):
            raise ValueError(f"url must be absolute: {self.url!r}")


@dataclass(frozen=True)
class CroissantDocument:
    identity: DatasetIdentity
    distributions: tuple  # JSON-LD nodes in emission order
    record_sets: tuple


def generate_croissant(identity, manifests, image_format):
    """One FileObject per split CSV, one FileSet per split's images, and one
    RecordSet per split with an image field plus a field per manifest column."""
    if not manifests:
        raise EmptyManifestSet("croissant generation needs at least one manifest")
    distributions = []
    record_sets = []
    for m in manifests:
        csv_bytes = serialize_manifest(m)
        meta_id = f"{m.split}-metadata"
        images_id = f"{m.split}-images"
        distributions.append(
            {
                "@type": "cr:FileObject",
                "@id": meta_id,
                "name": meta_id,
                "contentUrl": f"{m.split}/metadata.csv",
                "encodingFormat": "text/csv",
                "sha256": hashlib.sha256(csv_bytes).hexdigest(),
            }
        )
        distributions.append(
            {
                "@type": "cr:FileSet",
                "@id": images_id,
                "name": images_id,
                "includes": f"{m.split}/**/*{image_format.extension}",
                "encodingFormat": image_format.media_type,
            }
        )
        fields = [
            {
                "@type": "cr:Field",
                "@id": f"{m.split}/image",
                "name": "image",
                "dataType": "sc:ImageObject",
                "source": {
                    "fileSet": {"@id": images_id},
                    "extract": {"fileProperty": "fullpath"},
                    "references": {
                        "fileObject": {"@id": meta_id},
                        "extract": {"column": "file_name"},
                    },
                },
            }
        ]
        for idx, column in enumerate(m.header[1:], start=1):
            values = [row[idx] for row in m.rows]
            integral = bool(values) and all(_INT_RE.fullmatch(v) for v in values)
            fields.append(
                {
                    "@type": "cr:Field",
                    "@id": f"{m.split}/{column}",
                    "name": column,
                    "dataType": "sc:Integer" if integral else "sc:Text",
                    "source": {
                        "fileObject": {"@id": meta_id},
                        "extract": {"column": column},
                    },
                }
            )
        record_sets.append(
            {"@type": "cr:RecordSet", "@id": m.split, "name": m.split, "field": fields}
        )
    return CroissantDocument(identity, tuple(distributions), tuple(record_sets))


def serialize_jsonld(doc):
    """Deterministic UTF-8 JSON: context first, identity, then distribution
    and recordSet; arrays keep insertion order."""
    identity = doc.identity
    out = {
        "@context": CROISSANT_CONTEXT,
        "@type": "sc:Dataset",
        "name": identity.name,
        "description": identity.description,
        "conformsTo": CONFORMS_TO,
        "license": identity.license,
        "url": identity.url,
    }
    if identity.citation:
        out["citeAs"] = identity.citation
    if identity.creators:
        out["creator"] = [{"@type": "sc:Person", "name": n} for n in identity.creators]
    if identity.keywords:
        out["keywords"] = list(identity.keywords)
    out["distribution"] = [dict(d) for d in doc.distributions]
    out["recordSet"] = [dict(r) for r in doc.record_sets]
    return (json.dumps(out, indent=2, ensure_ascii=False) + "\n").encode()


def parse_croissant(data):
    """Inverse of serialize_jsonld for documents this package generates."""
    doc = _load_json_object(data)
    creators = doc.get("creator", [])
    if isinstance(creators, dict):
        creators = [creators]
    identity = DatasetIdentity(
        name=doc.get("name", ""),
        description=doc.get("description", ""),
        license=doc.get("license", ""),
        url=doc.get("url", ""),
        keywords=tuple(doc.get("keywords", [])),
        citation=doc.get("citeAs"),
        creators=tuple(c.get("name", "") for c in creators),
    )
    return CroissantDocument(
        identity,
        tuple(doc.get("distribution", [])),
        tuple(doc.get("recordSet", [])),
    )


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple

    @property
    def ok(self):
        return not self.violations


def _load_json_object(data):
    try:
        doc = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise NotJson(f"croissant document is not JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise NotJson("croissant document must be a JSON object")
    return doc


def _reference_ids(node):
    """All {'@id': ...} values reachable under reference-bearing keys."""
    out = []
    if isinstance(node, dict):
        for key, value in node.items():
            if key in ("fileObject", "fileSet", "field", "containedIn"):
                targets = value if isinstance(value, list) else [value]
                for t in targets:
                    if isinstance(t, dict) and "@id" in t:
                        out.append(t["@id"])
            if key in ("source", "references", "extract", "subField", "containedIn"):
                out.extend(_reference_ids(value))
    elif isinstance(node, list):
        for item in node:
            out.extend(_reference_ids(item))
    return out


def validate_croissant(doc_bytes):
    """Check the five violation classes; an empty report means valid."""
    doc = _load_json_object(doc_bytes)
    violations = []
    for key in ("@context", "@type", "conformsTo"):
        if key not in doc:
            violations.append(f"missing {key}")
    if "conformsTo" in doc:
        conforms = doc["conformsTo"]
        values = conforms if isinstance(conforms, list) else [conforms]
        if CONFORMS_TO not in values:
            violations.append(f"conformsTo does not include {CONFORMS_TO}")
    for key in ("name", "license", "url"):
        if not doc.get(key):
            violations.append(f"missing {key}")

    ids = set()

    def register(node):
        node_id = node.get("@id")
        if node_id is None:
            return
        if node_id in ids:
            violations.append(f"duplicate id: {node_id}")
        ids.add(node_id)

    distributions = doc.get("distribution") or []
    record_sets = doc.get("recordSet") or []
    all_fields = []

    def walk_fields(container):
        for field in container.get("field") or []:
            register(field)
            all_fields.append(field)
            for sub in field.get("subField") or []:
                register(sub)
                all_fields.append(sub)

    for node in distributions:
        register(node)
    for rs in record_sets:
        register(rs)
        walk_fields(rs)

    for node in distributions:
        for ref in _reference_ids({"containedIn": node.get("containedIn")}):
            if ref not in ids:
                violations.append(f"dangling reference: {ref}")
    for field in all_fields:
        for key in ("source", "references"):
            for ref in _reference_ids(field.get(key)):
                if ref not in ids:
                    violations.append(f"dangling reference: {ref}")
        data_types = field.get("dataType")
        if data_types is not None:
            values = data_types if isinstance(data_types, list) else [data_types]
            for dt in values:
                if dt not in KNOWN_DATA_TYPES:
                    violations.append(f"unknown dataType: {dt}")
    return ValidationReport(tuple(violations))
