"""Dataset card assembly: harvested study metadata plus prompted or preseeded
answers, rendered as YAML front matter + markdown."""

import re
from dataclasses import dataclass, replace

import requests
import yaml

from .errors import ConfigInvalid, MissingRequiredField, SourceUnreachable, UnknownAccession
from .httputil import SOURCE_RETRY, request_with_retry

ACCESSION_RE = re.compile(r"idr\d{4}|S-[A-Za-z]+\d+")

REQUIRED_FIELDS = ("license", "pretty_name", "authors", "citation", "description")

_LIST_FIELDS = {"authors", "tags", "source_links"}

_SIZE_BUCKETS = (
    (1_000, "n<1K"),
    (10_000, "1K<n<10K"),
    (100_000, "10K<n<100K"),
    (1_000_000, "100K<n<1M"),
    (10_000_000, "1M<n<10M"),
    (100_000_000, "10M<n<100M"),
    (1_000_000_000, "100M<n<1B"),
    (10_000_000_000, "1B<n<10B"),
    (100_000_000_000, "10B<n<100B"),
    (1_000_000_000_000, "100B<n<1T"),
)


@dataclass(frozen=True)
class CardFields:
    license: str | None = None
    pretty_name: str | None = None
    tags: tuple = ()
    authors: tuple = ()
    citation: str | None = None
    description: str | None = None
    source_links: tuple = ()
    size_category: str | None = None
    extra_attributes: tuple = ()  # unmapped (name, value) pairs, kept verbatim

    def missing_required(self):
        return tuple(k for k in REQUIRED_FIELDS if not getattr(self, k))


def size_category_for(row_count):
    for bound, label in _SIZE_BUCKETS:
        if row_count < bound:
            return label
    return "n>1T"


def harvest_study_metadata(accession, api_base, *, timeout=10.0):
    """Pull dataset-level fields from a BioStudies-style study record.

    Absent fields stay unset; nothing is fabricated. IDR accessions also get
    their public study page recorded as a source link.
    """
    if not ACCESSION_RE.fullmatch(accession):
        raise ValueError(f"accession {accession!r} is not an idrNNNN or S-... accession")
    url = f"{api_base.rstrip('/')}/studies/{accession}"
    try:
        resp = request_with_retry(
            requests.Session(), "GET", url, policy=SOURCE_RETRY, timeout=timeout
        )
    except requests.RequestException as exc:
        raise SourceUnreachable(f"{url}: {exc}") from exc
    if resp.status_code == 404:
        raise UnknownAccession(f"no study {accession!r} at {api_base}")
    if resp.status_code != 200:
        raise SourceUnreachable(f"{url}: HTTP {resp.status_code}")
    doc = resp.json()

    section = doc.get("section") or {}
    attributes = list(doc.get("attributes") or []) + list(section.get("attributes") or [])
    title = description = license_id = None
    tags, extra = [], []
    for attr in attributes:
        name, value = attr.get("name", ""), attr.get("value", "")
        if not value:
            continue
        low = name.lower()
        if low == "title" and title is None:
            title = value
        elif low == "description" and description is None:
            description = value
        elif low in ("license", "licence") and license_id is None:
            license_id = value
        elif low in ("keyword", "keywords"):
            tags.append(value.strip())
        else:
            extra.append((name, value))

    authors = []
    for sub in section.get("subsections") or []:
        if isinstance(sub, dict) and sub.get("type") == "Author":
            for attr in sub.get("attributes") or []:
                if attr.get("name") == "Name" and attr.get("value"):
                    authors.append(attr["value"])

    links = []
    if accession.startswith("idr"):
        links.append(f"https://idr.openmicroscopy.org/study/{accession}/")
    return CardFields(
        license=license_id,
        pretty_name=title,
        tags=tuple(tags),
        authors=tuple(authors),
        description=description,
        source_links=tuple(links),
        extra_attributes=tuple(extra),
    )


def parse_answers(text):
    """Flat `key = value` lines; blank lines and #-comments ignored."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigInvalid(f"answers line {lineno}: expected 'key = value'")
        key, value = stripped.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _coerce(key, value):
    if key in _LIST_FIELDS:
        return tuple(part.strip() for part in value.split(",") if part.strip())
    return value


def prompt_missing(fields, answers=None, *, prompt=None):
    """Fill required fields from preseeded answers, then (when a prompt
    callable is given) interactively. Harvested non-empty values survive
    unless an answer explicitly replaces them; in non-interactive mode an
    unanswered required field is an error, never a silent default."""
    answers = answers or {}
    overrides = {}
    for key, value in answers.items():
        if not hasattr(fields, key) or key == "extra_attributes":
            raise ConfigInvalid(f"unknown card field in answers: {key!r}")
        if value:
            overrides[key] = _coerce(key, value)
    fields = replace(fields, **overrides)
    if prompt is not None:
        filled = {}
        for key in fields.missing_required():
            answer = prompt(key)
            if answer:
                filled[key] = _coerce(key, answer)
        fields = replace(fields, **filled)
    missing = fields.missing_required()
    if missing:
        raise MissingRequiredField(f"unanswered required card fields: {', '.join(missing)}")
    return fields


def render_card(fields):
    """Deterministic README.md bytes: exactly one YAML front-matter block,
    then the markdown body with the citation kept verbatim."""
    missing = fields.missing_required()
    if missing:
        raise MissingRequiredField(f"cannot render card, missing: {', '.join(missing)}")
    front = {
        "license": fields.license.lower(),  # hub convention: lowercase SPDX id
        "pretty_name": fields.pretty_name,
    }
    if fields.tags:
        front["tags"] = list(fields.tags)
    if fields.size_category:
        front["size_categories"] = [fields.size_category]
    parts = [
        "---\n",
        yaml.safe_dump(front, sort_keys=False, allow_unicode=True),
        "---\n",
        f"\n# {fields.pretty_name}\n",
        f"\n{fields.description.rstrip()}\n",
    ]
    if fields.source_links:
        parts.append("\n## Source\n\n")
        parts.extend(f"- <{link}>\n" for link in fields.source_links)
    parts.append("\n## Authors\n\n")
    parts.extend(f"- {author}\n" for author in fields.authors)
    parts.append("\n## Citation\n\n```\n" + fields.citation.strip("\n") + "\n```\n")
    if fields.extra_attributes:
        parts.append("\n## Source attributes\n\n")
        parts.extend(f"- **{name}**: {value}\n" for name, value in fields.extra_attributes)
    return "".join(parts).encode()
