"""Minimal S3 REST client: ListObjectsV2 and GetObject with SigV4 signing.

Speaks plain HTTP so any S3-compatible store works, including the in-repo test
server. Credentials come from the environment; without them requests go out
unsigned, which is how public IDR buckets are normally read.
"""

import datetime as dt
import hashlib
import hmac
import os
import threading
import urllib.parse
import xml.etree.ElementTree as ET
from dataclasses import dataclass

import requests

from .errors import EntryChanged, SourceUnreachable
from .httputil import SOURCE_RETRY, request_with_retry

ACCESS_KEY_ENV = "BIOIMAGEPUB_S3_ACCESS_KEY"
SECRET_KEY_ENV = "BIOIMAGEPUB_S3_SECRET_KEY"


def _enc(value, keep_slash=False):
    # SigV4 URI encoding: unreserved characters only, everything else escaped
    return urllib.parse.quote(value, safe="-._~" + ("/" if keep_slash else ""))


def _hmac(key, msg):
    return hmac.new(key, msg.encode(), hashlib.sha256).digest()


def canonical_request(method, path, query_pairs, headers, payload_hash):
    """Build the SigV4 canonical request and the signed-headers list."""
    query = "&".join(f"{_enc(k)}={_enc(v)}" for k, v in sorted(query_pairs))
    items = sorted((k.lower(), " ".join(str(v).split())) for k, v in headers)
    signed = ";".join(k for k, _ in items)
    lines = [method, _enc(path or "/", keep_slash=True), query]
    lines += [f"{k}:{v}" for k, v in items]
    lines += ["", signed, payload_hash]
    return "\n".join(lines), signed


def sigv4_headers(
    method,
    host,
    path,
    query_pairs,
    headers,
    *,
    access_key,
    secret_key,
    region,
    service="s3",
    payload=b"",
    now=None,
):
    """Return the full header map for a signed request, Authorization included."""
    when = now or dt.datetime.now(dt.timezone.utc)
    amz_date = when.strftime("%Y%m%dT%H%M%SZ")
    payload_hash = hashlib.sha256(payload).hexdigest()
    out = {k.lower(): v for k, v in (headers or {}).items()}
    out["host"] = host
    out["x-amz-date"] = amz_date
    if service == "s3":
        out["x-amz-content-sha256"] = payload_hash
    canon, signed = canonical_request(method, path, query_pairs, out.items(), payload_hash)
    scope = f"{amz_date[:8]}/{region}/{service}/aws4_request"
    to_sign = "\n".join(
        ["AWS4-HMAC-SHA256", amz_date, scope, hashlib.sha256(canon.encode()).hexdigest()]
    )
    key = _hmac(b"AWS4" + secret_key.encode(), amz_date[:8])
    for part in (region, service, "aws4_request"):
        key = _hmac(key, part)
    signature = hmac.new(key, to_sign.encode(), hashlib.sha256).hexdigest()
    out["Authorization"] = (
        f"AWS4-HMAC-SHA256 Credential={access_key}/{scope}, "
        f"SignedHeaders={signed}, Signature={signature}"
    )
    return out


def env_credentials():
    """(access_key, secret_key) from the environment, or None if unset."""
    ak = os.environ.get(ACCESS_KEY_ENV)
    sk = os.environ.get(SECRET_KEY_ENV)
    return (ak, sk) if ak and sk else None


@dataclass(frozen=True)
class S3Object:
    key: str
    size: int
    etag: str | None = None
    last_modified: str | None = None


def _local_tag(tag):
    return tag.rsplit("}", 1)[-1]


class S3Client:
    """Path-style client; one requests.Session per thread."""

    def __init__(self, endpoint, *, region="us-east-1", credentials=None, timeout=10.0):
        self.endpoint = endpoint.rstrip("/")
        self.region = region
        self.credentials = credentials
        self.timeout = timeout
        self._local = threading.local()

    @classmethod
    def for_locator(cls, locator):
        region = locator.region or "us-east-1"
        endpoint = locator.endpoint or f"https://s3.{region}.amazonaws.com"
        creds = None if locator.anonymous else env_credentials()
        return cls(endpoint, region=region, credentials=creds)

    def _session(self):
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = requests.Session()
        return session

    def _send(self, method, path, query_pairs, headers=None):
        host = urllib.parse.urlsplit(self.endpoint).netloc
        url = self.endpoint + _enc(path, keep_slash=True)
        query = "&".join(f"{_enc(k)}={_enc(v)}" for k, v in sorted(query_pairs))
        if query:
            url = f"{url}?{query}"
        if self.credentials:
            ak, sk = self.credentials
            headers = sigv4_headers(
                method, host, path, query_pairs, headers,
                access_key=ak, secret_key=sk, region=self.region,
            )
        try:
            return request_with_retry(
                self._session(), method, url,
                policy=SOURCE_RETRY, headers=headers, timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise SourceUnreachable(f"{method} {url}: {exc}") from exc

    def list_objects(self, bucket, prefix=""):
        """All objects under prefix, following continuation tokens."""
        out = []
        token = None
        while True:
            pairs = [("list-type", "2")]
            if prefix:
                pairs.append(("prefix", prefix))
            if token:
                pairs.append(("continuation-token", token))
            resp = self._send("GET", f"/{bucket}", pairs)
            if resp.status_code != 200:
                raise SourceUnreachable(
                    f"list s3://{bucket}/{prefix}: HTTP {resp.status_code}"
                )
            root = ET.fromstring(resp.content)
            truncated, token = False, None
            for el in root:
                tag = _local_tag(el.tag)
                if tag == "Contents":
                    rec = {_local_tag(c.tag): (c.text or "") for c in el}
                    out.append(
                        S3Object(
                            key=rec["Key"],
                            size=int(rec.get("Size") or 0),
                            etag=rec.get("ETag", "").strip('"') or None,
                            last_modified=rec.get("LastModified") or None,
                        )
                    )
                elif tag == "IsTruncated":
                    truncated = (el.text or "").strip().lower() == "true"
                elif tag == "NextContinuationToken":
                    token = (el.text or "").strip() or None
            if not (truncated and token):
                return out

    def get_object(self, bucket, key, *, if_match=None):
        headers = {}
        if if_match:
            headers["If-Match"] = f'"{if_match.strip(chr(34))}"'
        resp = self._send("GET", f"/{bucket}/{key}", [], headers=headers)
        if resp.status_code in (404, 412):
            raise EntryChanged(f"s3://{bucket}/{key}: HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise SourceUnreachable(f"get s3://{bucket}/{key}: HTTP {resp.status_code}")
        etag = resp.headers.get("ETag", "").strip('"')
        if if_match and etag and etag != if_match.strip('"'):
            raise EntryChanged(f"s3://{bucket}/{key}: etag {etag!r} != {if_match!r}")
        return resp.content
