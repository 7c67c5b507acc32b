"""Hub upload client speaking the HuggingFace commit protocol: preupload
dedup, Git LFS batch transfers, and an NDJSON commit, with size budgeting and
content-addressed idempotent resume."""

import base64
import contextlib
import hashlib
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import requests

from .errors import (
    AuthFailed,
    BudgetBlocked,
    HubError,
    PartialUpload,
    PathCollision,
    UploadInProgress,
)
from .httputil import HUB_RETRY, request_with_retry

#: hub size budget: uploads over 1 TB (decimal) need written justification
BUDGET_BYTES = 10**12

#: commit payloads are base64-inflated, so large files go through LFS
INLINE_THRESHOLD = 10 * 1024 * 1024

_REPO_PART_RE = re.compile(r"[A-Za-z0-9._-]+")


class FileMode(Enum):
    INLINE = "inline"
    LFS = "lfs"


class BudgetVerdict(Enum):
    OK = "ok"
    NEEDS_JUSTIFICATION = "needs_justification"


@dataclass(frozen=True)
class RepoTarget:
    endpoint: str
    repo_id: str
    revision: str = "main"
    token: str | None = None
    private: bool = False

    def __post_init__(self):
        parts = self.repo_id.split("/")
        if len(parts) != 2 or not all(_REPO_PART_RE.fullmatch(p) for p in parts):
            raise ValueError(f"repo_id must be namespace/name: {self.repo_id!r}")
        object.__setattr__(self, "endpoint", self.endpoint.rstrip("/"))

    @property
    def namespace(self):
        return self.repo_id.split("/")[0]

    @property
    def name(self):
        return self.repo_id.split("/")[1]


@dataclass(frozen=True)
class PlannedFile:
    path: str
    size_bytes: int
    sha256: bytes
    mode: FileMode

    @property
    def sha256_hex(self):
        return self.sha256.hex()


@dataclass(frozen=True)
class CommitPlan:
    target: RepoTarget
    files: tuple
    total_bytes: int
    summary: str


def _normalized(path):
    parts = path.split("/")
    return (
        path
        and not path.startswith("/")
        and "\\" not in path
        and all(p not in ("", ".", "..") for p in parts)
    )


def _order_key(path):
    if path == "README.md":
        return (0, path)
    if path == "croissant.json":
        return (1, path)
    if path.endswith("metadata.csv"):
        return (2, path)
    return (3, path)


def plan_commit(target, files, *, summary="Publish dataset", inline_threshold=None):
    """Hash and order (path, bytes) pairs: metadata first, then images by
    path, so an interrupted upload still leaves a browsable repo."""
    threshold = INLINE_THRESHOLD if inline_threshold is None else inline_threshold
    seen = set()
    planned = []
    for path, data in files:
        if not _normalized(path):
            raise ValueError(f"non-normalized repo path: {path!r}")
        if path in seen:
            raise PathCollision(f"two files plan to {path!r}")
        seen.add(path)
        mode = FileMode.INLINE if len(data) <= threshold else FileMode.LFS
        planned.append(
            PlannedFile(path, len(data), hashlib.sha256(data).digest(), mode)
        )
    planned.sort(key=lambda f: _order_key(f.path))
    return CommitPlan(
        target, tuple(planned), sum(f.size_bytes for f in planned), summary
    )


def check_size_budget(plan, budget_bytes=None):
    """Ok up to and including the budget; strictly over needs justification."""
    limit = BUDGET_BYTES if budget_bytes is None else budget_bytes
    if plan.total_bytes > limit:
        return BudgetVerdict.NEEDS_JUSTIFICATION
    return BudgetVerdict.OK


@dataclass(frozen=True)
class RepoState:
    created: bool  # False when the repo already existed
    revision: str


@dataclass(frozen=True)
class UploadReport:
    uploaded: tuple
    skipped: tuple
    failed: tuple
    revision: str | None

    @property
    def ok(self):
        return not self.failed


class HubClient:
    """One logical upload task per RepoTarget; PUTs fan out to a bounded pool."""

    def __init__(self, target, *, put_workers=4, timeout=30.0):
        self.target = target
        self.put_workers = put_workers
        self.timeout = timeout
        self._local = threading.local()
        self._guard = threading.Lock()
        self._uploading = False

    def _session(self):
        session = getattr(self._local, "session", None)
        if session is None:
            session = self._local.session = requests.Session()
        return session

    def _request(self, method, url, *, headers=None, **kwargs):
        merged = dict(headers or {})
        if self.target.token:
            merged["Authorization"] = f"Bearer {self.target.token}"
        try:
            resp = request_with_retry(
                self._session(), method, url,
                policy=HUB_RETRY, headers=merged, timeout=self.timeout, **kwargs,
            )
        except requests.RequestException as exc:
            raise HubError(f"{method} {url}: {exc}") from exc
        if resp.status_code in (401, 403):
            raise AuthFailed(f"{method} {url}: HTTP {resp.status_code}")
        return resp

    @contextlib.contextmanager
    def _single_upload(self):
        with self._guard:
            if self._uploading:
                raise UploadInProgress(f"an upload to {self.target.repo_id} is already running")
            self._uploading = True
        try:
            yield
        finally:
            with self._guard:
                self._uploading = False

    # --- protocol steps -----------------------------------------------

    def ensure_repo(self):
        url = f"{self.target.endpoint}/api/repos/create"
        body = {
            "type": "dataset",
            "name": self.target.name,
            "organization": self.target.namespace,
            "private": self.target.private,
        }
        resp = self._request("POST", url, json=body)
        if resp.status_code == 200:
            return RepoState(created=True, revision=self.target.revision)
        if resp.status_code == 409:
            return RepoState(created=False, revision=self.target.revision)
        raise HubError(f"repo create: HTTP {resp.status_code}: {resp.text[:200]}")

    def _preupload(self, plan):
        url = (
            f"{self.target.endpoint}/api/datasets/{self.target.repo_id}"
            f"/preupload/{self.target.revision}"
        )
        body = {
            "files": [
                {"path": f.path, "size": f.size_bytes, "sha256": f.sha256_hex}
                for f in plan.files
            ]
        }
        resp = self._request("POST", url, json=body)
        if resp.status_code != 200:
            raise HubError(f"preupload: HTTP {resp.status_code}")
        return {
            entry["path"]
            for entry in resp.json().get("files", [])
            if entry.get("shouldIgnore")
        }

    def _lfs_batch(self, lfs_files):
        """Returns [(planned_file, href, headers)] needing a PUT; files whose
        objects the server already stores come back without actions."""
        if not lfs_files:
            return []
        url = f"{self.target.endpoint}/{self.target.repo_id}.git/info/lfs/objects/batch"
        body = {
            "operation": "upload",
            "transfers": ["basic"],
            "objects": [{"oid": f.sha256_hex, "size": f.size_bytes} for f in lfs_files],
            "ref": {"name": f"refs/heads/{self.target.revision}"},
        }
        resp = self._request("POST", url, json=body)
        if resp.status_code != 200:
            raise HubError(f"lfs batch: HTTP {resp.status_code}")
        by_oid = {o.get("oid"): o for o in resp.json().get("objects", [])}
        transfers = []
        for f in lfs_files:
            action = (by_oid.get(f.sha256_hex) or {}).get("actions", {}).get("upload")
            if action:
                transfers.append((f, action["href"], action.get("header") or {}))
        return transfers

    def _put_objects(self, transfers, content_provider):
        failures = []

        def put_one(planned, href, headers):
            data = content_provider(planned.path)
            if hashlib.sha256(data).digest() != planned.sha256:
                raise HubError(f"{planned.path}: content changed since planning")
            resp = self._request("PUT", href, data=data, headers=headers)
            if resp.status_code >= 300:
                raise HubError(f"PUT {planned.path}: HTTP {resp.status_code}")

        with ThreadPoolExecutor(max_workers=self.put_workers) as pool:
            futures = {
                pool.submit(put_one, *transfer): transfer[0] for transfer in transfers
            }
        for future, planned in futures.items():
            try:
                future.result()
            except AuthFailed:
                raise
            except Exception as exc:
                failures.append((planned.path, str(exc)))
        return failures

    def _commit(self, plan, pending, content_provider):
        lines = [{"key": "header", "value": {"summary": plan.summary}}]
        for f in pending:
            if f.mode is FileMode.INLINE:
                content = base64.b64encode(content_provider(f.path)).decode("ascii")
                lines.append(
                    {
                        "key": "file",
                        "value": {"path": f.path, "encoding": "base64", "content": content},
                    }
                )
            else:
                lines.append(
                    {
                        "key": "lfsFile",
                        "value": {
                            "path": f.path,
                            "algo": "sha256",
                            "oid": f.sha256_hex,
                            "size": f.size_bytes,
                        },
                    }
                )
        payload = "\n".join(json.dumps(line) for line in lines) + "\n"
        url = (
            f"{self.target.endpoint}/api/datasets/{self.target.repo_id}"
            f"/commit/{self.target.revision}"
        )
        resp = self._request(
            "POST",
            url,
            data=payload.encode(),
            headers={"Content-Type": "application/x-ndjson"},
        )
        if resp.status_code != 200:
            raise HubError(f"commit: HTTP {resp.status_code}: {resp.text[:200]}")
        return resp.json().get("commitOid")

    def upload(self, plan, content_provider, *, acknowledge_large=False):
        """Run preupload → LFS transfers → commit. Files the hub already has
        are skipped; if any transfer fails the commit is not attempted."""
        if check_size_budget(plan) is not BudgetVerdict.OK and not acknowledge_large:
            raise BudgetBlocked(
                f"plan totals {plan.total_bytes} bytes, over the {BUDGET_BYTES} byte budget"
            )
        with self._single_upload():
            ignored = self._preupload(plan)
            skipped = tuple(f.path for f in plan.files if f.path in ignored)
            pending = [f for f in plan.files if f.path not in ignored]
            if not pending:
                return UploadReport((), skipped, (), None)
            transfers = self._lfs_batch([f for f in pending if f.mode is FileMode.LFS])
            failures = self._put_objects(transfers, content_provider)
            if failures:
                raise PartialUpload(
                    f"{len(failures)} LFS transfers failed; commit not attempted",
                    failed=[path for path, _ in failures],
                )
            revision = self._commit(plan, pending, content_provider)
            return UploadReport(tuple(f.path for f in pending), skipped, (), revision)
