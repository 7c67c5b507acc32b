"""In-process hub double implementing the commit protocol end to end:
repo creation, preupload dedup, LFS batch negotiation, content-addressed
object storage, and atomic NDJSON commits. State is inspectable over
GET /_state and faults can be injected per route kind."""

import base64
import hashlib
import json
import socketserver
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .errors import PortUnavailable


class _Server(ThreadingHTTPServer):
    daemon_threads = True

    def server_bind(self):
        # HTTPServer resolves server_name via reverse DNS; that lookup can
        # stall for hundreds of ms on hosts without one, so skip it
        socketserver.TCPServer.server_bind(self)
        self.server_name = "localhost"
        self.server_port = self.server_address[1]


@dataclass
class FaultRule:
    """Fail requests of one kind with `status`, starting at the `first`-th
    request of that kind (1-based) and lasting `count` requests
    (None means every request from `first` on)."""

    kind: str
    status: int = 500
    first: int = 1
    count: int | None = 1

    def applies(self, seen):
        if seen < self.first:
            return False
        return self.count is None or seen < self.first + self.count


@dataclass
class _Commit:
    commit_id: str
    summary: str
    tree: dict  # path -> {"sha256": hex, "size": int}


@dataclass
class _Repo:
    private: bool = False
    revisions: dict = field(default_factory=dict)  # rev -> [_Commit]

    def tree(self, revision):
        commits = self.revisions.get(revision)
        return dict(commits[-1].tree) if commits else {}


class _HubState:
    def __init__(self):
        self.lock = threading.Lock()
        self.reset()

    def reset(self):
        self.repos = {}  # repo_id -> _Repo
        self.objects = {}  # sha256 hex -> bytes
        self.commit_count = 0
        self.request_log = []
        self.faults = []
        self.counters = {}

    def snapshot(self):
        repos = {}
        for repo_id, repo in self.repos.items():
            revisions = {}
            for rev, commits in repo.revisions.items():
                revisions[rev] = {
                    "commits": [
                        {"id": c.commit_id, "summary": c.summary} for c in commits
                    ],
                    "tree": commits[-1].tree,
                }
            repos[repo_id] = {"private": repo.private, "revisions": revisions}
        return {
            "repos": repos,
            "objects": {sha: len(data) for sha, data in self.objects.items()},
            "commit_count": self.commit_count,
        }


class _Handler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"

    def log_message(self, *args):
        pass

    # --- plumbing -------------------------------------------------------

    def _body(self):
        length = int(self.headers.get("Content-Length") or 0)
        return self.rfile.read(length)

    def _send(self, status, payload=None, content_type="application/json"):
        data = b"" if payload is None else json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def _route_kind(self):
        path = self.path
        if path == "/api/repos/create":
            return "create"
        if "/preupload/" in path:
            return "preupload"
        if path.endswith("/info/lfs/objects/batch"):
            return "batch"
        if path.startswith("/lfs-store/"):
            return "put"
        if "/commit/" in path:
            return "commit"
        if path == "/_state":
            return "state"
        return "unknown"

    def _gate(self, state, kind, body):
        """Log, count, apply fault rules and auth. Returns False when the
        request was already answered (fault or auth failure)."""
        state.request_log.append(
            {"kind": kind, "method": self.command, "path": self.path, "body_len": len(body)}
        )
        seen = state.counters[kind] = state.counters.get(kind, 0) + 1
        for rule in state.faults:
            if rule.kind == kind and rule.applies(seen):
                self._send(rule.status, {"error": f"injected {rule.status}"})
                return False
        token = self.server.auth_token
        if token and self.command != "GET":
            if self.headers.get("Authorization") != f"Bearer {token}":
                self._send(401, {"error": "invalid credentials"})
                return False
        return True

    def _dispatch(self):
        state = self.server.state
        kind = self._route_kind()
        body = self._body()
        with state.lock:
            if not self._gate(state, kind, body):
                return
            handler = getattr(self, f"_handle_{kind}", None)
            if handler is None:
                self._send(404, {"error": f"no route for {self.path}"})
                return
            handler(state, body)

    def do_GET(self):
        self._dispatch()

    def do_POST(self):
        self._dispatch()

    def do_PUT(self):
        self._dispatch()

    # --- routes ----------------------------------------------------------

    def _handle_state(self, state, body):
        self._send(200, state.snapshot())

    def _handle_create(self, state, body):
        req = json.loads(body)
        repo_id = f"{req['organization']}/{req['name']}"
        if repo_id in state.repos:
            self._send(409, {"error": "repo exists"})
            return
        state.repos[repo_id] = _Repo(private=bool(req.get("private")))
        self._send(200, {"url": f"/datasets/{repo_id}"})

    def _repo_and_rev(self, state, marker):
        # /api/datasets/{ns}/{name}/{marker}/{rev}
        parts = self.path.split("/")
        idx = parts.index(marker)
        repo_id = "/".join(parts[idx - 2 : idx])
        revision = "/".join(parts[idx + 1 :])
        repo = state.repos.get(repo_id)
        return repo_id, revision, repo

    def _handle_preupload(self, state, body):
        repo_id, revision, repo = self._repo_and_rev(state, "preupload")
        if repo is None:
            self._send(404, {"error": f"unknown repo {repo_id}"})
            return
        tree = repo.tree(revision)
        req = json.loads(body)
        files = []
        for entry in req.get("files", []):
            current = tree.get(entry["path"])
            ignore = (
                current is not None
                and current["sha256"] == entry["sha256"]
                and current["size"] == entry["size"]
            )
            files.append({"path": entry["path"], "shouldIgnore": ignore})
        self._send(200, {"files": files})

    def _handle_batch(self, state, body):
        req = json.loads(body)
        if req.get("operation") != "upload" or "basic" not in req.get("transfers", []):
            self._send(422, {"error": "only basic upload transfers supported"})
            return
        host = self.headers.get("Host", "localhost")
        objects = []
        for obj in req.get("objects", []):
            answer = {"oid": obj["oid"], "size": obj["size"]}
            if obj["oid"] not in state.objects:
                answer["actions"] = {
                    "upload": {"href": f"http://{host}/lfs-store/{obj['oid']}"}
                }
            objects.append(answer)
        self._send(200, {"transfer": "basic", "objects": objects})

    def _handle_put(self, state, body):
        oid = self.path.rsplit("/", 1)[1]
        if hashlib.sha256(body).hexdigest() != oid:
            self._send(400, {"error": "body does not hash to oid"})
            return
        state.objects[oid] = body
        self._send(200, {})

    def _handle_commit(self, state, body):
        repo_id, revision, repo = self._repo_and_rev(state, "commit")
        if repo is None:
            self._send(404, {"error": f"unknown repo {repo_id}"})
            return
        if "application/x-ndjson" not in (self.headers.get("Content-Type") or ""):
            self._send(400, {"error": "commit body must be NDJSON"})
            return
        # validate everything before touching state so a bad line cannot
        # leave a half-applied commit behind
        try:
            lines = [json.loads(raw) for raw in body.decode().splitlines() if raw.strip()]
        except (UnicodeDecodeError, json.JSONDecodeError):
            self._send(400, {"error": "malformed NDJSON"})
            return
        if not lines or lines[0].get("key") != "header":
            self._send(400, {"error": "first line must be the header"})
            return
        summary = lines[0].get("value", {}).get("summary", "")
        new_objects = {}
        changes = {}
        for line in lines[1:]:
            key, value = line.get("key"), line.get("value", {})
            if key == "file":
                try:
                    data = base64.b64decode(value["content"], validate=True)
                except (KeyError, ValueError, TypeError):
                    self._send(400, {"error": "bad inline file line"})
                    return
                sha = hashlib.sha256(data).hexdigest()
                new_objects[sha] = data
                changes[value["path"]] = {"sha256": sha, "size": len(data)}
            elif key == "lfsFile":
                oid = value.get("oid")
                stored = state.objects.get(oid)
                if value.get("algo") != "sha256" or stored is None:
                    self._send(400, {"error": f"unknown lfs object {oid}"})
                    return
                if len(stored) != value.get("size"):
                    self._send(400, {"error": f"size mismatch for {oid}"})
                    return
                changes[value["path"]] = {"sha256": oid, "size": value["size"]}
            else:
                self._send(400, {"error": f"unknown line key {key!r}"})
                return
        commits = repo.revisions.setdefault(revision, [])
        tree = dict(commits[-1].tree) if commits else {}
        tree.update(changes)
        parent = commits[-1].commit_id if commits else ""
        digest = hashlib.sha256(
            json.dumps([parent, summary, sorted(tree.items())]).encode()
        ).hexdigest()
        state.objects.update(new_objects)
        commits.append(_Commit(digest, summary, tree))
        state.commit_count += 1
        self._send(200, {"commitOid": digest})


class MockHub:
    """Threaded hub double. Use as a context manager or call start()/stop().

    >>> with MockHub() as hub:
    ...     target = RepoTarget(hub.endpoint, "org/data")
    """

    def __init__(self, port=0, auth_token=None):
        self.state = _HubState()
        try:
            self._server = _Server(("127.0.0.1", port), _Handler)
        except OSError as exc:
            raise PortUnavailable(f"cannot bind 127.0.0.1:{port}: {exc}") from exc
        self._server.state = self.state
        self._server.auth_token = auth_token
        self._thread = None

    @property
    def endpoint(self):
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    @property
    def request_log(self):
        return list(self.state.request_log)

    def start(self):
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02), daemon=True
        )
        self._thread.start()
        return self

    def stop(self):
        self._server.shutdown()
        self._server.server_close()
        if self._thread:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def inject_fault(self, rule):
        with self.state.lock:
            self.state.faults.append(rule)

    def clear_faults(self):
        with self.state.lock:
            self.state.faults = []
            self.state.counters = {}

    def reset(self):
        with self.state.lock:
            self.state.reset()

    def snapshot(self):
        with self.state.lock:
            return self.state.snapshot()

    def requests_of(self, kind):
        with self.state.lock:
            return [r for r in self.state.request_log if r["kind"] == kind]
