"""Source enumeration, partial selection, and the S3 client against a mock store."""

import datetime as dt
import hashlib

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioimagepub import s3
from bioimagepub.errors import (
    ConfigInvalid,
    EmptySource,
    EntryChanged,
    SelectorMatchesNothing,
    SourceUnreachable,
)
from bioimagepub.sources import (
    PartialSelector,
    SourceEntry,
    SourceInventory,
    SourceKind,
    SourceLocator,
    fetch_entry,
    list_source,
    select_partial,
)

from s3mock import MockS3Server


# --- local listing ----------------------------------------------------------


def make_tree(tmp_path):
    (tmp_path / "a.tif").write_bytes(b"x" * 100)
    (tmp_path / "sub").mkdir()
    (tmp_path / "sub" / "b.tif").write_bytes(b"y" * 50)
    (tmp_path / ".DS_Store").write_bytes(b"junk")
    (tmp_path / ".cache").mkdir()
    (tmp_path / ".cache" / "c.tif").write_bytes(b"z")
    return SourceLocator.local(tmp_path)


def test_local_listing_sorted_and_hidden_excluded(tmp_path):
    inv = list_source(make_tree(tmp_path))
    assert [e.relative_path for e in inv.entries] == ["a.tif", "sub/b.tif"]
    assert inv.total_bytes == 150


def test_local_listing_include_hidden(tmp_path):
    inv = list_source(make_tree(tmp_path), include_hidden=True)
    assert [e.relative_path for e in inv.entries] == [
        ".DS_Store",
        ".cache/c.tif",
        "a.tif",
        "sub/b.tif",
    ]


def test_empty_dir_raises(tmp_path):
    with pytest.raises(EmptySource):
        list_source(SourceLocator.local(tmp_path))


def test_missing_dir_raises(tmp_path):
    with pytest.raises(SourceUnreachable):
        list_source(SourceLocator.local(tmp_path / "nope"))


def test_listing_is_idempotent(tmp_path):
    loc = make_tree(tmp_path)
    assert list_source(loc) == list_source(loc)


def test_local_fetch_roundtrip(tmp_path):
    loc = make_tree(tmp_path)
    inv = list_source(loc)
    assert fetch_entry(loc, inv.entries[0]) == b"x" * 100


def test_local_fetch_detects_mutation(tmp_path):
    loc = make_tree(tmp_path)
    inv = list_source(loc)
    (tmp_path / "a.tif").write_bytes(b"shrunk")
    with pytest.raises(EntryChanged):
        fetch_entry(loc, inv.entries[0])


def test_zero_byte_file_is_listed_and_fetched(tmp_path):
    (tmp_path / "empty.png").write_bytes(b"")
    loc = SourceLocator.local(tmp_path)
    inv = list_source(loc)
    assert inv.entries[0].size_bytes == 0
    assert fetch_entry(loc, inv.entries[0]) == b""


# --- type invariants --------------------------------------------------------


def test_entry_rejects_bad_paths():
    for bad in ("/abs", "a/../b", "./a", "a\\b", "", "a//b"):
        with pytest.raises(ValueError):
            SourceEntry(bad, 1)
    with pytest.raises(ValueError):
        SourceEntry("ok.png", -1)


def test_locator_validation():
    with pytest.raises(ConfigInvalid):
        SourceLocator(SourceKind.S3, "s3://")
    with pytest.raises(ConfigInvalid):
        SourceLocator(SourceKind.S3, "bucket/prefix")
    with pytest.raises(ConfigInvalid):
        SourceLocator(SourceKind.S3, "s3://b", endpoint="ftp://x")
    loc = SourceLocator.s3_uri("s3://bucket/deep/prefix/")
    assert loc.bucket == "bucket"
    assert loc.prefix == "deep/prefix/"
    assert SourceLocator.s3_uri("s3://bucket").prefix == ""


def test_inventory_rejects_duplicates(tmp_path):
    loc = SourceLocator.local(tmp_path)
    with pytest.raises(ValueError):
        SourceInventory.build(loc, [SourceEntry("a", 1), SourceEntry("a", 2)])


@settings(max_examples=50, deadline=None)
@given(
    names=st.lists(
        st.text(st.characters(whitelist_categories=("Ll", "Nd")), min_size=1, max_size=8),
        min_size=1,
        max_size=8,
        unique=True,
    )
)
def test_local_entries_always_normalized(tmp_path_factory, names):
    base = tmp_path_factory.mktemp("tree")
    for n in names:
        (base / f"{n}.bin").write_bytes(b"d")
    inv = list_source(SourceLocator.local(base))
    for e in inv.entries:
        assert not e.relative_path.startswith("/")
        assert ".." not in e.relative_path.split("/")
        assert "\\" not in e.relative_path
    # byte-wise sorted
    paths = [e.relative_path for e in inv.entries]
    assert paths == sorted(paths, key=lambda p: p.encode())


# --- partial selection ------------------------------------------------------


def inv_of(sizes):
    loc = SourceLocator.local("/unused")
    return SourceInventory.build(
        loc, [SourceEntry(name, size) for name, size in sizes]
    )


def test_select_include_glob():
    inv = inv_of([("a.png", 10), ("b.tif", 10), ("c.tif", 10)])
    out = select_partial(inv, PartialSelector(include_globs=("*.tif",)))
    assert [e.relative_path for e in out.entries] == ["b.tif", "c.tif"]
    assert out.total_bytes == 20


def test_select_exclude_glob():
    inv = inv_of([("a.png", 10), ("b.tif", 10)])
    out = select_partial(inv, PartialSelector(exclude_globs=("*.png",)))
    assert [e.relative_path for e in out.entries] == ["b.tif"]


def test_select_max_files_prefix():
    inv = inv_of([(f"f{i}", 1) for i in range(10)])
    out = select_partial(inv, PartialSelector(max_files=3))
    assert [e.relative_path for e in out.entries] == ["f0", "f1", "f2"]


def test_select_max_bytes_greedy_prefix():
    inv = inv_of([("x", 600), ("y", 600)])
    out = select_partial(inv, PartialSelector(max_bytes=1000))
    assert [e.relative_path for e in out.entries] == ["x"]
    assert out.total_bytes == 600


def test_select_empty_selector_is_identity():
    inv = inv_of([("a", 1), ("b", 2)])
    assert select_partial(inv, PartialSelector()) == inv


def test_select_nothing_raises():
    inv = inv_of([("a.png", 10)])
    with pytest.raises(SelectorMatchesNothing):
        select_partial(inv, PartialSelector(include_globs=("*.tif",)))


def test_selector_validation():
    with pytest.raises(ConfigInvalid):
        PartialSelector(max_files=0)
    with pytest.raises(ConfigInvalid):
        PartialSelector(max_bytes=-5)


@settings(max_examples=80, deadline=None)
@given(
    sizes=st.lists(st.integers(0, 500), min_size=1, max_size=20),
    max_files=st.none() | st.integers(1, 25),
    max_bytes=st.none() | st.integers(1, 3000),
)
def test_select_bounds_hold(sizes, max_files, max_bytes):
    inv = inv_of([(f"f{i:04d}", s) for i, s in enumerate(sizes)])
    sel = PartialSelector(max_files=max_files, max_bytes=max_bytes)
    try:
        out = select_partial(inv, sel)
    except SelectorMatchesNothing:
        # only allowed when no single prefix fits the byte budget
        assert max_bytes is not None and sizes[0] > max_bytes
        return
    if max_files is not None:
        assert len(out.entries) <= max_files
    if max_bytes is not None:
        assert out.total_bytes <= max_bytes
    # result is a prefix-respecting subset in original sort order
    paths = [e.relative_path for e in out.entries]
    assert paths == sorted(paths)


# --- S3 against the mock store ----------------------------------------------


@pytest.fixture
def server():
    srv = MockS3Server(page_size=1000).start()
    yield srv
    srv.stop()


def s3_locator(srv, root="s3://testbucket"):
    return SourceLocator.s3_uri(root, endpoint=srv.endpoint, anonymous=True)


def test_s3_paginated_listing(server):
    want = []
    for i in range(2500):
        key = f"plate/{i:06d}.tif"
        server.put("testbucket", key, b"b" * (i % 7))
        want.append(key[len("plate/"):])
    inv = list_source(s3_locator(server, "s3://testbucket/plate"))
    assert [e.relative_path for e in inv.entries] == sorted(want)
    assert inv.total_bytes == sum(i % 7 for i in range(2500))
    lists = [r for r in server.requests if r["query"]]
    assert len(lists) == 3  # 1000 + 1000 + 500


def test_s3_prefix_stripping_and_markers(server):
    server.put("testbucket", "data/", b"")
    server.put("testbucket", "data/img.png", b"abc")
    server.put("testbucket", "data/.hidden", b"h")
    server.put("testbucket", "other/nope.png", b"abc")
    inv = list_source(s3_locator(server, "s3://testbucket/data"))
    assert [e.relative_path for e in inv.entries] == ["img.png"]
    assert inv.entries[0].etag == hashlib.md5(b"abc").hexdigest()


def test_s3_fetch_with_etag(server):
    server.put("testbucket", "a.bin", b"payload")
    loc = s3_locator(server)
    inv = list_source(loc)
    assert fetch_entry(loc, inv.entries[0]) == b"payload"


def test_s3_fetch_detects_changed_object(server):
    server.put("testbucket", "a.bin", b"payload")
    loc = s3_locator(server)
    inv = list_source(loc)
    server.put("testbucket", "a.bin", b"rewritten")
    with pytest.raises(EntryChanged):
        fetch_entry(loc, inv.entries[0])


def test_s3_missing_object_is_entry_changed(server):
    server.put("testbucket", "a.bin", b"payload")
    loc = s3_locator(server)
    inv = list_source(loc)
    del server.buckets["testbucket"]["a.bin"]
    with pytest.raises(EntryChanged):
        fetch_entry(loc, inv.entries[0])


def test_s3_list_retries_transient_500s(server):
    server.put("testbucket", "a.bin", b"x")
    server.fail_next = 2
    inv = list_source(s3_locator(server))
    assert len(inv.entries) == 1
    assert len(server.requests) == 3


def test_s3_list_gives_up_after_retry_budget(server):
    server.put("testbucket", "a.bin", b"x")
    server.fail_next = 99
    with pytest.raises(SourceUnreachable):
        list_source(s3_locator(server))
    assert len(server.requests) == 3  # retry policy: 3 attempts


def test_s3_missing_bucket(server):
    with pytest.raises(SourceUnreachable):
        list_source(s3_locator(server, "s3://nosuch"))


def test_s3_anonymous_sends_no_auth_header(server):
    server.put("testbucket", "a.bin", b"x")
    list_source(s3_locator(server))
    assert all(r["auth"] is None for r in server.requests)


# --- SigV4 ------------------------------------------------------------------


def test_sigv4_matches_documented_example():
    # the worked ListUsers example from the AWS General Reference
    query = [("Action", "ListUsers"), ("Version", "2010-05-08")]
    headers = {
        "content-type": "application/x-www-form-urlencoded; charset=utf-8",
        "host": "iam.amazonaws.com",
        "x-amz-date": "20150830T123600Z",
    }
    canon, signed = s3.canonical_request(
        "GET", "/", query, headers.items(), hashlib.sha256(b"").hexdigest()
    )
    assert (
        hashlib.sha256(canon.encode()).hexdigest()
        == "f536975d06c0309214f805bb90ccff089219ecd68b2577efef23edd43b7e1a59"
    )
    assert signed == "content-type;host;x-amz-date"
    out = s3.sigv4_headers(
        "GET",
        "iam.amazonaws.com",
        "/",
        query,
        {"content-type": "application/x-www-form-urlencoded; charset=utf-8"},
        access_key="AKIDEXAMPLE",
        secret_key="wJalrXUtnFEMI/K7MDENG+bPxRfiCYEXAMPLEKEY",
        region="us-east-1",
        service="iam",
        now=dt.datetime(2015, 8, 30, 12, 36, tzinfo=dt.timezone.utc),
    )
    assert out["Authorization"] == (
        "AWS4-HMAC-SHA256 Credential=AKIDEXAMPLE/20150830/us-east-1/iam/aws4_request, "
        "SignedHeaders=content-type;host;x-amz-date, "
        "Signature=5d672d79c15b13162d9279b0855cfba6789a8edb4c82c400e06b5924a6f2b5d7"
    )


def test_signed_requests_verify_server_side(monkeypatch):
    srv = MockS3Server(require_auth=("AKTEST", "sekrit")).start()
    try:
        srv.put("testbucket", "pre fix/img 1.png", b"data")
        monkeypatch.setenv(s3.ACCESS_KEY_ENV, "AKTEST")
        monkeypatch.setenv(s3.SECRET_KEY_ENV, "sekrit")
        loc = SourceLocator.s3_uri("s3://testbucket/pre fix", endpoint=srv.endpoint)
        inv = list_source(loc)
        assert [e.relative_path for e in inv.entries] == ["img 1.png"]
        assert fetch_entry(loc, inv.entries[0]) == b"data"
        assert all(r["auth"] for r in srv.requests)
    finally:
        srv.stop()


def test_wrong_secret_is_rejected(monkeypatch):
    srv = MockS3Server(require_auth=("AKTEST", "sekrit")).start()
    try:
        srv.put("testbucket", "a.png", b"data")
        monkeypatch.setenv(s3.ACCESS_KEY_ENV, "AKTEST")
        monkeypatch.setenv(s3.SECRET_KEY_ENV, "wrong")
        with pytest.raises(SourceUnreachable):
            list_source(SourceLocator.s3_uri("s3://testbucket", endpoint=srv.endpoint))
    finally:
        srv.stop()
