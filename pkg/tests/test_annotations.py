"""Annotation parsing, sanitization, OMERO harvesting, and the precedence merge."""

import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bioimagepub.annotations import (
    AnnotationSource,
    AnnotationTable,
    harvest_idr,
    harvest_omero,
    merge,
    parse_table,
    sanitize_column,
    sanitize_header,
)
from bioimagepub.errors import MalformedTable, MissingKeyColumn, SourceUnreachable

from fixture_servers import JsonFixtureServer


# --- sanitization -----------------------------------------------------------


def test_sanitize_examples():
    assert sanitize_column("Image Name") == "image_name"
    assert sanitize_column("Gene Symbol!") == "gene_symbol"
    assert sanitize_column("µm per pixel") == "m_per_pixel"
    assert sanitize_column("already_clean") == "already_clean"
    assert sanitize_column("9name") == "_9name"
    assert sanitize_column("___") == "column"
    assert sanitize_column("") == "column"
    assert sanitize_column("A  --  B") == "a_b"


@settings(max_examples=200, deadline=None)
@given(st.text(max_size=40))
def test_sanitize_idempotent_and_well_formed(s):
    out = sanitize_column(s)
    assert sanitize_column(out) == out
    assert re.fullmatch(r"[a-z_][a-z0-9_]*", out)


def test_sanitize_header_collisions():
    assert sanitize_header(["Gene", "gene", "GENE!"]) == ["gene", "gene_2", "gene_3"]
    # suffix landing on an already-assigned name must not collide
    assert sanitize_header(["gene", "gene!", "gene_2"]) == ["gene", "gene_2", "gene_2_2"]
    assert sanitize_header([]) == []


# --- table parsing ----------------------------------------------------------


def test_parse_csv_example():
    t = harvest_idr(b"Image Name,Gene\nplate1_A1,KIF11", "Image Name")
    assert t.source is AnnotationSource.IDR
    assert t.rows == {"plate1_A1": {"gene": "KIF11"}}


def test_parse_tsv_autodetect():
    t = harvest_idr(b"Image Name\tGene\nimg1\tKIF11\nimg2\tTP53", "Image Name")
    assert t.rows == {"img1": {"gene": "KIF11"}, "img2": {"gene": "TP53"}}


def test_parse_header_only_is_empty_table():
    t = harvest_idr(b"Image Name,Gene\n", "Image Name")
    assert t.rows == {}


def test_parse_missing_key_column():
    with pytest.raises(MissingKeyColumn):
        harvest_idr(b"Image Name,Gene\na,b", "missing")


def test_parse_key_column_matches_sanitized_name():
    t = harvest_idr(b"Image Name,Gene\na,KIF11", "image_name")
    assert t.rows == {"a": {"gene": "KIF11"}}


def test_parse_ragged_rows():
    with pytest.raises(MalformedTable):
        harvest_idr(b"a,b\n1,2,3", "a")


def test_parse_empty_file():
    with pytest.raises(MalformedTable):
        harvest_idr(b"", "a")


def test_parse_duplicate_keys_last_wins(caplog):
    t = harvest_idr(b"k,v\nx,1\nx,2", "k")
    assert t.rows == {"x": {"v": "2"}}


def test_parse_quoted_fields():
    t = parse_table(b'k,notes\na,"x, ""y"" z"', "k", AnnotationSource.USER)
    assert t.rows["a"]["notes"] == 'x, "y" z'


def test_parse_bom_tolerated():
    t = harvest_idr(b"\xef\xbb\xbfk,v\na,1", "k")
    assert t.rows == {"a": {"v": "1"}}


def test_table_rejects_unsanitized_columns():
    with pytest.raises(ValueError):
        AnnotationTable(AnnotationSource.USER, {"k": {"Bad Name": "v"}})


# --- merge ------------------------------------------------------------------


def T(source, rows):
    return AnnotationTable(source, rows)


def test_merge_later_wins():
    merged = merge(
        [
            T(AnnotationSource.IDR, {"a": {"gene": "x"}}),
            T(AnnotationSource.USER, {"a": {"gene": "y"}}),
        ]
    )
    assert merged.rows["a"]["gene"] == ("y", AnnotationSource.USER)


def test_merge_disjoint_union():
    merged = merge(
        [
            T(AnnotationSource.IDR, {"a": {"gene": "x"}}),
            T(AnnotationSource.OMERO, {"b": {"organism": "h"}}),
        ]
    )
    assert merged.columns == ("gene", "organism")
    assert merged.rows["a"]["gene"] == ("x", AnnotationSource.IDR)
    assert merged.rows["b"]["organism"] == ("h", AnnotationSource.OMERO)


def test_merge_requires_input():
    with pytest.raises(ValueError):
        merge([])


def test_merge_column_order_first_appearance():
    merged = merge(
        [
            T(AnnotationSource.IDR, {"a": {"b_col": "1", "a_col": "2"}}),
            T(AnnotationSource.USER, {"a": {"c_col": "3", "a_col": "9"}}),
        ]
    )
    assert merged.columns == ("b_col", "a_col", "c_col")


tables_strategy = st.lists(
    st.builds(
        T,
        st.sampled_from(list(AnnotationSource)),
        st.dictionaries(
            st.sampled_from(["k1", "k2", "k3"]),
            st.dictionaries(
                st.sampled_from(["c1", "c2", "c3"]),
                st.text(max_size=5),
                max_size=3,
            ),
            max_size=3,
        ),
    ),
    min_size=1,
    max_size=4,
)


@settings(max_examples=100, deadline=None)
@given(tables_strategy)
def test_merge_matches_bruteforce_fold(tables):
    merged = merge(tables)
    # oracle: plain dict fold applying later-wins pairwise
    want = {}
    for t in tables:
        for key, cols in t.rows.items():
            target = want.setdefault(key, {})
            for name, value in cols.items():
                target[name] = (value, t.source)
    got = {k: dict(v) for k, v in merged.rows.items()}
    assert got == want


@settings(max_examples=100, deadline=None)
@given(tables_strategy, tables_strategy)
def test_merge_associative_on_values(left, right):
    whole = merge(left + right)
    staged = merge([merge(left).as_table(), *right])
    assert {
        k: {c: v for c, (v, _) in cols.items()} for k, cols in whole.rows.items()
    } == {
        k: {c: v for c, (v, _) in cols.items()} for k, cols in staged.rows.items()
    }


# --- OMERO harvesting -------------------------------------------------------


def omero_fixture(ids_with_names):
    srv = JsonFixtureServer()
    for image_id, name, values in ids_with_names:
        srv.add(f"/api/v0/m/images/{image_id}/", {"data": {"@id": image_id, "Name": name}})
        srv.add(
            f"/api/v0/m/images/{image_id}/annotations/",
            {"annotations": [{"class": "MapAnnotationI", "values": values}]},
        )
    return srv.start()


def test_omero_single_image_map_annotation():
    srv = omero_fixture([(1, "img.tif", [["Organism", "Homo sapiens"]])])
    try:
        got = harvest_omero(f"{srv.endpoint}/api/v0", [1])
        assert got.failures == ()
        assert got.table.source is AnnotationSource.OMERO
        assert got.table.rows == {"img.tif": {"organism": "Homo sapiens"}}
    finally:
        srv.stop()


def test_omero_partial_failure_collected():
    srv = omero_fixture([(1, "a.tif", [["Gene", "KIF11"]])])
    try:
        got = harvest_omero(f"{srv.endpoint}/api/v0", [1, 404404])
        assert "a.tif" in got.table.rows
        assert len(got.failures) == 1 and got.failures[0][0] == 404404
    finally:
        srv.stop()


def test_omero_all_404_returns_empty_with_report():
    srv = JsonFixtureServer().start()
    try:
        got = harvest_omero(f"{srv.endpoint}/api/v0", [7, 8])
        assert got.table.rows == {}
        assert [f[0] for f in got.failures] == [7, 8]
    finally:
        srv.stop()


def test_omero_empty_ids_rejected():
    with pytest.raises(ValueError):
        harvest_omero("http://unused", [])


def test_omero_unreachable_host():
    with pytest.raises(SourceUnreachable):
        harvest_omero("http://127.0.0.1:9", [1])


def test_omero_concurrent_many_ids():
    fixtures = [(i, f"img{i:03d}.tif", [["Index", str(i)]]) for i in range(20)]
    srv = omero_fixture(fixtures)
    try:
        got = harvest_omero(f"{srv.endpoint}/api/v0", [i for i in range(20)])
        assert got.failures == ()
        assert len(got.table.rows) == 20
        assert got.table.rows["img007.tif"] == {"index": "7"}
    finally:
        srv.stop()
