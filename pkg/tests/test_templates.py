from __future__ import annotations

import random

import pytest

from tandem.errors import (
    DuplicateBlank,
    InvalidPack,
    KindMismatch,
    MissingBinding,
    MultilineBody,
    NoVariantForDialect,
    PackSyntaxError,
    TypeCheckFailed,
    UndeclaredBlank,
    UnusedBlank,
)
from tandem.templates import (
    BlankKind,
    BlankSource,
    TemplateVariantSet,
    compile_recognizer,
    group_variant_sets,
    instantiate,
    normalize_ws,
    parse_pack,
    parse_template,
    recognize_line,
    select_variant,
    validate_value,
)

from helpers import random_bindings

FILTER_SRC = (
    "#template filter filter minitable DF:IDENT:ENV COL:COLNAME:ACTION EXPR:EXPR:ACTION\n"
    "$DF = $DF[$DF.$COL $EXPR]"
)
CROP_SRC = (
    "#template crop crop minitable OUT:IDENT:ACTION IMG:IDENT:ENV "
    "Y1:INDEX:ACTION Y2:INDEX:ACTION X1:INDEX:ACTION X2:INDEX:ACTION\n"
    "$OUT = $IMG[$Y1:$Y2, $X1:$X2]"
)


def test_parse_template_basic():
    t = parse_template(FILTER_SRC)
    assert t.template_id == "filter"
    assert t.action_name == "filter"
    assert t.dialect == "minitable"
    assert [b.name for b in t.blanks] == ["DF", "COL", "EXPR"]
    assert t.blank("DF").source is BlankSource.ENV_RESOLVED
    assert t.blank("COL").kind is BlankKind.COLNAME


def test_parse_template_errors():
    with pytest.raises(UndeclaredBlank):
        parse_template("#template t a d X:IDENT:ACTION\n$X = $Y")
    with pytest.raises(UnusedBlank):
        parse_template("#template t a d X:IDENT:ACTION Y:IDENT:ACTION\n$X = 1")
    with pytest.raises(DuplicateBlank):
        parse_template("#template t a d X:IDENT:ACTION X:NUMBER:ACTION\n$X = $X")
    with pytest.raises(MultilineBody):
        parse_template("#template t a d X:IDENT:ACTION\n$X = 1\n$X = 2")
    with pytest.raises(PackSyntaxError):
        parse_template("#template t a d X:NUMBER:ENV\n$X = 1")  # ENV must be IDENT
    with pytest.raises(PackSyntaxError):
        parse_template("#template t a d X:WAT:ACTION\n$X = 1")


def test_dollar_escape():
    t = parse_template("#template tax set-tax d P:IDENT:ACTION\n$P = $P * 1.07 $$tax")
    assert instantiate(t, {"P": "price"}) == "price = price * 1.07 $tax"
    rec = compile_recognizer(t)
    got = recognize_line([rec], "price = price * 1.07 $tax")
    assert got == ("tax", {"P": "price"})


def test_instantiate_filter():
    t = parse_template(FILTER_SRC)
    line = instantiate(t, {"DF": "df", "COL": "age", "EXPR": "< 65"})
    assert line == "df = df[df.age < 65]"


def test_instantiate_errors():
    t = parse_template(FILTER_SRC)
    with pytest.raises(MissingBinding):
        instantiate(t, {"DF": "df", "COL": "age"})
    with pytest.raises(KindMismatch):
        instantiate(t, {"DF": "1df", "COL": "age", "EXPR": "< 65"})
    with pytest.raises(KindMismatch):
        instantiate(t, {"DF": "df", "COL": "age", "EXPR": "age"})


def test_number_blank_rejects_identifier():
    t = parse_template("#template set slider-set d VAR:IDENT:ENV VAL:NUMBER:ACTION\n$VAR = $VAL")
    with pytest.raises(KindMismatch):
        instantiate(t, {"VAR": "x", "VAL": "n"})
    assert validate_value(BlankKind.NUMBER, "n") is False
    assert validate_value(BlankKind.NUMBER, "-12.5") is True
    assert validate_value(BlankKind.INDEX, "850") is True
    assert validate_value(BlankKind.INDEX, "-1") is False


def test_recognize_crop_and_reject_nonnumber():
    rec = compile_recognizer(parse_template(CROP_SRC))
    got = recognize_line([rec], "crop_img = img[0:850, 0:850]")
    assert got == (
        "crop",
        {"OUT": "crop_img", "IMG": "img", "Y1": "0", "Y2": "850", "X1": "0", "X2": "850"},
    )
    # a bare identifier where an INDEX is required must not be guessed at
    assert recognize_line([rec], "crop_img = img[0:n, 0:850]") is None


def test_recognize_normalizes_whitespace():
    rec = compile_recognizer(parse_template(FILTER_SRC))
    got = recognize_line([rec], "  df  =  df[df.age   <   65]  ")
    assert got == ("filter", {"DF": "df", "COL": "age", "EXPR": "< 65"})


def test_repeated_blank_must_capture_identical_text():
    rec = compile_recognizer(parse_template(FILTER_SRC))
    assert recognize_line([rec], "df = other[df.age < 65]") is None
    assert recognize_line([rec], "df = df[other.age < 65]") is None


def test_recognize_is_anchored():
    rec = compile_recognizer(parse_template(FILTER_SRC))
    assert recognize_line([rec], "df = df[df.age < 65] # note") is None
    assert recognize_line([rec], "x = df = df[df.age < 65]") is None


def test_first_match_wins_in_order():
    a = parse_template("#template a act1 d X:IDENT:ACTION\n$X = $X")
    b = parse_template("#template b act2 d X:IDENT:ACTION Y:IDENT:ACTION\n$X = $Y")
    recs = [compile_recognizer(a), compile_recognizer(b)]
    assert recognize_line(recs, "v = v")[0] == "a"
    assert recognize_line(list(reversed(recs)), "v = v")[0] == "b"


def test_select_variant():
    mt = parse_template(FILTER_SRC)
    df = parse_template(FILTER_SRC.replace("filter filter minitable", "filter-df filter dataframe"))
    vs = TemplateVariantSet("filter", "table", [mt, df])
    assert select_variant(vs, "table", "minitable") is mt
    assert select_variant(vs, "table", "dataframe") is df
    with pytest.raises(NoVariantForDialect):
        select_variant(vs, "table", "sql")
    with pytest.raises(TypeCheckFailed):
        select_variant(vs, "num", "minitable")


def test_parse_pack_grouping():
    text = (
        "#vartype table\n"
        + FILTER_SRC
        + "\n"
        + FILTER_SRC.replace("filter filter minitable", "filter-df filter dataframe")
        + "\n#vartype grid\n"
        + CROP_SRC
        + "\n"
    )
    templates, vartypes = parse_pack(text)
    assert [t.template_id for t in templates] == ["filter", "filter-df", "crop"]
    sets = group_variant_sets(templates, vartypes)
    assert sets["filter"].required_var_type == "table"
    assert sets["crop"].required_var_type == "grid"
    assert [t.dialect for t in sets["filter"].variants] == ["minitable", "dataframe"]


def test_parse_pack_errors():
    with pytest.raises(PackSyntaxError):
        parse_pack(FILTER_SRC)  # no #vartype
    with pytest.raises(InvalidPack):
        parse_pack("#vartype table\n" + FILTER_SRC + "\n" + FILTER_SRC)
    dup_dialect = FILTER_SRC.replace("filter filter", "filter2 filter")
    templates, vartypes = parse_pack("#vartype table\n" + FILTER_SRC + "\n" + dup_dialect)
    with pytest.raises(InvalidPack):
        group_variant_sets(templates, vartypes)


def test_normalize_ws():
    assert normalize_ws("\ta  =\t 1 ") == "a = 1"


def test_roundtrip_random_sample():
    # the full 500-per-template sweep lives in the acceptance suite
    rng = random.Random(7)
    for src in (FILTER_SRC, CROP_SRC):
        t = parse_template(src)
        rec = compile_recognizer(t)
        for _ in range(50):
            b = random_bindings(t, rng)
            line = instantiate(t, b)
            assert recognize_line([rec], line) == (t.template_id, b)
