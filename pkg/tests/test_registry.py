import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import small_registry, weather_tool
from tura.errors import (
    AugmentationError,
    DescriptorParseError,
    DuplicateServerError,
    FormatError,
    SchemaViolationError,
    ServerNotFoundError,
)
from tura.providers import CallableProvider, ReplayProvider
from tura.registry import (
    build_augmented_document,
    build_doc_only_document,
    check_params,
    load_registry,
    parse_string_list,
)

WEATHER_YAML = """\
server_id: weather
description: Weather forecasts.
tools:
  - name: get_weather
    description: Forecast
    parameters:
      - {name: city, type: string, required: true}
      - {name: date, type: string, required: true, pattern: '\\d{4}-\\d{2}-\\d{2}'}
"""
HOTEL_YAML = """\
server_id: hotel-booking
description: Hotel rooms.
tools:
  - name: book_hotel
    description: Reserve
    parameters:
      - {name: tier, type: enum, values: [budget, luxury]}
"""


def test_file_with_two_servers(tmp_path):
    p = tmp_path / "reg.yaml"
    p.write_text(WEATHER_YAML + "---\n" + HOTEL_YAML)
    reg = load_registry(p)
    assert len(reg) == 2
    assert list(reg) == ["weather", "hotel-booking"]
    assert reg["weather"].tool("get_weather").param("date").pattern == r"\d{4}-\d{2}-\d{2}"


def test_duplicate_server_id_reports_both_origins(tmp_path):
    p = tmp_path / "reg.yaml"
    p.write_text(WEATHER_YAML + "---\n" + WEATHER_YAML)
    with pytest.raises(DuplicateServerError) as exc:
        load_registry(p)
    assert exc.value.server_id == "weather"
    assert ":1" in exc.value.first and ":10" in exc.value.second


def test_enum_with_zero_values_is_schema_violation():
    raw = {"server_id": "s", "description": "d",
           "tools": [{"name": "t", "parameters": [{"name": "x", "type": "enum", "values": []}]}]}
    with pytest.raises(SchemaViolationError) as exc:
        load_registry([raw])
    assert exc.value.field == "x.values"


def test_inline_enum_shorthand():
    raw = {"server_id": "s", "description": "d",
           "tools": [{"name": "t", "parameters": [{"name": "x", "type": "enum(a, b)"}]}]}
    assert load_registry([raw])["s"].tools[0].parameters[0].values == ("a", "b")


def test_parse_error_carries_line(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("server_id: x\ndescription: [unclosed\n")
    with pytest.raises(DescriptorParseError) as exc:
        load_registry(p)
    assert exc.value.line is not None


@pytest.mark.parametrize("raw, cls", [
    ({"description": "d", "tools": []}, DescriptorParseError),
    ({"server_id": "s", "description": "d", "tools": []}, SchemaViolationError),
    ({"server_id": "s", "description": " ", "tools": [{"name": "t"}]}, SchemaViolationError),
    ({"server_id": "s", "description": "d", "tools": [{"name": "t"}, {"name": "t"}]},
     SchemaViolationError),
    ({"server_id": "s", "description": "d",
      "tools": [{"name": "t", "parameters": [{"name": "p", "type": "date"}]}]},
     SchemaViolationError),
    ({"server_id": "s", "description": "d",
      "tools": [{"name": "t", "parameters": [{"name": "p", "pattern": "("}]}]},
     SchemaViolationError),
])
def test_invalid_descriptors(raw, cls):
    with pytest.raises(cls):
        load_registry([raw])


def test_directory_layout(fixture_dir):
    reg = load_registry(fixture_dir / "fleet")
    assert len(reg) == 8
    assert "path-planner" in reg


def test_unknown_server_lookup():
    with pytest.raises(ServerNotFoundError):
        small_registry()["nope"]


def test_yaml_round_trip(tmp_path):
    reg = small_registry()
    p = tmp_path / "out.yaml"
    p.write_text(reg.to_yaml())
    again = load_registry(p)
    assert [d.to_dict() for d in again.descriptors] == [d.to_dict() for d in reg.descriptors]


# ----------------------------------------------------------------- params


def test_check_params_codes():
    tool = small_registry()["hotel-booking"].tools[0]
    codes = {i.code for i in check_params(tool, {"nights": "2", "tier": "mid", "x": 1})}
    assert codes == {"missing_required", "wrong_type", "bad_enum", "unexpected"}
    assert check_params(tool, {"city": "Paris", "nights": 2}) == []


def test_pattern_mismatch_names_param():
    issues = check_params(weather_tool(), {"city": "Beijing", "date": "tomorrow"})
    assert [(i.param, i.code) for i in issues] == [("date", "pattern_mismatch")]


@given(st.integers())
def test_integer_params_accept_ints_only(n):
    tool = small_registry()["hotel-booking"].tools[0]
    assert check_params(tool, {"city": "x", "nights": n}) == []
    assert check_params(tool, {"city": "x", "nights": float(n) + 0.5})[0].code == "wrong_type"


# ----------------------------------------------------------------- augmentation


def _gen_returning(queries):
    return CallableProvider(lambda prompt, temperature=None: json.dumps(queries))


def test_n_q_zero_gives_no_queries():
    from tura.registry import augment_server

    d = augment_server(small_registry()["weather"], _gen_returning(["a"]), n_q=0)
    assert d.synthetic_queries == ()


def test_twenty_queries_stored():
    from tura.registry import augment_server

    qs = [f"weather question {i}" for i in range(20)]
    d = augment_server(small_registry()["weather"], _gen_returning(qs), n_q=20)
    assert d.synthetic_queries == tuple(qs)


def test_duplicates_removed_then_capped():
    from tura.registry import augment_server

    base = [f"q{i}" for i in range(19)]
    raw = base + ["q0", "q5", "q7"]  # 22 strings, 3 duplicates
    d = augment_server(small_registry()["weather"], _gen_returning(raw), n_q=20)
    assert len(d.synthetic_queries) == len(set(raw)) == 19


@given(st.lists(st.text(max_size=8), max_size=30), st.integers(1, 25))
def test_dedup_oracle(raw, n_q):
    from tura.registry import augment_server

    d = augment_server(small_registry()["weather"], _gen_returning(raw), n_q=n_q)
    distinct = []
    for s in raw:
        s = s.strip()
        if s and s not in distinct and s != d.description:
            distinct.append(s)
    assert list(d.synthetic_queries) == distinct[:n_q]


def test_malformed_output_reprompts_then_salvages():
    from tura.registry import augment_server

    replies = iter(["not json", 'sure: "one query", "two query"'])
    gen = CallableProvider(lambda prompt, temperature=None: next(replies))
    d = augment_server(small_registry()["weather"], gen, n_q=5)
    assert d.synthetic_queries == ("one query", "two query")


def test_provider_failure_is_augmentation_error():
    from tura.registry import augment_server

    with pytest.raises(AugmentationError):
        augment_server(small_registry()["weather"], ReplayProvider(), n_q=3)


def test_parse_string_list_rejects_objects():
    with pytest.raises(FormatError):
        parse_string_list('[{"a": 1}]')
    assert parse_string_list('```json\n["a", "b"]\n```') == ["a", "b"]


def test_augmented_document_segments():
    from dataclasses import replace

    d = small_registry()["weather"]
    assert len(build_augmented_document(d).segments) == 1
    d20 = replace(d, synthetic_queries=tuple(f"q{i}" for i in range(20)))
    doc = build_augmented_document(d20)
    assert len(doc.segments) == 21
    assert doc.segments[0].role == "doc"
    assert {s.role for s in doc.segments[1:]} == {"synthetic_query"}
    assert build_augmented_document(d20) == doc
    assert build_doc_only_document(d20).texts == [d.description]
