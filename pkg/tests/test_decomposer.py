import json

import pytest

from tura.decomposer import MAX_SUB_QUERIES, SubQuerySet, decompose, passthrough
from tura.prompts import DECOMPOSE_HEADER
from tura.providers import CallableProvider, ReplayProvider

FLIGHT_Q = ("I need to book a flight to Shanghai for next week and find a good local "
            "restaurant there.")


def test_worked_example():
    gen = ReplayProvider([{"match": [DECOMPOSE_HEADER, FLIGHT_Q],
                           "response": {"tasks": ["book flight to Shanghai for next week",
                                                  "find recommended restaurants in Shanghai"]}}])
    sqs = decompose(FLIGHT_Q, gen)
    assert sqs.sub_queries == ("book flight to Shanghai for next week",
                               "find recommended restaurants in Shanghai")
    assert sqs.original_query == FLIGHT_Q


def test_atomic_query():
    q = "what is the capital of France"
    gen = CallableProvider(lambda p, temperature=None: json.dumps({"tasks": [q]}))
    assert decompose(q, gen).sub_queries == (q,)


def test_non_json_twice_falls_back():
    calls = []

    def fn(prompt, temperature=None):
        calls.append(prompt)
        return "I cannot help"

    sqs = decompose("hello there", CallableProvider(fn))
    assert sqs.sub_queries == ("hello there",)
    assert len(calls) == 2


def test_second_attempt_used():
    replies = iter(["garbage", '```json\n{"tasks": ["a", "b", "a"]}\n```'])
    sqs = decompose("q", CallableProvider(lambda p, temperature=None: next(replies)))
    assert sqs.sub_queries == ("a", "b")


def test_cap_on_sub_queries():
    tasks = [f"t{i}" for i in range(20)]
    sqs = decompose("q", CallableProvider(lambda p, temperature=None: json.dumps({"tasks": tasks})))
    assert len(sqs) == MAX_SUB_QUERIES


def test_empty_query_rejected():
    with pytest.raises(ValueError):
        decompose("  ", ReplayProvider())


def test_passthrough_and_empty_set():
    assert passthrough(" x ").sub_queries == ("x",)
    with pytest.raises(ValueError):
        SubQuerySet("q", ())
