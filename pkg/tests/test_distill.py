import asyncio
import json
from dataclasses import replace

import pytest

from helpers import clean_trajectory, curation_fixture, duplicate_fault, schema_fault, small_registry
from tura.distill import (
    CORRECTED,
    FAIL,
    PASS,
    CurateConfig,
    DistillRecord,
    cohort_threshold,
    correctness_stage,
    curate,
    curate_report,
    efficiency_stage,
    expert_set,
    judge_correctness,
    judge_efficiency,
    read_dataset,
    read_trajectories,
    synthesize_expert,
    write_dataset,
    write_trajectories,
)
from tura.executor import SUCCESS, TOOL_ERROR, Action, Step, Trajectory
from tura.offline import fresh_replay
from tura.planner import SubTask
from tura.providers import ReplayProvider
from tura.sim.fleet import LocalClient

REG = small_registry()


# --------------------------------------------------------------------------- synthesis


def test_weather_tasks_all_succeed(beijing_fast):
    tasks = [SubTask(f"w{i}", f"weather in Beijing, day {i}", "weather") for i in range(10)]
    trajs = asyncio.run(synthesize_expert(tasks, fresh_replay(beijing_fast),
                                          LocalClient(beijing_fast.fleet)))
    assert [t.outcome for t in trajs] == [SUCCESS] * 10
    assert all(s.thought for t in trajs for s in t.steps)


def test_unreachable_server_excluded(beijing_fast):
    tasks = [SubTask("ok", "weather", "weather"), SubTask("bad", "x", "ghost-server")]
    trajs = asyncio.run(synthesize_expert(tasks, fresh_replay(beijing_fast),
                                          LocalClient(beijing_fast.fleet)))
    assert trajs[1].outcome == TOOL_ERROR
    assert [t.task_id for t in expert_set(trajs)] == ["ok"]


def test_mixed_batch_count_oracle(beijing_fast):
    servers = ["weather", "top-attractions", "hotel-booking", "ghost", "restaurant-finder"]
    tasks = [SubTask(f"t{i}", f"task {i}", servers[i % len(servers)]) for i in range(100)]
    trajs = asyncio.run(synthesize_expert(tasks, fresh_replay(beijing_fast),
                                          LocalClient(beijing_fast.fleet)))
    assert len(expert_set(trajs)) == sum(t.outcome == SUCCESS for t in trajs)
    # the replay script knows three of these servers; the rest cannot finish
    assert len(expert_set(trajs)) == 60


# --------------------------------------------------------------------------- judges


def test_schema_fault_flagged_at_its_step():
    v = judge_correctness(schema_fault(3), REG)
    assert v.decision == FAIL
    assert [(f.step, f.code) for f in v.findings] == [(1, "pattern_mismatch")]


def test_clean_trajectory_passes():
    v = judge_correctness(clean_trajectory(0), REG)
    assert v.decision == PASS and v.findings == []


def test_foreign_tool_is_confinement_failure():
    t = clean_trajectory(0)
    t.steps[0] = Step("x", "t", Action("book_hotel", {"city": "Paris", "nights": 1}))
    v = judge_correctness(t, REG)
    assert v.decision == FAIL and v.findings[0].code == "tool_confinement"


def test_structure_findings():
    t = clean_trajectory(0)
    t.steps = [t.steps[1], t.steps[0]]
    assert "misplaced_terminal" in {f.code for f in judge_correctness(t, REG).findings}
    t2 = replace(clean_trajectory(1), steps=[clean_trajectory(1).steps[0]])
    assert "missing_terminal" in {f.code for f in judge_correctness(t2, REG).findings}
    t3 = clean_trajectory(2)
    t3.steps[0] = Step("x", "t", Action("get_weather", {"city": "{{T1.output}}",
                                                        "date": "2025-06-10"}))
    assert [f.code for f in judge_correctness(t3, REG).findings] == ["undefined_reference"]


def test_llm_soundness_layer():
    llm = ReplayProvider([{"match": "### Trajectory review", "response": "FAIL: 1 unjustified"}])
    v = judge_correctness(clean_trajectory(0), REG, llm)
    assert v.decision == FAIL and v.findings[0].code == "logic_unsound"


def test_duplicate_call_corrected():
    t = duplicate_fault(0)
    v = judge_efficiency(t, registry=REG)
    assert v.decision == CORRECTED
    assert len(v.replacement.steps) == len(t.steps) - 1
    assert judge_efficiency(v.replacement, registry=REG).decision == PASS
    assert judge_correctness(v.replacement, REG).decision == PASS


def test_minimal_trajectory_passes():
    assert judge_efficiency(clean_trajectory(0), [2] * 10).decision == PASS


def test_long_trajectory_fails_sub_optimality():
    t = clean_trajectory(0)
    calls = [Step(f"obs {i}", "t", Action("get_weather", {"city": f"C{i}", "date": "2025-06-10"}))
             for i in range(8)]
    t.steps = calls + [t.steps[-1]]
    cohort = [2] * 40 + [9]
    v = judge_efficiency(t, cohort)
    assert v.decision == FAIL and v.findings[-1].code == "sub_optimality"


def test_post_answer_steps_removed():
    t = clean_trajectory(0)
    answer = t.final
    first = Step(answer, "t", Action("get_weather", {"city": "Beijing", "date": "2025-06-10"}))
    extra = Step("more", "t", Action("get_weather", {"city": "Paris", "date": "2025-06-10"}))
    t.steps = [first, extra, t.steps[-1]]
    v = judge_efficiency(t, registry=REG)
    assert v.decision == CORRECTED
    assert [f.code for f in v.findings] == ["post_answer_step"]
    assert len(v.replacement.steps) == 2


def test_cohort_threshold():
    assert cohort_threshold([1, 2, 3], min_cohort=5) is None
    assert cohort_threshold([2] * 19 + [9]) == pytest.approx(2 + 0.05 * 7)


# --------------------------------------------------------------------------- curate


def test_seeded_fault_accounting():
    batch, schema, dup = curation_fixture()
    result = curate_report(batch, REG)
    assert len(result.records) == 90
    assert result.corrected == 10
    kept = {r.context["task_id"] for r in result.records}
    assert kept.isdisjoint(schema) and dup <= kept
    corrected = {v.task_id for v in result.verdicts if v.decision == CORRECTED}
    assert corrected == dup


def test_no_false_positives_on_clean():
    batch, schema, dup = curation_fixture()
    clean = [t for t in batch if t.task_id not in schema | dup]
    records = {r.context["task_id"]: r for r in curate(batch, REG)}
    for t in clean:
        assert records[t.task_id] == DistillRecord.from_trajectory(t, REG[t.server_id])


def test_idempotence():
    batch, _, _ = curation_fixture(seed=3)
    once = curate(batch, REG)
    twice = curate([r.to_trajectory() for r in once], REG)
    assert [r.to_dict() for r in twice] == [r.to_dict() for r in once]


def test_stage_order_matters_for_cohorts():
    # six wrong 9-step runs would inflate the cohort if efficiency ran first
    def long(i, bad):
        t = clean_trajectory(i)
        date = "tomorrow" if bad else "2025-06-10"
        t.steps = [Step(f"o{j}", "t", Action("get_weather", {"city": f"C{j}", "date": date}))
                   for j in range(8)] + [t.steps[-1]]
        return t

    batch = [clean_trajectory(i) for i in range(6)] + [long(10 + i, True) for i in range(6)]
    batch.append(long(99, False))
    ours = curate_report(batch, REG)
    assert "t099" not in {r.context["task_id"] for r in ours.records}

    swapped, _ = efficiency_stage(batch, REG, CurateConfig())
    swapped, _ = correctness_stage(swapped, REG)
    assert "t099" in {t.task_id for t in swapped}


def test_all_clean_batch_is_stable(tmp_path):
    batch = [clean_trajectory(i) for i in range(20)]
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    write_dataset(curate(batch, REG), a)
    write_dataset(curate(batch, REG), b)
    assert a.read_bytes() == b.read_bytes()
    assert len(read_dataset(a)) == 20


def test_empty_batch_has_header(tmp_path):
    p = tmp_path / "empty.jsonl"
    write_dataset(curate([], REG), p)
    header = json.loads(p.read_text().splitlines()[0])
    assert header["records"] == 0 and header["format"] == "tura-distill"
    assert read_dataset(p) == []


def test_record_contents():
    t = clean_trajectory(2)
    rec = DistillRecord.from_trajectory(t, REG["weather"])
    assert rec.context["server_digest"] and rec.context["tools"][0]["name"] == "get_weather"
    assert rec.target[0]["action"]["params"]["city"] == "Paris"
    lines = rec.training_text().splitlines()
    assert json.loads(lines[-1]) == {"final": t.final}


def test_trajectory_file_round_trip(tmp_path):
    batch, _, _ = curation_fixture()
    p = tmp_path / "expert.jsonl"
    write_trajectories(batch, p)
    back = read_trajectories(p)
    assert [t.to_dict() for t in back] == [t.to_dict() for t in batch]
    assert isinstance(back[0], Trajectory)
