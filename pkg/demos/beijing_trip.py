"""Walk the Beijing trip query through every stage, offline.

Shows the sub-queries, the retrieved servers, the DAG and its waves, then
runs the plan against the latency-injected mock fleet twice (one worker and
unbounded) so the makespan difference is visible.
"""

import asyncio

from tura.executor import ACTION_ONLY, ExecDeps, execute_plan, plan_query
from tura.offline import build_pipeline, fresh_replay, load_fixture
from tura.planner import predict_makespan, schedule
from tura.sim import LocalClient

fixture = load_fixture()
query = fixture.scenario["query"]
print("query:", query)

sqs, result, plan = plan_query(query, build_pipeline(fixture.fleet, fresh_replay(fixture)))
print("\nsub-queries:")
for sq in sqs.sub_queries:
    print("  -", sq)
print("\nretrieved:", ", ".join(f"{s} ({v:.2f})" for s, v in result.servers))
print("\nplan:")
for t in plan.tasks:
    print(f"  {t.task_id} -> {t.server_id}: {t.refined_query}")
print("  edges:", ", ".join(f"{a}->{b}" for a, b in plan.edges))
print("  waves:", schedule(plan).waves)

lat = {"T1": 0.23, "T2": 0.62, "T3": 0.50, "T4": 0.30}
m = predict_makespan(plan, lat)
print(f"\npredicted: sequential {m.sequential * 1000:.0f} ms, dag {m.parallel * 1000:.0f} ms")

for label, workers in (("sequential", 1), ("dag", None)):
    deps = ExecDeps(fresh_replay(fixture), LocalClient(fixture.fleet))
    rep = asyncio.run(execute_plan(plan, None, deps, ACTION_ONLY, workers=workers, query=query))
    print(f"measured {label}: {rep.wall_makespan * 1000:.0f} ms, success {rep.success_rate:.0%}")

print("\nanswer:\n" + rep.final_answer)
