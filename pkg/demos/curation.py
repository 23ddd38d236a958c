"""Two-stage curation on a hand-built batch.

Four trajectories against a weather server: one clean, one with a malformed
date, one that repeats its tool call, and one that keeps calling after the
answer was already in hand. Prints each verdict and the surviving records.
"""

from tura.distill import curate_report
from tura.executor import SUCCESS, Action, Step, Trajectory
from tura.registry import ParamSpec, Registry, ServerDescriptor, ToolSchema

tool = ToolSchema("get_weather", "Weather for a city on a date.", (
    ParamSpec("city", "string", True, "City"),
    ParamSpec("date", "string", True, "ISO date", pattern=r"\d{4}-\d{2}-\d{2}"),
))
registry = Registry([ServerDescriptor("weather", "Weather forecasts.", (tool,))])


def call(city, date, obs):
    return Step(obs, f"look up {city}", Action("get_weather", {"city": city, "date": date}))


def done(text):
    return Step("", "answer", None, text)


def traj(tid, steps):
    return Trajectory(tid, "weather in Paris on 2025-06-10", "weather", steps, SUCCESS,
                      steps[-1].final)


batch = [
    traj("clean", [call("Paris", "2025-06-10", "sun, 24C"), done("Sunny in Paris")]),
    traj("bad-date", [call("Paris", "tomorrow", "error"), done("Sunny in Paris")]),
    traj("repeat", [call("Paris", "2025-06-10", "sun, 24C"), call("Paris", "2025-06-10", "sun, 24C"),
                    done("Sunny in Paris")]),
    # the first observation already holds the answer; the Lyon call is wasted
    traj("overrun", [call("Paris", "2025-06-10", "Sunny in Paris"),
                     call("Lyon", "2025-06-10", "rain"), done("Sunny in Paris")]),
]

result = curate_report(batch, registry)
for v in result.verdicts:
    notes = "; ".join(f"step {f.step}: {f.code}" for f in v.findings) or "-"
    print(f"{v.stage:<12}{v.task_id:<10}{v.decision:<11}{notes}")
print(f"\nkept {len(result.records)} of {len(batch)}, corrected {result.corrected}")
for r in result.records:
    print(" ", r.context["task_id"], "target steps:", len(r.target))
