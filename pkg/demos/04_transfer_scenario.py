"""One full knowledge-transfer scenario, stage by stage.

The student trains on its own session, then meets three teachers in turn.  At
every encounter it reconstructs the teacher's classes through queries and its
own previous classes from itself, and retrains on the union. Accuracy grows as
knowledge accumulates; the cost column is what actually crossed the channel.
"""

from placelink.datagen import SessionSpec, build_world, generate_session
from placelink.models import TrainConfig
from placelink.sampling import SamplerConfig
from placelink.transfer import (
    forgetting_report,
    make_scenario,
    run_scenario,
)

NUM_CLASSES, DIM, SESSIONS = 26, 24, 25

world = build_world(NUM_CLASSES, DIM, concentration=40.0, seed=7)
everything = tuple(range(NUM_CLASSES))
sessions = {
    sid: generate_session(world, SessionSpec(sid, everything, 0.08, 20))
    for sid in range(SESSIONS)
}
test = generate_session(world, SessionSpec(SESSIONS, everything, 0.08, 8))

scenario = make_scenario(j=0, num_sessions=SESSIONS, classes_per_model=10,
                         class_universe=NUM_CLASSES, seed=11)
print(f"scenario 0: model sessions {scenario.session_assignment}")
print(f"student knows {len(scenario.class_assignment[0])} classes; "
      f"universe has {NUM_CLASSES}\n")

for strategy in ("rr", "replay"):
    results = run_scenario(
        scenario,
        sessions,
        test,
        SamplerConfig(n_per_class=10, strategy=strategy, seed=5),
        TrainConfig(learning_rate=2.0, epochs=120, seed=3),
    )
    print(f"strategy {strategy!r}:")
    print(f"  {'stage':>5s} {'top1':>6s} {'macro':>6s} {'sent':>5s} {'bytes':>8s}")
    for r in results:
        print(
            f"  {r.stage:>5d} {r.top1_accuracy:>6.3f} {r.macro_accuracy:>6.3f} "
            f"{r.kt_cost_samples:>5d} {r.kt_cost_bytes:>8d}"
        )
    report = forgetting_report(results, scenario.class_assignment)
    print(f"  worst forgetting across stages: {report.max_forgetting:.3f}\n")
