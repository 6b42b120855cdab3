"""Rebuilding a training set from a model you can only query.

A teacher classifier is hidden behind a query-only handle. Each strategy
proposes inputs, collects the teacher's class-probability responses, and pays
for what it ships. Confident (low-entropy) responses are the useful ones.
"""

from placelink.core import entropy_rows
from placelink.datagen import SessionSpec, build_world, generate_session
from placelink.models import TrainConfig, blackbox_from_model, train_supervised
from placelink.sampling import (
    SamplerConfig,
    SamplerContext,
    khot_encoded_bits,
    reconstruct_pseudo_set,
)

world = build_world(num_classes=10, feature_dim=100, concentration=40.0, seed=1)
session = generate_session(world, SessionSpec(0, tuple(range(10)), 0.0, 25))
teacher_model = train_supervised(session, 0, TrainConfig(learning_rate=2.0, epochs=150, seed=0))

context = SamplerContext(
    feature_dim=100,
    target_classes=tuple(range(10)),
    teacher_retained=session,
    student_retained=session,
)

print(f"{'strategy':>8s} {'samples':>8s} {'queries':>8s} {'bytes':>9s} {'mean response entropy':>22s}")
for strategy in ("us", "rr", "entropy", "replay", "prior", "mixup"):
    handle = blackbox_from_model(teacher_model)
    config = SamplerConfig(n_per_class=5, strategy=strategy, seed=3)
    pseudo = reconstruct_pseudo_set(handle, config, context)
    print(
        f"{strategy:>8s} {len(pseudo):>8d} {pseudo.cost.queries_issued:>8d} "
        f"{pseudo.cost.bytes_sent:>9d} {entropy_rows(pseudo.soft).mean():>22.3f}"
    )

# ---- shipping inputs as k-hot index lists ---------------------------------
print("\nwire size of one query input, D=100:")
print(f"  dense float64 vector: {8 * 100 * 8} bits")
print(f"  k-hot indices (k=10): {khot_encoded_bits(100, 10)} bits")

handle = blackbox_from_model(teacher_model)
sparse = reconstruct_pseudo_set(
    handle, SamplerConfig(n_per_class=5, strategy="rr", khot_k=10, seed=3), context
)
dense = reconstruct_pseudo_set(
    blackbox_from_model(teacher_model), SamplerConfig(n_per_class=5, strategy="rr", seed=3), context
)
print(f"  bytes sent, dense rr:  {dense.cost.bytes_sent}")
print(f"  bytes sent, k-hot rr:  {sparse.cost.bytes_sent}")
nonzero = int((sparse.X[0] != 0).sum())
print(f"  k-hot inputs carry exactly {nonzero} active dimensions per sample")
