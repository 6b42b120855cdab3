"""Config-driven experiment engines: data generation, scenario sweeps, and the
class-incremental comparison behind the CLI subcommands.

Every engine is deterministic given (config, seeds): result CSVs are written
in a canonical sorted order with fixed formatting, so reruns are byte-identical
regardless of worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ExperimentConfig, load_pattern
from .core import ConfigError, DataError, Dataset, PseudoSet, derive_seed, one_hot
from .datagen import (
    SessionSpec,
    build_world,
    generate_session,
    load_csv_dataset,
    save_csv_dataset,
)
from .fusion import (
    DsiConfig,
    SufficientStats,
    accumulate_batch,
    deserialize_stats,
    filter_by_entropy,
    predict_analytic_batch,
    ridge_oracle,
    serialize_stats,
    solve,
    stats_message_bytes,
)
from .models import TrainConfig, fit, predict_proba
from .partition import build_class_set
from .sampling import STRATEGIES, SamplerConfig
from .transfer import (
    ScenarioRun,
    forgetting_report,
    make_scenario,
    scenario_training_sets,
    train_teachers,
)

MANIFEST_FORMAT = "placelink-data-v1"
RESULTS_COLUMNS = (
    "scenario_id",
    "stage",
    "strategy",
    "N",
    "top1",
    "macro",
    "forgetting",
    "kt_samples",
    "kt_bytes",
    "seed",
)
DEMO_COLUMNS = (
    "seed",
    "session",
    "learner",
    "avg_accuracy",
    "macro_accuracy",
    "first_session_accuracy",
    "matches_batch",
)
OUT_ENV_VAR = "PLACELINK_OUT"


def resolve_out_dir(config: ExperimentConfig, cli_out=None) -> Path:
    """Output directory precedence: --out flag, then $PLACELINK_OUT, then the config."""
    if cli_out:
        return Path(cli_out)
    env = os.environ.get(OUT_ENV_VAR)
    if env:
        return Path(env)
    return Path(config.output.dir)


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolve_num_classes(config: ExperimentConfig) -> int:
    """Class universe size: from the partition pattern when one is configured."""
    if not config.partition.pattern:
        return config.world.num_classes
    pattern = load_pattern(config.partition.pattern)
    base = pattern.grids[0]
    rng = np.random.default_rng([config.partition.seed, 0x9017])
    points = np.column_stack(
        [
            rng.uniform(base.x_min, base.x_max, size=config.partition.points),
            rng.uniform(base.y_min, base.y_max, size=config.partition.points),
        ]
    )
    _, class_set, _ = build_class_set(points, pattern.grids, pattern.min_samples_per_class)
    return len(class_set)


def gen_data(config: ExperimentConfig, out_root: Path) -> Path:
    """Write one CSV per session plus a held-out test session and a hash manifest."""
    data_dir = Path(out_root) / "data"
    sessions_dir = data_dir / "sessions"
    sessions_dir.mkdir(parents=True, exist_ok=True)

    num_classes = _resolve_num_classes(config)
    world = build_world(
        num_classes, config.world.feature_dim, config.world.concentration, config.world.seed
    )
    all_classes = tuple(range(num_classes))

    files = {}
    for sid in range(config.sessions.count):
        spec = SessionSpec(
            session_id=sid,
            visited_classes=all_classes,
            drift_magnitude=config.sessions.drift,
            samples_per_class=config.sessions.samples_per_class,
            seed=config.sessions.seed,
        )
        dataset = generate_session(world, spec)
        rel = f"sessions/session_{sid:03d}.csv"
        save_csv_dataset(dataset, data_dir / rel)
        files[rel] = {"sha256": _sha256(data_dir / rel), "rows": len(dataset)}

    test_spec = SessionSpec(
        session_id=config.sessions.count,  # held out: one past the training sessions
        visited_classes=all_classes,
        drift_magnitude=config.sessions.drift,
        samples_per_class=config.sessions.test_samples_per_class,
        seed=config.sessions.seed,
    )
    test = generate_session(world, test_spec)
    save_csv_dataset(test, data_dir / "test.csv")
    files["test.csv"] = {"sha256": _sha256(data_dir / "test.csv"), "rows": len(test)}

    manifest = {
        "format": MANIFEST_FORMAT,
        "num_classes": num_classes,
        "feature_dim": config.world.feature_dim,
        "num_sessions": config.sessions.count,
        "files": {k: files[k] for k in sorted(files)},
    }
    manifest_path = data_dir / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def read_manifest(data_dir: Path) -> dict:
    path = Path(data_dir) / "manifest.json"
    if not path.exists():
        raise DataError(f"{path}: manifest not found; run gen-data first")
    with open(path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != MANIFEST_FORMAT:
        raise DataError(f"{path}: unknown manifest format {manifest.get('format')!r}")
    return manifest


def verify_manifest(data_dir: Path) -> dict:
    """Recompute every file hash; a tampered or missing file raises DataError."""
    data_dir = Path(data_dir)
    manifest = read_manifest(data_dir)
    for rel, entry in manifest["files"].items():
        path = data_dir / rel
        if not path.exists():
            raise DataError(f"{path}: listed in the manifest but missing")
        digest = _sha256(path)
        if digest != entry["sha256"]:
            raise DataError(f"{path}: hash mismatch (file changed since gen-data)")
    return manifest


def load_data(data_dir: Path):
    """(sessions dict, test set, manifest) after the preflight hash check."""
    data_dir = Path(data_dir)
    manifest = verify_manifest(data_dir)
    sessions = {}
    for sid in range(manifest["num_sessions"]):
        sessions[sid] = load_csv_dataset(data_dir / f"sessions/session_{sid:03d}.csv")
    test = load_csv_dataset(data_dir / "test.csv")
    return sessions, test, manifest


def _sampler_config(config: ExperimentConfig, strategy: str, n: int, seed: int) -> SamplerConfig:
    khot = config.strategy.khot_k or None
    return SamplerConfig(
        n_per_class=n,
        strategy=strategy,
        oversample_factor=config.strategy.oversample_factor,
        replay_count=min(config.strategy.replay_count, n),
        khot_k=khot,
        base_strategy=config.strategy.base_strategy,
        seed=seed,
    )


def _train_config(config: ExperimentConfig, seed: int) -> TrainConfig:
    t = config.train
    return TrainConfig(
        learning_rate=t.learning_rate,
        epochs=t.epochs,
        batch_size=t.batch_size,
        temperature=t.temperature,
        seed=seed,
    )


def _simulate_cell(args):
    """All sweep rows for one (scenario id, run seed) cell; used by the worker pool."""
    config, sessions, test, num_classes, j, run_seed = args
    scenario = make_scenario(
        j,
        config.sessions.count,
        config.scenarios.classes_per_model,
        num_classes,
        seed=derive_seed(config.scenarios.seed, run_seed),
        num_models=config.scenarios.num_models,
    )
    train_sets = scenario_training_sets(scenario, sessions)
    train_cfg = _train_config(config, seed=derive_seed(config.train.seed, j, run_seed))
    teachers = train_teachers(scenario, train_sets, train_cfg, config.train.hidden_dim)
    rows = []
    for strategy in config.sweep.strategies:
        strat_id = STRATEGIES.index(strategy)
        for n in config.sweep.n_values:
            sampler = _sampler_config(
                config, strategy, n, seed=derive_seed(run_seed, j, strat_id, n)
            )
            run = ScenarioRun(
                scenario,
                train_sets,
                test,
                sampler,
                train_cfg,
                hidden_dim=config.train.hidden_dim,
                teachers=teachers,
            )
            results = run.run_all()
            report = forgetting_report(results, scenario.class_assignment)
            for res in results:
                forget = 0.0 if res.stage == 0 else report.forgetting[res.stage - 1]
                rows.append(
                    (
                        j,
                        res.stage,
                        strategy,
                        n,
                        res.top1_accuracy,
                        res.macro_accuracy,
                        forget,
                        res.kt_cost_samples,
                        res.kt_cost_bytes,
                        run_seed,
                    )
                )
    return rows


def simulate(config: ExperimentConfig, out_root: Path, seeds=None, jobs: int = 1) -> Path:
    """Run the full sweep and write results.csv plus the per-strategy summary.

    Cells are independent, so they may run in parallel; rows are sorted into a
    canonical order before writing, which makes the output independent of the
    worker count and byte-identical across reruns.
    """
    out_root = Path(out_root)
    sessions, test, manifest = load_data(out_root / "data")
    num_classes = manifest["num_classes"]
    if config.scenarios.classes_per_model > num_classes:
        raise ConfigError("scenarios.classes_per_model exceeds the generated class count")
    run_seeds = tuple(seeds) if seeds is not None else config.sweep.seeds

    cells = [
        (config, sessions, test, num_classes, j, run_seed)
        for j in config.scenarios.ids
        for run_seed in run_seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_simulate_cell, cells))
    else:
        chunks = [_simulate_cell(cell) for cell in cells]

    rows = sorted(
        (row for chunk in chunks for row in chunk),
        key=lambda r: (r[0], r[1], r[2], r[3], r[9]),
    )
    results_path = out_root / "results.csv"
    with open(results_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])

    final_stage = config.scenarios.num_models - 1
    summary = {}
    for row in rows:
        if row[1] == final_stage:
            summary.setdefault((row[2], row[3]), []).append((row[4], row[5]))
    summary_path = out_root / "summary.csv"
    with open(summary_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("strategy", "N", "mean_top1", "mean_macro", "runs"))
        for (strategy, n), vals in sorted(summary.items()):
            top1 = float(np.mean([v[0] for v in vals]))
            macro = float(np.mean([v[1] for v in vals]))
            writer.writerow([strategy, n, _fmt(top1), _fmt(macro), len(vals)])
    return results_path


def _accuracy_gradient(model, test: Dataset) -> float:
    return float((np.argmax(predict_proba(model, test.X), axis=1) == test.y).mean())


def _accuracy_analytic(classifier, test: Dataset) -> float:
    return float((predict_analytic_batch(classifier, test.X) == test.y).mean())


def dsi_demo(config: ExperimentConfig, out_root: Path, seeds=None) -> list:
    """Class-incremental comparison: fine-tuning vs replay buffer vs analytic fusion.

    Sessions introduce disjoint class batches under appearance drift. The
    analytic learner accumulates entropy-gated statistics and re-solves each
    session; its predictions are checked against a from-scratch batch solve.
    Returns the result rows and writes them to dsi_demo.csv.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    demo = config.demo
    run_seeds = tuple(seeds) if seeds is not None else demo.seeds
    num_classes = config.world.num_classes
    dsi_cfg = DsiConfig(
        lam=config.fusion.lam, tau=None if config.fusion.tau < 0 else config.fusion.tau
    )
    tau = dsi_cfg.resolve_tau(num_classes)

    rows = []
    for run_seed in run_seeds:
        world = build_world(
            num_classes,
            config.world.feature_dim,
            config.world.concentration,
            derive_seed(config.world.seed, run_seed),
        )
        batches = [
            tuple(int(c) for c in chunk)
            for chunk in np.array_split(np.arange(num_classes), demo.sessions)
        ]

        ft_model = None
        replay_model = None
        buffer = []
        stats = SufficientStats.zeros(config.world.feature_dim, num_classes)
        seen_X, seen_Y = [], []
        tests = []

        for t, batch in enumerate(batches):
            train_t = generate_session(
                world,
                SessionSpec(t, batch, demo.drift, demo.samples_per_class, derive_seed(run_seed, t, 1)),
            )
            tests.append(
                generate_session(
                    world,
                    SessionSpec(
                        t, batch, demo.drift, demo.test_samples_per_class, derive_seed(run_seed, t, 2)
                    ),
                )
            )
            targets = one_hot(train_t.y, num_classes)

            ft_cfg = _train_config(config, derive_seed(run_seed, t, 3))
            ft_model, _ = fit(train_t.X, targets, config.train.hidden_dim, ft_cfg, init=ft_model)

            replay_train = Dataset.concat([train_t] + buffer) if buffer else train_t
            rp_cfg = _train_config(config, derive_seed(run_seed, t, 4))
            replay_model, _ = fit(
                replay_train.X,
                one_hot(replay_train.y, num_classes),
                config.train.hidden_dim,
                rp_cfg,
                init=replay_model,
            )
            buffer.append(train_t.take_per_class(demo.buffer_per_class))

            admitted = filter_by_entropy(PseudoSet(X=train_t.X, soft=targets), tau)
            accumulate_batch(stats, admitted.X, admitted.soft)
            analytic = solve(stats, dsi_cfg.lam)
            seen_X.append(admitted.X)
            seen_Y.append(admitted.soft)

            batch_W = ridge_oracle(np.concatenate(seen_X), np.concatenate(seen_Y), dsi_cfg.lam)
            cumulative = Dataset.concat(tests)
            matches = bool(
                np.array_equal(
                    predict_analytic_batch(analytic, cumulative.X),
                    np.argmax(cumulative.X @ batch_W, axis=1),
                )
            )

            for learner, acc_fn, model in (
                ("ft", _accuracy_gradient, ft_model),
                ("replay_buffer", _accuracy_gradient, replay_model),
                ("analytic", _accuracy_analytic, analytic),
            ):
                per_session = [acc_fn(model, tests[u]) for u in range(t + 1)]
                predicted = (
                    np.argmax(predict_proba(model, cumulative.X), axis=1)
                    if learner != "analytic"
                    else predict_analytic_batch(model, cumulative.X)
                )
                correct = predicted == cumulative.y
                macro = float(
                    np.mean(
                        [correct[idx].mean() for idx in cumulative.per_class_index.values()]
                    )
                )
                rows.append(
                    {
                        "seed": run_seed,
                        "session": t,
                        "learner": learner,
                        "avg_accuracy": float(np.mean(per_session)),
                        "macro_accuracy": macro,
                        "first_session_accuracy": per_session[0],
                        "matches_batch": int(matches) if learner == "analytic" else "",
                    }
                )

        with open(out_root / f"stats_seed{run_seed}.bin", "wb") as fh:
            fh.write(serialize_stats(stats))

    rows.sort(key=lambda r: (r["seed"], r["session"], r["learner"]))
    with open(out_root / "dsi_demo.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(DEMO_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row[col]) for col in DEMO_COLUMNS])
    return rows


def inspect_stats(path) -> str:
    """Human-readable summary of a serialized statistics message."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, "rb") as fh:
        raw = fh.read()
    stats = deserialize_stats(raw)
    rng = np.random.default_rng(0)
    quotients = []
    for _ in range(16):
        z = rng.normal(size=stats.d)
        quotients.append(float(z @ stats.S @ z) / float(z @ z))
    lines = [
        f"stats message: {path}",
        f"d={stats.d} c={stats.c} n={stats.n}",
        f"bytes={len(raw)} (expected {stats_message_bytes(stats.d, stats.c)})",
        f"symmetry residual: {stats.symmetry_residual():.3e}",
        f"eigen probes (16 random directions): min={min(quotients):.6g} max={max(quotients):.6g}",
    ]
    return "\n".join(lines)
