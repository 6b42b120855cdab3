"""Stage-wise knowledge transfer between a student and a sequence of black-box teachers.

A scenario fixes who trains on which session and which place classes. Stage 0
is the student's own supervised phase; at each later stage the student meets
one teacher, reconstructs pseudo-samples for the teacher's classes through
queries, reconstructs its previously known classes from itself, and retrains
from scratch by distillation on the union. Only teacher-side traffic counts
toward the transfer cost.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .core import ConfigError, Dataset, PlaceClassSet, derive_seed
from .models import (
    ClassifierParams,
    TrainConfig,
    blackbox_from_model,
    distill,
    predict_proba,
    train_supervised,
)
from .sampling import (
    SamplerConfig,
    SamplerContext,
    reconstruct_pseudo_set,
    reconstruct_self_set,
)

# Strategies that are allowed to keep their training data after training.
RETAINING_STRATEGIES = ("replay", "prior", "mixup")

# Session stride between consecutive model ids in a scenario.
MODEL_SESSION_STRIDE = 6


@dataclass(frozen=True)
class Scenario:
    """Model 0 is the student; models 1..num_models-1 are the teachers it meets in order."""

    scenario_id: int
    num_models: int
    session_assignment: tuple
    classes_per_model: int
    class_assignment: tuple
    seed: int


def make_scenario(
    j: int,
    num_sessions: int,
    classes_per_model: int,
    class_universe,
    seed: int,
    num_models: int = 4,
) -> Scenario:
    """Assign sessions by the fixed stride formula and draw each model's class set.

    Model i gets session (MODEL_SESSION_STRIDE * i + j) mod num_sessions and a
    uniform without-replacement draw of classes_per_model classes.
    """
    universe = (
        tuple(range(class_universe)) if isinstance(class_universe, int) else tuple(class_universe)
    )
    if classes_per_model > len(universe):
        raise ConfigError(
            f"classes_per_model {classes_per_model} exceeds universe size {len(universe)}"
        )
    if num_sessions < 1 or num_models < 1:
        raise ConfigError("need num_sessions >= 1 and num_models >= 1")
    sessions = tuple((MODEL_SESSION_STRIDE * i + j) % num_sessions for i in range(num_models))
    assignment = []
    for i in range(num_models):
        rng = np.random.default_rng([int(seed), int(j), i, 0xC1A5])
        picks = rng.choice(len(universe), size=classes_per_model, replace=False)
        assignment.append(tuple(sorted(universe[p] for p in picks)))
    return Scenario(
        scenario_id=int(j),
        num_models=num_models,
        session_assignment=sessions,
        classes_per_model=classes_per_model,
        class_assignment=tuple(assignment),
        seed=int(seed),
    )


@dataclass(frozen=True)
class StageResult:
    stage: int
    top1_accuracy: float
    macro_accuracy: float
    per_class_accuracy: dict
    per_class_count: dict
    kt_cost_samples: int
    kt_cost_bytes: int


def evaluate(model: ClassifierParams, test: Dataset):
    """(top-1 accuracy, macro accuracy, per-class accuracy map) on a test set."""
    if len(test) == 0:
        raise ConfigError("cannot evaluate on an empty test set")
    predicted = np.argmax(predict_proba(model, test.X), axis=1)
    correct = predicted == test.y
    per_class = {
        c: float(correct[idx].mean()) for c, idx in sorted(test.per_class_index.items())
    }
    top1_accuracy = float(correct.mean())
    macro_accuracy = float(np.mean(list(per_class.values())))
    return top1_accuracy, macro_accuracy, per_class


def scenario_training_sets(scenario: Scenario, sessions) -> list:
    """Each model's training set: its session's data restricted to its classes."""
    out = []
    for i in range(scenario.num_models):
        session = sessions[scenario.session_assignment[i]]
        out.append(session.restrict(scenario.class_assignment[i]))
    return out


def train_teachers(
    scenario: Scenario, model_train_sets, train_config: TrainConfig, hidden_dim: int
) -> dict:
    """Supervised teachers i=1..num_models-1, each seeded by (config seed, scenario, model)."""
    teachers = {}
    for i in range(1, scenario.num_models):
        cfg = replace(train_config, seed=derive_seed(train_config.seed, scenario.scenario_id, i))
        teachers[i] = train_supervised(model_train_sets[i], hidden_dim, cfg)
    return teachers


class ScenarioRun:
    """Drives one scenario; stages are strictly sequential because each consumes the last model.

    ``self_reconstruct=False`` drops the student's self-reconstruction, which
    is the fine-tuning-style ablation that forgets. ``warm_start`` continues
    distillation from the current student weights instead of a fresh
    initialization. ``requery_past_teachers`` reconstructs earlier teachers'
    classes from those teachers again (as if they stayed reachable) rather
    than from the student itself.
    """

    def __init__(
        self,
        scenario: Scenario,
        model_train_sets,
        test: Dataset,
        sampler_config: SamplerConfig,
        train_config: TrainConfig,
        hidden_dim: int = 0,
        self_reconstruct: bool = True,
        warm_start: bool = False,
        requery_past_teachers: bool = False,
        teachers: dict | None = None,
    ):
        if len(model_train_sets) != scenario.num_models:
            raise ConfigError("need one training set per model in the scenario")
        self.scenario = scenario
        self.test = test
        self.sampler_config = sampler_config
        self.train_config = train_config
        self.hidden_dim = hidden_dim
        self.self_reconstruct = self_reconstruct
        self.warm_start = warm_start
        self.requery_past_teachers = requery_past_teachers
        self.retaining = sampler_config.strategy in RETAINING_STRATEGIES

        self.class_set: PlaceClassSet = model_train_sets[0].class_set
        self.feature_dim = model_train_sets[0].feature_dim
        self._student_train_set = model_train_sets[0]

        # Teacher training does not depend on the strategy or the sample
        # budget, so callers sweeping those may pass pre-trained teachers.
        self.teachers = dict(teachers) if teachers is not None else train_teachers(
            scenario, model_train_sets, train_config, hidden_dim
        )
        self._teacher_retained = {}
        for i in range(1, scenario.num_models):
            # Training sets are discarded after supervised training unless the
            # strategy is one that explicitly retains them.
            self._teacher_retained[i] = model_train_sets[i] if self.retaining else None

        self.student: ClassifierParams | None = None
        self.known_classes: set = set()
        self._student_corpus: Dataset | None = None
        self.results: list = []

    def run_stage(self, stage: int) -> StageResult:
        if stage != len(self.results):
            raise ConfigError(f"stages are sequential; expected stage {len(self.results)}")
        if stage == 0:
            return self._run_supervised_stage()
        if stage >= self.scenario.num_models:
            raise ConfigError(f"scenario has no teacher for stage {stage}")
        return self._run_transfer_stage(stage)

    def run_all(self) -> list:
        for stage in range(self.scenario.num_models):
            self.run_stage(stage)
        return self.results

    def _record(self, stage: int, kt_samples: int, kt_bytes: int) -> StageResult:
        top1_acc, macro_acc, per_class = evaluate(self.student, self.test)
        result = StageResult(
            stage=stage,
            top1_accuracy=top1_acc,
            macro_accuracy=macro_acc,
            per_class_accuracy=per_class,
            per_class_count={c: len(i) for c, i in self.test.per_class_index.items()},
            kt_cost_samples=kt_samples,
            kt_cost_bytes=kt_bytes,
        )
        self.results.append(result)
        return result

    def _run_supervised_stage(self) -> StageResult:
        if len(self._student_train_set) == 0:
            raise ConfigError("student has no session data for the supervised stage")
        sid = self.scenario.scenario_id
        cfg = replace(self.train_config, seed=derive_seed(self.train_config.seed, sid, 0))
        self.student = train_supervised(self._student_train_set, self.hidden_dim, cfg)
        self.known_classes = set(self.scenario.class_assignment[0])
        self._student_corpus = self._student_train_set if self.retaining else None
        return self._record(0, 0, 0)

    def _run_transfer_stage(self, stage: int) -> StageResult:
        sid = self.scenario.scenario_id
        teacher_classes = self.scenario.class_assignment[stage]
        teacher_handle = blackbox_from_model(self.teachers[stage])

        teacher_part = reconstruct_pseudo_set(
            teacher_handle,
            replace(self.sampler_config, seed=derive_seed(self.sampler_config.seed, sid, stage, 0)),
            SamplerContext(
                feature_dim=self.feature_dim,
                target_classes=teacher_classes,
                teacher_retained=self._teacher_retained[stage],
                student_retained=self._student_corpus,
            ),
        )

        parts = [teacher_part]
        kt_samples = teacher_part.cost.pseudo_samples_sent
        kt_bytes = teacher_part.cost.bytes_sent
        remaining = self.known_classes - set(teacher_classes)

        if self.requery_past_teachers:
            # most recent teacher first; every re-query is teacher traffic
            for past in range(stage - 1, 0, -1):
                classes = tuple(sorted(set(self.scenario.class_assignment[past]) & remaining))
                if not classes:
                    continue
                part = reconstruct_pseudo_set(
                    blackbox_from_model(self.teachers[past]),
                    replace(
                        self.sampler_config,
                        seed=derive_seed(self.sampler_config.seed, sid, stage, 2, past),
                    ),
                    SamplerContext(
                        feature_dim=self.feature_dim,
                        target_classes=classes,
                        teacher_retained=self._teacher_retained[past],
                        student_retained=self._student_corpus,
                    ),
                )
                parts.append(part)
                kt_samples += part.cost.pseudo_samples_sent
                kt_bytes += part.cost.bytes_sent
                remaining -= set(classes)

        self_classes = tuple(sorted(remaining))
        if self.self_reconstruct and self_classes:
            parts.append(self._reconstruct_from_self(self_classes, stage))

        cfg = replace(self.train_config, seed=derive_seed(self.train_config.seed, sid, stage))
        init = self.student if self.warm_start else None
        self.student = distill(parts, self.hidden_dim, cfg, init=init)
        self.known_classes |= set(teacher_classes)

        if self.retaining:
            union_X = np.concatenate([p.X for p in parts], axis=0)
            union_soft = np.concatenate([p.soft for p in parts], axis=0)
            self._student_corpus = Dataset(
                X=union_X, y=np.argmax(union_soft, axis=1), class_set=self.class_set
            )
        return self._record(stage, kt_samples, kt_bytes)

    def _reconstruct_from_self(self, self_classes, stage: int):
        """Pseudo-samples for the classes only the student knows, queried from itself."""
        config = replace(
            self.sampler_config,
            seed=derive_seed(self.sampler_config.seed, self.scenario.scenario_id, stage, 1),
        )
        return reconstruct_self_set(
            blackbox_from_model(self.student),
            config,
            self.feature_dim,
            self_classes,
            self._student_corpus,
        )


def run_scenario(
    scenario: Scenario,
    sessions,
    test: Dataset,
    sampler_config: SamplerConfig,
    train_config: TrainConfig,
    hidden_dim: int = 0,
    self_reconstruct: bool = True,
) -> list:
    """Train all models, run every stage, and return the per-stage results."""
    run = ScenarioRun(
        scenario,
        scenario_training_sets(scenario, sessions),
        test,
        sampler_config,
        train_config,
        hidden_dim=hidden_dim,
        self_reconstruct=self_reconstruct,
    )
    return run.run_all()


@dataclass(frozen=True)
class ForgettingReport:
    """Accuracy on the classes acquired before each stage, and the worst drop against it."""

    prior_class_accuracy: tuple
    forgetting: tuple

    @property
    def max_forgetting(self) -> float:
        return max(self.forgetting) if self.forgetting else 0.0


def restricted_accuracy(result: StageResult, classes) -> float:
    """Sample-weighted accuracy over the given classes, from the per-class breakdown."""
    total = 0
    hits = 0.0
    for c in classes:
        count = result.per_class_count.get(c, 0)
        if count > 0 and c in result.per_class_accuracy:
            total += count
            hits += result.per_class_accuracy[c] * count
    if total == 0:
        raise ConfigError("no test samples cover the requested classes")
    return hits / total


def forgetting_report(stage_results, class_assignment) -> ForgettingReport:
    """For each stage s >= 1, compare its accuracy on the classes acquired at
    stages < s against every earlier stage's accuracy on that same restriction."""
    if len(stage_results) < 2:
        raise ConfigError("forgetting needs at least two stages")
    prior_acc = []
    forgetting = []
    for s in range(1, len(stage_results)):
        acquired = set()
        for earlier in class_assignment[:s]:
            acquired |= set(earlier)
        current = restricted_accuracy(stage_results[s], acquired)
        earlier_best = max(restricted_accuracy(stage_results[t], acquired) for t in range(s))
        prior_acc.append(current)
        forgetting.append(earlier_best - current)
    return ForgettingReport(prior_class_accuracy=tuple(prior_acc), forgetting=tuple(forgetting))
