# BSD 3-Clause License
#
# Copyright (c) 2025-Present, templar developers
# All rights reserved.
#
# Redistribution and use in source and binary forms, with or without
# modification, are permitted provided that the following conditions are met:
#
# * Redistributions of source code must retain the above copyright notice, this
#   list of conditions and the following disclaimer.
#
# * Redistributions in binary form must reproduce the above copyright notice,
#   this list of conditions and the following disclaimer in the documentation
#   and/or other materials provided with the distribution.
#
# * Neither the name of the copyright holder nor the names of its
#   contributors may be used to endorse or promote products derived from
#   this software without specific prior written permission.
#
# THIS SOFTWARE IS PROVIDED BY THE COPYRIGHT HOLDERS AND CONTRIBUTORS "AS IS"
# AND ANY EXPRESS OR IMPLIED WARRANTIES, INCLUDING, BUT NOT LIMITED TO, THE
# IMPLIED WARRANTIES OF MERCHANTABILITY AND FITNESS FOR A PARTICULAR PURPOSE ARE
# DISCLAIMED. IN NO EVENT SHALL THE COPYRIGHT HOLDER OR CONTRIBUTORS BE LIABLE
# FOR ANY DIRECT, INDIRECT, INCIDENTAL, SPECIAL, EXEMPLARY, OR CONSEQUENTIAL
# DAMAGES (INCLUDING, BUT NOT LIMITED TO, PROCUREMENT OF SUBSTITUTE GOODS OR
# SERVICES; LOSS OF USE, DATA, OR PROFITS; OR BUSINESS INTERRUPTION) HOWEVER
# CAUSED AND ON ANY THEORY OF LIABILITY, WHETHER IN CONTRACT, STRICT LIABILITY,
# OR TORT (INCLUDING NEGLIGENCE OR OTHERWISE) ARISING IN ANY WAY OUT OF THE USE
# OF THIS SOFTWARE, EVEN IF ADVISED OF THE POSSIBILITY OF SUCH DAMAGE.
"""White-box and gray-box attack scenarios.

An `Experiment` is the built testbed, the gallery, the attacker's source pool,
the reference model and the frozen verifier. Attacks are keyed by
`(technique, identity, fold)` and memoised on the experiment, so both
scenarios score the very same adversarial examples.

* `S1`, white-box. Every gallery sample is enrolled under its own key and is
  the target of one attack, success is measured against that enrollment.
* `S2`, gray-box. The target sample (the fold) is held out, the adversarial
  example is verified against each of the identity's other enrolled samples.

Every attack draws its seed from `derive_seed`, never from scheduling order,
so the worker count does not change a single number.
"""

from __future__ import annotations

__all__ = (
    "AttackKey",
    "AttackRecord",
    "ExampleOutcome",
    "ScenarioResult",
    "TraceRecord",
    "BenchResult",
    "Experiment",
    "derive_seed",
    "run_s1",
    "run_s2",
    "run_scenario",
    "run_bench",
    "run_models",
    "SweepRow",
    "SweepResult",
    "run_epsilon_sweep",
)

import concurrent.futures
import dataclasses
import hashlib
import logging
import multiprocessing
import statistics
import time
import typing

from sain import Some
from sain.option import nothing_unchecked

from templar import authsys
from templar import data
from templar import embedding
from templar import error
from templar import metrics
from templar.attacks import AttackResult
from templar.attacks import Objective
from templar.attacks import Technique
from templar.attacks import run_technique
from templar.harness.config import Scenario

if typing.TYPE_CHECKING:
    import collections.abc as collections

    from sain import Option

    from templar.attacks import AttackConfig
    from templar.harness.config import EmbedderConfig
    from templar.harness.config import ExperimentConfig

_LOGGER = logging.getLogger(__name__)
_BUDGET_SLACK: typing.Final = 1e-9


def derive_seed(global_seed: int, identity_id: str, fold: int, technique: str) -> int:
    """The seed of one attack.

    The first 8 bytes, big-endian, of the SHA-256 digest of
    `"{global_seed}|{identity_id}|{fold}|{technique}"`.

    Example
    -------
    ```py
    seed = derive_seed(2022, "id0003", 1, "SGADV")
    assert seed == derive_seed(2022, "id0003", 1, "SGADV")
    ```
    """
    digest = hashlib.sha256(f"{global_seed}|{identity_id}|{fold}|{technique}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class AttackKey(typing.NamedTuple):
    technique: Technique
    identity_id: str
    fold: int

    def label(self) -> str:
        return f"{self.technique.value}:{self.identity_id}/{self.fold}"


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class AttackRecord:
    """One finished attack with its source, seed and wall-clock time."""

    key: AttackKey
    source_key: str
    seed: int
    result: AttackResult
    seconds: float
    violations: tuple[error.InvariantViolation, ...] = ()


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class ExampleOutcome:
    """One adversarial example scored under one scenario."""

    scenario: Scenario
    technique: Technique
    identity_id: str
    fold: int
    source_key: str
    seed: int
    steps: int
    stop_reason: str
    target_dissimilarity: float
    enrolled_keys: tuple[str, ...]
    scores: tuple[float, ...]
    success: float
    ssim: float
    linf: float
    seconds: float

    def to_metrics(self) -> metrics.ExampleMetrics:
        return metrics.ExampleMetrics(
            scenario=self.scenario.value,
            technique=self.technique.value,
            identity_id=self.identity_id,
            fold=self.fold,
            success=self.success,
            dissimilarity=self.target_dissimilarity,
            ssim=self.ssim,
            linf=self.linf,
        )


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class ScenarioResult:
    """Every scored example of one scenario.

    Parameters
    ----------
    scenario : `Scenario`
        Which scenario ran.
    tau : `float`
        The verifier threshold.
    eer : `float`
        The benign equal error rate the threshold was calibrated at.
    outcomes : `tuple[ExampleOutcome, ...]`
        Sorted by technique, identity and fold.
    violations : `tuple[InvariantViolation, ...]`
        Failed run-time checks, empty on a healthy run.
    """

    scenario: Scenario
    tau: float
    eer: float
    outcomes: tuple[ExampleOutcome, ...]
    violations: tuple[error.InvariantViolation, ...] = ()

    @property
    def techniques(self) -> tuple[Technique, ...]:
        return tuple(dict.fromkeys(o.technique for o in self.outcomes))

    def of(self, technique: Technique) -> tuple[ExampleOutcome, ...]:
        return tuple(o for o in self.outcomes if o.technique is technique)

    def report(self, technique: Technique) -> metrics.MetricReport:
        return metrics.MetricReport.from_rows(
            technique.value, (o.to_metrics() for o in self.of(technique))
        )

    def reports(self) -> dict[Technique, metrics.MetricReport]:
        return {technique: self.report(technique) for technique in self.techniques}

    def asr(self, technique: Technique) -> float:
        """The mean of the per-example accepted fractions."""
        return statistics.fmean(o.success for o in self.of(technique))

    def fold_breakdown(self, technique: Technique) -> dict[int, float]:
        """Success rate per held-out fold."""
        folds: dict[int, list[float]] = {}
        for outcome in self.of(technique):
            folds.setdefault(outcome.fold, []).append(outcome.success)
        return {fold: statistics.fmean(values) for fold, values in sorted(folds.items())}

    def seconds_per_example(self, technique: Technique) -> float:
        return statistics.fmean(o.seconds for o in self.of(technique))

    def scores(self, technique: Technique) -> tuple[float, ...]:
        """Every adversarial score against an enrolled template."""
        return tuple(score for o in self.of(technique) for score in o.scores)


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class TraceRecord:
    """The per-step traces of one attack, kept for plotting."""

    technique: Technique
    identity_id: str
    fold: int
    loss_trace: tuple[float, ...]
    dissimilarity_trace: tuple[float, ...]
    movement: tuple[float, ...]

    @property
    def name(self) -> str:
        return f"{self.technique.value}_{self.identity_id}_{self.fold}"


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class BenchResult:
    """Everything `report` renders for one verifier."""

    tau: float
    eer: float
    benign: authsys.ScoreSets
    scenarios: tuple[ScenarioResult, ...]
    traces: tuple[TraceRecord, ...] = ()
    model: str = "reference"

    def scenario(self, scenario: Scenario) -> Option[ScenarioResult]:
        for result in self.scenarios:
            if result.scenario is scenario:
                return Some(result)
        return nothing_unchecked()

    @property
    def techniques(self) -> tuple[Technique, ...]:
        return tuple(dict.fromkeys(t for s in self.scenarios for t in s.techniques))

    @property
    def violations(self) -> tuple[error.InvariantViolation, ...]:
        unique = {v.message: v for s in self.scenarios for v in s.violations}
        return tuple(unique.values())


class _Job(typing.NamedTuple):
    key: AttackKey
    source: data.Image
    target: data.Image
    config: AttackConfig


_WORKER_MODEL: embedding.EmbeddingModel | None = None


def _init_worker(model: embedding.EmbeddingModel) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = model


def _execute(
    model: embedding.EmbeddingModel, job: _Job
) -> tuple[AttackKey, AttackResult, float]:
    started = time.perf_counter()
    result = run_technique(job.key.technique, model, job.source, job.target, job.config)
    return job.key, result, time.perf_counter() - started


def _execute_in_worker(job: _Job) -> tuple[AttackKey, AttackResult, float]:
    if _WORKER_MODEL is None:
        raise RuntimeError("worker was started without a model")
    return _execute(_WORKER_MODEL, job)


def _dispatch(
    model: embedding.EmbeddingModel, jobs: collections.Sequence[_Job], workers: int
) -> list[tuple[AttackKey, AttackResult, float]]:
    if workers <= 1 or len(jobs) <= 1:
        return [_execute(model, job) for job in jobs]

    context = multiprocessing.get_context("spawn")
    with concurrent.futures.ProcessPoolExecutor(
        max_workers=workers,
        mp_context=context,
        initializer=_init_worker,
        initargs=(model,),
    ) as pool:
        chunksize = max(1, len(jobs) // (workers * 4))
        return list(pool.map(_execute_in_worker, jobs, chunksize=chunksize))


def _record_violations(
    key: AttackKey, source: data.Image, result: AttackResult, config: AttackConfig
) -> tuple[error.InvariantViolation, ...]:
    found: list[error.InvariantViolation] = []
    distance = metrics.linf_distance(result.adversarial, source)
    if distance > config.epsilon + _BUDGET_SLACK:
        found.append(
            error.InvariantViolation("budget", key.label(), f"linf {distance} > {config.epsilon}")
        )

    pixels = result.adversarial.pixels
    if pixels.min() < 0.0 or pixels.max() > 1.0:
        found.append(error.InvariantViolation("pixel-box", key.label(), "pixels left [0, 1]"))

    tau = config.cbce_tau
    if key.technique.objective is Objective.CBCE and tau is not None:
        # Once inside the acceptance region a clamped cross-entropy attack never moves.
        for step, dissim in enumerate(result.dissimilarity_trace[:-1]):
            if dissim <= tau:
                moved = max(result.movement[step:], default=0.0)
                if moved != 0.0:
                    found.append(
                        error.InvariantViolation(
                            "absorbing",
                            key.label(),
                            f"moved {moved} after reaching tau at step {step}",
                        )
                    )
                break
    return tuple(found)


@typing.final
class Experiment:
    """The built testbed of one configuration.

    Build it with `Experiment.build`, the constructor takes prebuilt parts.

    Example
    -------
    ```py
    experiment = Experiment.build(ExperimentConfig.default())
    s1 = run_s1(experiment)
    print(s1.asr(Technique.SGADV))
    ```
    """

    __slots__ = (
        "config",
        "name",
        "dataset",
        "sources",
        "model",
        "system",
        "scores",
        "_pairs",
        "_records",
    )

    def __init__(
        self,
        config: ExperimentConfig,
        dataset: data.IdentityDataset,
        sources: data.IdentityDataset,
        model: embedding.EmbeddingModel,
        system: authsys.AuthSystem,
        scores: authsys.ScoreSets,
        *,
        name: str = "reference",
    ) -> None:
        if not system.is_frozen():
            raise ValueError("the verifier must be calibrated and frozen")
        self.config = config
        self.name = name
        self.dataset = dataset
        self.sources = sources
        self.model = model
        self.system = system
        self.scores = scores
        self._pairs = self._pair_sources()
        self._records: dict[AttackKey, AttackRecord] = {}

    @classmethod
    def build(cls, config: ExperimentConfig, embedder: EmbedderConfig | None = None) -> Experiment:
        """Generate the gallery, build the model, enroll every sample and calibrate.

        `embedder` picks one of the configured verifiers, the first by default.
        """
        verifier = embedder if embedder is not None else config.embedder
        gallery = config.dataset
        dataset = data.generate_dataset(
            gallery.n_identities,
            gallery.samples_per_identity,
            gallery.dims,
            gallery.intra_noise_sigma,
            gallery.seed,
        )
        sources = dataset
        if gallery.source_identities > 0:
            sources = data.generate_source_pool(
                gallery.source_identities,
                gallery.samples_per_identity,
                gallery.dims,
                gallery.intra_noise_sigma,
                derive_seed(gallery.seed, "sources", 0, "pool"),
            )
        _LOGGER.info(
            "generated %d identities x %d samples at %s",
            len(dataset),
            gallery.samples_per_identity,
            gallery.dims,
        )

        model = embedding.make_reference_embedder(gallery.dims, verifier.feature_dim, verifier.seed)
        scores = authsys.sample_scores(
            dataset, model, derive_seed(config.seed, "calibration", 0, "scores")
        )
        system = authsys.AuthSystem(model)
        for identity_id, index, image in dataset.iter_samples():
            system.enroll(dataset.sample_key(identity_id, index), image)
        system.calibrate(scores)
        _LOGGER.info("%s: tau=%.6f eer=%.4f", verifier.name, system.threshold_tau, system.eer.unwrap())
        return cls(config, dataset, sources, model, system, scores, name=verifier.name)

    @property
    def tau(self) -> float:
        return self.system.threshold_tau

    @property
    def eer(self) -> float:
        return self.system.eer.unwrap()

    def _pair_sources(self) -> dict[tuple[str, int], str]:
        # Walk a seeded shuffle of the pool, skipping sources of the target identity.
        pool = [(identity_id, index) for identity_id, index, _ in self.sources.iter_samples()]
        order = data.rng_for(derive_seed(self.config.seed, "pairing", 0, "sources")).permutation(
            len(pool)
        )
        cursor = 0
        pairs: dict[tuple[str, int], str] = {}
        for identity_id, fold, _ in self.dataset.iter_samples():
            for _ in range(len(pool)):
                source_id, source_index = pool[int(order[cursor % len(pool)])]
                cursor += 1
                if source_id != identity_id:
                    pairs[(identity_id, fold)] = data.IdentityDataset.sample_key(
                        source_id, source_index
                    )
                    break
            else:
                raise ValueError(f"no source image outside identity {identity_id!r}")
        return pairs

    def source_key(self, identity_id: str, fold: int) -> str:
        return self._pairs[(identity_id, fold)]

    def keys(self) -> list[AttackKey]:
        """Every attack of the configured techniques, in report order."""
        return [
            AttackKey(technique, identity_id, fold)
            for technique in self.config.techniques
            for identity_id, fold, _ in self.dataset.iter_samples()
        ]

    def _job(self, key: AttackKey) -> _Job:
        target_key = self.dataset.sample_key(key.identity_id, key.fold)
        source_key = self.source_key(key.identity_id, key.fold)
        config = self.config.attack_config(key.technique).replace(
            seed=derive_seed(self.config.seed, key.identity_id, key.fold, key.technique.value),
            cbce_tau=self.tau,
        )
        return _Job(
            key,
            self.sources.sample(source_key).expect(f"paired source {source_key} exists"),
            self.dataset.sample(target_key).expect(f"target {target_key} exists"),
            config,
        )

    def attack(self, keys: collections.Iterable[AttackKey]) -> dict[AttackKey, AttackRecord]:
        """Run every attack of `keys` that has not run yet and return all their records.

        Raises
        ------
        `KeyError`
            If a key names a technique the configuration does not hold.
        """
        wanted = list(dict.fromkeys(keys))
        jobs = {key: self._job(key) for key in wanted if key not in self._records}
        if jobs:
            _LOGGER.info("running %d attacks on %d worker(s)", len(jobs), self.config.workers)

        for key, result, seconds in _dispatch(self.model, list(jobs.values()), self.config.workers):
            job = jobs[key]
            violations = _record_violations(key, job.source, result, job.config)
            for violation in violations:
                _LOGGER.warning("%s", violation.message)
            self._records[key] = AttackRecord(
                key,
                self.source_key(key.identity_id, key.fold),
                job.config.seed,
                result,
                seconds,
                violations,
            )
            _LOGGER.debug(
                "%s steps=%d stop=%s d=%.6f",
                key.label(),
                result.steps_taken,
                result.stop_reason.value,
                result.final_dissimilarity,
            )
        return {key: self._records[key] for key in wanted}

    def enrolled_keys(self, scenario: Scenario, identity_id: str, fold: int) -> tuple[str, ...]:
        """The enrollments an attack on `(identity_id, fold)` is verified against."""
        if scenario is Scenario.S1:
            return (self.dataset.sample_key(identity_id, fold),)

        identity = self.dataset.identity(identity_id).expect(f"identity {identity_id} exists")
        return tuple(
            self.dataset.sample_key(identity_id, index)
            for index in range(len(identity))
            if index != fold
        )


def _score(
    experiment: Experiment, scenario: Scenario, record: AttackRecord
) -> tuple[ExampleOutcome, list[error.InvariantViolation]]:
    key = record.key
    violations = list(record.violations)
    enrolled = experiment.enrolled_keys(scenario, key.identity_id, key.fold)
    target_key = experiment.dataset.sample_key(key.identity_id, key.fold)
    if scenario is Scenario.S2 and target_key in enrolled:
        violations.append(
            error.InvariantViolation("held-out", key.label(), "the target sample is enrolled")
        )

    adversarial = record.result.adversarial
    success, scores = metrics.attack_success(adversarial, enrolled, experiment.system).expect(
        "every gallery sample is enrolled"
    )
    source = experiment.sources.sample(record.source_key).expect("paired source exists")
    outcome = ExampleOutcome(
        scenario=scenario,
        technique=key.technique,
        identity_id=key.identity_id,
        fold=key.fold,
        source_key=record.source_key,
        seed=record.seed,
        steps=record.result.steps_taken,
        stop_reason=record.result.stop_reason.value,
        target_dissimilarity=record.result.final_dissimilarity,
        enrolled_keys=enrolled,
        scores=scores,
        success=success,
        ssim=metrics.ssim(
            adversarial,
            source,
            window=experiment.config.ssim_window,
            kind=typing.cast("metrics.WindowKind", experiment.config.ssim_kind),
        ),
        linf=metrics.linf_distance(adversarial, source),
        seconds=record.seconds,
    )
    return outcome, violations


def run_scenario(experiment: Experiment, scenario: Scenario) -> ScenarioResult:
    """Attack every gallery sample with every configured technique and score it."""
    records = experiment.attack(experiment.keys())
    outcomes: list[ExampleOutcome] = []
    violations: list[error.InvariantViolation] = []
    for record in records.values():
        outcome, found = _score(experiment, scenario, record)
        outcomes.append(outcome)
        violations.extend(found)

    result = ScenarioResult(
        scenario, experiment.tau, experiment.eer, tuple(outcomes), tuple(violations)
    )
    for technique in result.techniques:
        _LOGGER.info(
            "%s %s asr=%.4f over %d examples",
            scenario.value,
            technique.value,
            result.asr(technique),
            len(result.of(technique)),
        )
    if violations:
        _LOGGER.warning("%s finished with %d invariant violations", scenario.value, len(violations))
    return result


def run_s1(experiment: Experiment) -> ScenarioResult:
    """The white-box scenario, each attacked image is its own enrollment."""
    return run_scenario(experiment, Scenario.S1)


def run_s2(experiment: Experiment) -> ScenarioResult:
    """The gray-box scenario with one fold per sample.

    The fold's image is the attack target and is never enrolled, the adversarial
    example is verified against the identity's remaining samples.
    """
    return run_scenario(experiment, Scenario.S2)


def _traces(experiment: Experiment) -> tuple[TraceRecord, ...]:
    limit = experiment.config.trace_examples
    picked: list[TraceRecord] = []
    for technique in experiment.config.techniques:
        keys = [key for key in experiment.keys() if key.technique is technique][:limit]
        for key, record in experiment.attack(keys).items():
            picked.append(
                TraceRecord(
                    key.technique,
                    key.identity_id,
                    key.fold,
                    record.result.loss_trace,
                    record.result.dissimilarity_trace,
                    record.result.movement,
                )
            )
    return tuple(picked)


def run_bench(
    experiment: Experiment, scenarios: collections.Iterable[Scenario] | None = None
) -> BenchResult:
    """Run the selected scenarios, the configured ones by default."""
    selected = tuple(scenarios) if scenarios is not None else experiment.config.scenarios
    results = tuple(run_scenario(experiment, scenario) for scenario in selected)
    return BenchResult(
        experiment.tau,
        experiment.eer,
        experiment.scores,
        results,
        _traces(experiment),
        model=experiment.name,
    )


def run_models(
    config: ExperimentConfig, scenarios: collections.Iterable[Scenario] | None = None
) -> tuple[BenchResult, ...]:
    """Build and bench every configured verifier, each calibrated on its own."""
    selected = tuple(scenarios) if scenarios is not None else None
    return tuple(
        run_bench(Experiment.build(config, embedder), selected) for embedder in config.embedders
    )


def _at_budget(technique: Technique, attack: AttackConfig, epsilon: float) -> AttackConfig:
    if technique is Technique.FGSM_CBCE:
        return attack.replace(epsilon=epsilon, alpha=epsilon)
    # Iterative attacks keep their step unless the border moved out of reach.
    return attack.replace(epsilon=epsilon, alpha=max(attack.alpha, epsilon / attack.t_max))


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class SweepRow:
    """Success and perceptual cost of one technique at one budget."""

    model: str
    scenario: Scenario
    technique: Technique
    epsilon: float
    asr: float
    ssim: float
    linf: float


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class SweepResult:
    rows: tuple[SweepRow, ...]
    violations: tuple[error.InvariantViolation, ...] = ()

    def series(self, technique: Technique) -> tuple[SweepRow, ...]:
        """The rows of `technique`, in budget order."""
        return tuple(sorted((r for r in self.rows if r.technique is technique), key=lambda r: r.epsilon))


def run_epsilon_sweep(
    experiment: Experiment,
    epsilons: collections.Iterable[float] | None = None,
    scenario: Scenario = Scenario.S1,
) -> SweepResult:
    """Rerun every configured technique at each budget of `epsilons`.

    The built gallery, model and verifier are shared, only the attack budgets
    change. Iterative techniques keep their step size unless `t_max` steps of it
    could no longer reach the border, then the step grows to `epsilon / t_max`.
    Per-example seeds do not depend on the budget.

    Example
    -------
    ```py
    sweep = run_epsilon_sweep(Experiment.build(config), (0.01, 0.03, 0.1))
    for row in sweep.series(Technique.SGADV):
        print(row.epsilon, row.asr, row.ssim)
    ```
    """
    budgets = tuple(epsilons) if epsilons is not None else experiment.config.sweep_epsilons
    rows: list[SweepRow] = []
    violations: list[error.InvariantViolation] = []
    for epsilon in budgets:
        config = dataclasses.replace(
            experiment.config,
            techniques={
                technique: _at_budget(technique, attack, epsilon)
                for technique, attack in experiment.config.techniques.items()
            },
        )
        budgeted = Experiment(
            config,
            experiment.dataset,
            experiment.sources,
            experiment.model,
            experiment.system,
            experiment.scores,
            name=experiment.name,
        )
        result = run_scenario(budgeted, scenario)
        violations.extend(result.violations)
        for technique, report in result.reports().items():
            rows.append(
                SweepRow(
                    experiment.name,
                    scenario,
                    technique,
                    epsilon,
                    result.asr(technique),
                    report.mean_ssim,
                    report.mean_linf,
                )
            )
        _LOGGER.info("%s: finished the sweep at epsilon=%g", experiment.name, epsilon)
    return SweepResult(tuple(rows), tuple(violations))
