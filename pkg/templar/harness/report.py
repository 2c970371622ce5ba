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
"""Report files.

Everything except `timing.csv` and `results.json` depends only on the
configuration, two runs of the same config write byte-identical files no matter
how many workers they used. Every file leads with a `model` column naming the
verifier the row belongs to.

| file | rows |
| --- | --- |
| `summary.csv` | one per model and technique |
| `per_example.csv` | one per scored example |
| `folds.csv` | one per technique, scenario and fold |
| `timing.csv` | wall-clock seconds per example, kept out of `summary.csv` so that file stays reproducible |
| `roc_benign.csv` | the benign operating curve |
| `roc_attacked.csv` | one curve per technique and scenario |
| `gap.csv`, `gap_scores.csv` | the gray-box probability gap |
| `trace_<model>_<technique>_<identity>_<fold>.csv` | per-step loss traces |
| `epsilon_sweep.csv` | success and SSIM per budget, written by `sweep` |
| `results.json` | everything above but the sweep, `report` re-renders from it |
"""

from __future__ import annotations

__all__ = ("write_report", "write_trace", "write_sweep", "dump_results", "load_results")

import csv
import json
import logging
import pathlib
import typing

from sain import Err
from sain import Ok

from templar import authsys
from templar import error
from templar import metrics
from templar.attacks import Technique
from templar.harness import gap
from templar.harness.config import Scenario
from templar.harness.scenario import BenchResult
from templar.harness.scenario import ExampleOutcome
from templar.harness.scenario import ScenarioResult
from templar.harness.scenario import TraceRecord

if typing.TYPE_CHECKING:
    import collections.abc as collections
    import os

    from sain import Option
    from sain import Result

    from templar.harness.scenario import SweepResult

_LOGGER = logging.getLogger(__name__)
_FORMAT: typing.Final = 2

Row: typing.TypeAlias = "collections.Sequence[object]"
Benches: typing.TypeAlias = "BenchResult | collections.Sequence[BenchResult]"


class Trace(typing.Protocol):
    """Anything holding per-step traces, an `AttackResult` or a `TraceRecord`."""

    @property
    def loss_trace(self) -> tuple[float, ...]: ...

    @property
    def dissimilarity_trace(self) -> tuple[float, ...]: ...

    @property
    def movement(self) -> tuple[float, ...]: ...


def _cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _optional(value: Option[float]) -> str:
    return value.map_or("", repr)


def _as_tuple(benches: Benches) -> tuple[BenchResult, ...]:
    if isinstance(benches, BenchResult):
        return (benches,)
    return tuple(benches)


def _write_csv(path: pathlib.Path, header: Row, rows: collections.Iterable[Row]) -> None:
    with path.open("w", encoding="utf-8", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows([_cell(v) for v in row] for row in rows)


def write_trace(trace: Trace, path: str | os.PathLike[str]) -> Result[pathlib.Path, error.ReportError]:
    """Write `step,loss,dissimilarity,movement`, movement is empty on step 0."""
    target = pathlib.Path(path)
    moves = ("", *trace.movement)
    try:
        _write_csv(
            target,
            ("step", "loss", "dissimilarity", "movement"),
            (
                (step, loss, dissim, moves[step])
                for step, (loss, dissim) in enumerate(zip(trace.loss_trace, trace.dissimilarity_trace))
            ),
        )
    except OSError as exc:
        return Err(error.ReportError(target, exc.strerror or str(exc)))
    return Ok(target)


def write_sweep(sweep: SweepResult, path: str | os.PathLike[str]) -> Result[pathlib.Path, error.ReportError]:
    """Write `epsilon_sweep.csv`, one row per model, technique and budget."""
    target = pathlib.Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(
            target,
            ("model", "scenario", "technique", "epsilon", "asr", "ssim", "linf"),
            (
                (r.model, r.scenario.value, r.technique.value, r.epsilon, r.asr, r.ssim, r.linf)
                for r in sweep.rows
            ),
        )
    except OSError as exc:
        return Err(error.ReportError(target, exc.strerror or str(exc)))
    return Ok(target)


def _summary_rows(bench: BenchResult) -> collections.Iterator[Row]:
    everything = [o.to_metrics() for s in bench.scenarios for o in s.outcomes]
    for technique in bench.techniques:
        report = metrics.MetricReport.from_rows(technique.value, everything)
        yield (
            bench.model,
            technique.value,
            bench.tau,
            bench.eer,
            _optional(report.asr_white),
            _optional(report.asr_gray),
            report.mean_dissimilarity,
            report.mean_ssim,
            report.mean_linf,
        )


def _example_rows(bench: BenchResult) -> collections.Iterator[Row]:
    for result in bench.scenarios:
        for o in result.outcomes:
            yield (
                bench.model,
                o.scenario.value,
                o.technique.value,
                o.identity_id,
                o.fold,
                o.source_key,
                o.seed,
                o.steps,
                o.stop_reason,
                o.target_dissimilarity,
                o.success,
                o.ssim,
                o.linf,
                ";".join(repr(s) for s in o.scores),
            )


def _roc_rows(bench: BenchResult) -> collections.Iterator[Row]:
    for result in bench.scenarios:
        for technique in result.techniques:
            for point in authsys.attacked_roc(bench.benign.genuine, result.scores(technique)):
                yield bench.model, technique.value, result.scenario.value, point.threshold, point.fpr, point.tpr


def write_report(
    benches: Benches, output_dir: str | os.PathLike[str]
) -> Result[list[pathlib.Path], error.ReportError]:
    """Render every report file of `benches` into `output_dir`.

    Example
    -------
    ```py
    benches = run_models(config)
    for path in write_report(benches, config.output_dir).unwrap():
        print(path)
    ```
    """
    root = pathlib.Path(output_dir)
    models = _as_tuple(benches)
    written: list[pathlib.Path] = []

    def emit(name: str, header: Row, rows: collections.Iterable[Row]) -> None:
        path = root / name
        _write_csv(path, header, rows)
        written.append(path)

    gaps: list[tuple[str, gap.GapReport]] = []
    for bench in models:
        match gap.validate_probability_gap(bench.scenario(Scenario.S2)):
            case Ok(found):
                gaps.append((bench.model, found))
            case Err(why):
                _LOGGER.info("%s: skipping the gap report, %s", bench.model, why.message)

    try:
        root.mkdir(parents=True, exist_ok=True)
        emit(
            "summary.csv",
            ("model", "technique", "tau", "eer", "asr_white", "asr_gray", "dissimilarity", "ssim", "linf"),
            (row for bench in models for row in _summary_rows(bench)),
        )
        emit(
            "per_example.csv",
            (
                "model",
                "scenario",
                "technique",
                "identity",
                "fold",
                "source",
                "seed",
                "steps",
                "stop_reason",
                "dissimilarity",
                "success",
                "ssim",
                "linf",
                "scores",
            ),
            (row for bench in models for row in _example_rows(bench)),
        )
        emit(
            "folds.csv",
            ("model", "technique", "scenario", "fold", "asr"),
            (
                (bench.model, t.value, s.scenario.value, fold, rate)
                for bench in models
                for s in bench.scenarios
                for t in s.techniques
                for fold, rate in s.fold_breakdown(t).items()
            ),
        )
        emit(
            "timing.csv",
            ("model", "technique", "scenario", "seconds_per_example"),
            (
                (bench.model, t.value, s.scenario.value, s.seconds_per_example(t))
                for bench in models
                for s in bench.scenarios
                for t in s.techniques
            ),
        )
        emit(
            "roc_benign.csv",
            ("model", "threshold", "fpr", "tpr"),
            ((bench.model, *point) for bench in models for point in authsys.roc(bench.benign)),
        )
        emit(
            "roc_attacked.csv",
            ("model", "technique", "scenario", "threshold", "fpr", "tpr"),
            (row for bench in models for row in _roc_rows(bench)),
        )

        if gaps:
            emit(
                "gap.csv",
                ("model", "technique", "family", "ell", "tau", "predicted", "observed"),
                (
                    (model, r.technique.value, r.family, r.ell, found.tau, r.predicted, r.observed)
                    for model, found in gaps
                    for r in found.rows
                ),
            )
            emit(
                "gap_scores.csv",
                ("model", "technique", "score"),
                (
                    (model, t.value, score)
                    for model, found in gaps
                    for t, scores in found.scores.items()
                    for score in scores
                ),
            )

        for bench in models:
            for trace in bench.traces:
                path = root / f"trace_{bench.model}_{trace.name}.csv"
                write_trace(trace, path).unwrap()
                written.append(path)

        written.append(dump_results(models, root / "results.json").unwrap())
    except (OSError, RuntimeError) as exc:
        return Err(error.ReportError(root, str(exc)))

    _LOGGER.info("wrote %d report files to %s", len(written), root)
    return Ok(written)


def _outcome_to_json(o: ExampleOutcome) -> dict[str, typing.Any]:
    return {
        "scenario": o.scenario.value,
        "technique": o.technique.value,
        "identity_id": o.identity_id,
        "fold": o.fold,
        "source_key": o.source_key,
        "seed": o.seed,
        "steps": o.steps,
        "stop_reason": o.stop_reason,
        "target_dissimilarity": o.target_dissimilarity,
        "enrolled_keys": list(o.enrolled_keys),
        "scores": list(o.scores),
        "success": o.success,
        "ssim": o.ssim,
        "linf": o.linf,
        "seconds": o.seconds,
    }


def _outcome_from_json(raw: dict[str, typing.Any]) -> ExampleOutcome:
    return ExampleOutcome(
        scenario=Scenario(raw["scenario"]),
        technique=Technique(raw["technique"]),
        identity_id=str(raw["identity_id"]),
        fold=int(raw["fold"]),
        source_key=str(raw["source_key"]),
        seed=int(raw["seed"]),
        steps=int(raw["steps"]),
        stop_reason=str(raw["stop_reason"]),
        target_dissimilarity=float(raw["target_dissimilarity"]),
        enrolled_keys=tuple(map(str, raw["enrolled_keys"])),
        scores=tuple(map(float, raw["scores"])),
        success=float(raw["success"]),
        ssim=float(raw["ssim"]),
        linf=float(raw["linf"]),
        seconds=float(raw["seconds"]),
    )


def _bench_to_json(bench: BenchResult) -> dict[str, typing.Any]:
    return {
        "model": bench.model,
        "tau": bench.tau,
        "eer": bench.eer,
        "benign": {"genuine": list(bench.benign.genuine), "imposter": list(bench.benign.imposter)},
        "scenarios": [
            {
                "scenario": s.scenario.value,
                "tau": s.tau,
                "eer": s.eer,
                "outcomes": [_outcome_to_json(o) for o in s.outcomes],
                "violations": [
                    {"check": v.check, "subject": v.subject, "detail": v.detail}
                    for v in s.violations
                ],
            }
            for s in bench.scenarios
        ],
        "traces": [
            {
                "technique": t.technique.value,
                "identity_id": t.identity_id,
                "fold": t.fold,
                "loss_trace": list(t.loss_trace),
                "dissimilarity_trace": list(t.dissimilarity_trace),
                "movement": list(t.movement),
            }
            for t in bench.traces
        ],
    }


def _bench_from_json(raw: dict[str, typing.Any]) -> BenchResult:
    scenarios = tuple(
        ScenarioResult(
            Scenario(s["scenario"]),
            float(s["tau"]),
            float(s["eer"]),
            tuple(_outcome_from_json(o) for o in s["outcomes"]),
            tuple(
                error.InvariantViolation(v["check"], v["subject"], v["detail"])
                for v in s["violations"]
            ),
        )
        for s in raw["scenarios"]
    )
    traces = tuple(
        TraceRecord(
            Technique(t["technique"]),
            str(t["identity_id"]),
            int(t["fold"]),
            tuple(map(float, t["loss_trace"])),
            tuple(map(float, t["dissimilarity_trace"])),
            tuple(map(float, t["movement"])),
        )
        for t in raw["traces"]
    )
    benign = authsys.ScoreSets(
        tuple(map(float, raw["benign"]["genuine"])),
        tuple(map(float, raw["benign"]["imposter"])),
    )
    return BenchResult(
        float(raw["tau"]), float(raw["eer"]), benign, scenarios, traces, model=str(raw["model"])
    )


def dump_results(
    benches: Benches, path: str | os.PathLike[str]
) -> Result[pathlib.Path, error.ReportError]:
    target = pathlib.Path(path)
    document = {"format": _FORMAT, "models": [_bench_to_json(b) for b in _as_tuple(benches)]}
    try:
        target.write_text(json.dumps(document) + "\n", encoding="utf-8")
    except OSError as exc:
        return Err(error.ReportError(target, exc.strerror or str(exc)))
    return Ok(target)


def load_results(path: str | os.PathLike[str]) -> Result[tuple[BenchResult, ...], error.ReportError]:
    """Read `results.json` back into the results it was written from, one per model."""
    source = pathlib.Path(path)
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
        if document.get("format") != _FORMAT:
            return Err(error.ReportError(source, f"unsupported format {document.get('format')!r}"))
        benches = tuple(_bench_from_json(raw) for raw in document["models"])
        if not benches:
            return Err(error.ReportError(source, "holds no results"))
        return Ok(benches)
    except OSError as exc:
        return Err(error.ReportError(source, exc.strerror or str(exc)))
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        return Err(error.ReportError(source, f"malformed results file: {exc!r}"))
