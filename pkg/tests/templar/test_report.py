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
from __future__ import annotations

import csv
import dataclasses
import json
import typing

import pytest

from templar import authsys
from templar import error
from templar.attacks import Technique
from templar.harness import report
from templar.harness.config import Scenario
from templar.harness.scenario import BenchResult
from templar.harness.scenario import ExampleOutcome
from templar.harness.scenario import ScenarioResult
from templar.harness.scenario import SweepResult
from templar.harness.scenario import SweepRow
from templar.harness.scenario import TraceRecord

if typing.TYPE_CHECKING:
    import pathlib

_TAU = 0.2


def _outcome(scenario: Scenario, technique: Technique, fold: int, ell: float) -> ExampleOutcome:
    if scenario is Scenario.S1:
        enrolled = (f"id0000/{fold}",)
        scores = (ell,)
    else:
        enrolled = tuple(f"id0000/{i}" for i in range(3) if i != fold)
        scores = (ell + 0.05, ell + 0.25)
    return ExampleOutcome(
        scenario=scenario,
        technique=technique,
        identity_id="id0000",
        fold=fold,
        source_key="id0001/2",
        seed=1000 + fold,
        steps=7,
        stop_reason="Settled",
        target_dissimilarity=ell,
        enrolled_keys=enrolled,
        scores=scores,
        success=sum(s <= _TAU for s in scores) / len(scores),
        ssim=0.875,
        linf=0.03,
        seconds=0.125,
    )


def _scenario(scenario: Scenario) -> ScenarioResult:
    outcomes = tuple(
        _outcome(scenario, technique, fold, ell)
        for technique, ell in ((Technique.PGD_CBCE, 0.19), (Technique.SGADV, 0.01))
        for fold in range(3)
    )
    return ScenarioResult(scenario, _TAU, 0.04, outcomes)


@pytest.fixture()
def bench() -> BenchResult:
    trace = TraceRecord(Technique.SGADV, "id0000", 0, (0.5, 0.25, 0.125), (0.5, 0.25, 0.125), (0.001, 0.001))
    benign = authsys.ScoreSets((0.05, 0.1, 0.15, 0.25), (0.15, 0.3, 0.4, 0.5))
    return BenchResult(_TAU, 0.04, benign, (_scenario(Scenario.S1), _scenario(Scenario.S2)), (trace,))


def _rows(path: pathlib.Path) -> list[dict[str, str]]:
    with path.open(encoding="utf-8", newline="") as stream:
        return list(csv.DictReader(stream))


class TestWriteTrace:
    def test_columns(self, tmp_path: pathlib.Path):
        trace = TraceRecord(Technique.PGD_CBCE, "id0002", 1, (0.75, 0.5), (0.3, 0.2), (0.001,))
        path = report.write_trace(trace, tmp_path / "trace.csv").unwrap()
        assert path.read_text(encoding="utf-8").splitlines() == [
            "step,loss,dissimilarity,movement",
            "0,0.75,0.3,",
            "1,0.5,0.2,0.001",
        ]

    def test_missing_directory(self, tmp_path: pathlib.Path):
        trace = TraceRecord(Technique.SGADV, "id0000", 0, (0.5,), (0.5,), ())
        why = report.write_trace(trace, tmp_path / "nope" / "trace.csv").unwrap_err()
        assert isinstance(why, error.ReportError)


class TestWriteReport:
    def test_file_set(self, bench: BenchResult, tmp_path: pathlib.Path):
        written = report.write_report(bench, tmp_path / "out").unwrap()
        assert sorted(path.name for path in written) == [
            "folds.csv",
            "gap.csv",
            "gap_scores.csv",
            "per_example.csv",
            "results.json",
            "roc_attacked.csv",
            "roc_benign.csv",
            "summary.csv",
            "timing.csv",
            "trace_reference_SGADV_id0000_0.csv",
        ]
        assert all(path.is_file() for path in written)

    def test_summary(self, bench: BenchResult, tmp_path: pathlib.Path):
        report.write_report(bench, tmp_path).unwrap()
        summary = {row["technique"]: row for row in _rows(tmp_path / "summary.csv")}
        assert list(summary) == ["PGD-CBCE", "SGADV"]
        assert float(summary["SGADV"]["asr_white"]) == 1.0
        assert float(summary["SGADV"]["asr_gray"]) == pytest.approx(0.5)
        assert float(summary["PGD-CBCE"]["asr_white"]) == 1.0
        assert float(summary["SGADV"]["tau"]) == _TAU

    def test_timing(self, bench: BenchResult, tmp_path: pathlib.Path):
        report.write_report(bench, tmp_path).unwrap()
        timing = _rows(tmp_path / "timing.csv")
        assert [(row["technique"], row["scenario"]) for row in timing] == [
            ("PGD-CBCE", "S1"),
            ("SGADV", "S1"),
            ("PGD-CBCE", "S2"),
            ("SGADV", "S2"),
        ]
        assert all(float(row["seconds_per_example"]) == 0.125 for row in timing)
        assert "seconds_per_example" not in _rows(tmp_path / "summary.csv")[0]

    def test_per_example(self, bench: BenchResult, tmp_path: pathlib.Path):
        report.write_report(bench, tmp_path).unwrap()
        rows = _rows(tmp_path / "per_example.csv")
        assert len(rows) == 12
        gray = [row for row in rows if row["scenario"] == "S2"]
        assert all(len(row["scores"].split(";")) == 2 for row in gray)

    def test_without_the_gray_box_run(self, bench: BenchResult, tmp_path: pathlib.Path):
        white = BenchResult(bench.tau, bench.eer, bench.benign, bench.scenarios[:1])
        written = report.write_report(white, tmp_path).unwrap()
        assert "gap.csv" not in {path.name for path in written}
        assert _rows(tmp_path / "summary.csv")[0]["asr_gray"] == ""

    def test_several_models(self, bench: BenchResult, tmp_path: pathlib.Path):
        other = dataclasses.replace(bench, tau=0.25, model="wide")
        written = report.write_report((bench, other), tmp_path).unwrap()
        names = {path.name for path in written}
        assert {"trace_reference_SGADV_id0000_0.csv", "trace_wide_SGADV_id0000_0.csv"} <= names
        summary = _rows(tmp_path / "summary.csv")
        assert [(row["model"], row["technique"]) for row in summary] == [
            ("reference", "PGD-CBCE"),
            ("reference", "SGADV"),
            ("wide", "PGD-CBCE"),
            ("wide", "SGADV"),
        ]
        assert {row["model"]: float(row["tau"]) for row in summary} == {"reference": _TAU, "wide": 0.25}
        assert {row["model"] for row in _rows(tmp_path / "per_example.csv")} == {"reference", "wide"}

        (first, second) = report.load_results(tmp_path / "results.json").unwrap()
        assert (first.model, second.model) == ("reference", "wide")

    def test_unwritable(self, bench: BenchResult, tmp_path: pathlib.Path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert report.write_report(bench, blocker / "out").is_err()


class TestResults:
    def test_round_trip(self, bench: BenchResult, tmp_path: pathlib.Path):
        path = report.dump_results(bench, tmp_path / "results.json").unwrap()
        (loaded,) = report.load_results(path).unwrap()
        assert loaded.model == "reference"
        assert (loaded.tau, loaded.eer, loaded.benign) == (bench.tau, bench.eer, bench.benign)
        assert loaded.traces == bench.traces
        for got, want in zip(loaded.scenarios, bench.scenarios, strict=True):
            assert got.scenario is want.scenario
            assert got.outcomes == want.outcomes

    def test_rerendered_reports_match(self, bench: BenchResult, tmp_path: pathlib.Path):
        first = tmp_path / "first"
        report.write_report(bench, first).unwrap()
        (loaded,) = report.load_results(first / "results.json").unwrap()
        second = tmp_path / "second"
        report.write_report(loaded, second).unwrap()
        for name in ("summary.csv", "per_example.csv", "folds.csv", "gap.csv", "roc_attacked.csv"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_violations_survive(self, bench: BenchResult, tmp_path: pathlib.Path):
        s1 = bench.scenarios[0]
        broken = ScenarioResult(
            s1.scenario,
            s1.tau,
            s1.eer,
            s1.outcomes,
            (error.InvariantViolation("budget", "SGADV:id0000/0", "linf 0.04 > 0.03"),),
        )
        path = report.dump_results(BenchResult(bench.tau, bench.eer, bench.benign, (broken,)), tmp_path / "r.json").unwrap()
        (loaded,) = report.load_results(path).unwrap()
        assert [v.message for v in loaded.violations] == ["[budget] SGADV:id0000/0: linf 0.04 > 0.03"]

    def test_missing(self, tmp_path: pathlib.Path):
        assert report.load_results(tmp_path / "results.json").is_err()

    @pytest.mark.parametrize(
        "document", [{"format": 99}, {"format": 1}, {"format": 2}, {"format": 2, "models": []}, []]
    )
    def test_malformed(self, tmp_path: pathlib.Path, document: object):
        path = tmp_path / "results.json"
        path.write_text(json.dumps(document))
        why = report.load_results(path).unwrap_err()
        assert isinstance(why, error.ReportError)


class TestWriteSweep:
    def test_columns(self, tmp_path: pathlib.Path):
        sweep = SweepResult(
            (
                SweepRow("reference", Scenario.S1, Technique.SGADV, 0.01, 0.5, 0.99, 0.01),
                SweepRow("reference", Scenario.S1, Technique.SGADV, 0.1, 1.0, 0.75, 0.1),
            )
        )
        path = report.write_sweep(sweep, tmp_path / "nested" / "epsilon_sweep.csv").unwrap()
        assert path.read_text(encoding="utf-8").splitlines() == [
            "model,scenario,technique,epsilon,asr,ssim,linf",
            "reference,S1,SGADV,0.01,0.5,0.99,0.01",
            "reference,S1,SGADV,0.1,1.0,0.75,0.1",
        ]

    def test_unwritable(self, tmp_path: pathlib.Path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        assert report.write_sweep(SweepResult(()), blocker / "epsilon_sweep.csv").is_err()
