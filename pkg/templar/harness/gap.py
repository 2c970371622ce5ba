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
"""Predicted against observed gray-box success.

If the adversarial template ends at a small dissimilarity `l` from the target
sample, and the other samples of that identity sit roughly uniformly within
`tau` of it, the chance that a held-out enrollment accepts the example is about
`tau / (l + tau)`. A label-based attack stops as soon as the threshold is
crossed, its example lands on the border and the same reasoning gives about one
half. This module puts those predictions next to what the gray-box scenario
actually measured. Agreement is reported, never asserted.
"""

from __future__ import annotations

__all__ = ("GapRow", "GapReport", "predicted_success", "validate_probability_gap")

import dataclasses
import statistics
import typing

from sain import Err
from sain import Ok

from templar import error
from templar.attacks import Objective
from templar.harness.config import Scenario

if typing.TYPE_CHECKING:
    from sain import Option
    from sain import Result

    from templar.attacks import Technique
    from templar.harness.scenario import ScenarioResult

LABEL_BASED_PREDICTION: typing.Final = 0.5


def predicted_success(ell: float, tau: float) -> float:
    """`tau / (ell + tau)`, one at `ell = 0` and one half at `ell = tau`.

    Raises
    ------
    `ValueError`
        If `ell` is negative or `tau` is not positive.
    """
    if ell < 0.0 or not tau > 0.0:
        raise ValueError(f"need ell >= 0 and tau > 0, got ell={ell} tau={tau}")
    return tau / (ell + tau)


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class GapRow:
    technique: Technique
    family: str
    """`"similarity"` or `"label"`."""
    ell: float
    """Median final dissimilarity between the adversarial and target templates."""
    predicted: float
    observed: float


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class GapReport:
    tau: float
    rows: tuple[GapRow, ...]
    scores: dict[Technique, tuple[float, ...]]
    """Every gray-box score of every technique, to inspect the uniformity assumption."""

    def row(self, technique: Technique) -> GapRow:
        return next(row for row in self.rows if row.technique is technique)


def validate_probability_gap(
    s2: Option[ScenarioResult],
) -> Result[GapReport, error.ScenarioMissing]:
    """Compare predicted and observed gray-box success for every technique in `s2`.

    Example
    -------
    ```py
    match validate_probability_gap(bench.scenario(Scenario.S2)):
        case Ok(report):
            for row in report.rows:
                print(row.technique.value, row.predicted, row.observed)
        case Err(why):
            print(why.message)
    ```
    """
    if s2.is_none() or s2.unwrap().scenario is not Scenario.S2:
        return Err(error.ScenarioMissing(Scenario.S2.value))

    result = s2.unwrap()
    rows: list[GapRow] = []
    for technique in result.techniques:
        ell = statistics.median(o.target_dissimilarity for o in result.of(technique))
        if technique.objective is Objective.SIMILARITY:
            family, predicted = "similarity", predicted_success(ell, result.tau)
        else:
            family, predicted = "label", LABEL_BASED_PREDICTION
        rows.append(GapRow(technique, family, ell, predicted, result.asr(technique)))

    return Ok(
        GapReport(
            result.tau,
            tuple(rows),
            {technique: result.scores(technique) for technique in result.techniques},
        )
    )
