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
"""Scores and perceptual metrics.

`dissimilarity` is the single score the whole package compares templates with,
the verifier, the attack losses and the reports all call it.
"""

from __future__ import annotations

__all__ = (
    "SSIM_K1",
    "SSIM_K2",
    "dissimilarity",
    "attack_success",
    "asr",
    "linf_distance",
    "ssim",
    "ExampleMetrics",
    "MetricReport",
)

import dataclasses
import statistics
import typing

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from sain import Err
from sain import Ok
from sain import Some
from sain.option import nothing_unchecked

from templar import embedding

if typing.TYPE_CHECKING:
    import collections.abc as collections

    import numpy.typing as npt
    from sain import Option
    from sain import Result

    from templar import authsys
    from templar import data
    from templar import error

SSIM_K1: typing.Final = 0.01
SSIM_K2: typing.Final = 0.03
_GAUSSIAN_SIZE: typing.Final = 11
_GAUSSIAN_SIGMA: typing.Final = 1.5

FeatureLike: typing.TypeAlias = "embedding.FeatureVector | npt.ArrayLike"
WindowKind = typing.Literal["uniform", "gaussian"]


def _as_vector(value: FeatureLike) -> data.FloatArray:
    if isinstance(value, embedding.FeatureVector):
        return value.values
    return np.asarray(value, dtype=np.float64).reshape(-1)


def dissimilarity(a: FeatureLike, b: FeatureLike) -> float:
    """`(1 - cos(a, b)) / 2`, zero for equal directions and one for opposite ones.

    The cosine is taken on the normalized vectors and clamped to `[-1, 1]`, so
    the result always lies in `[0, 1]`.

    Example
    -------
    ```py
    assert dissimilarity([1.0, 0.0], [-1.0, 0.0]) == 1.0
    ```

    Raises
    ------
    `ValueError`
        If the dimensions differ or either vector is zero.
    """
    x = _as_vector(a)
    y = _as_vector(b)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch {x.size} != {y.size}")

    norms = float(np.linalg.norm(x)) * float(np.linalg.norm(y))
    if norms == 0.0:
        raise ValueError("dissimilarity is undefined for a zero vector")
    cosine = min(1.0, max(-1.0, float(x @ y) / norms))
    return (1.0 - cosine) / 2.0


def attack_success(
    adversarial: data.Image,
    identity_ids: str | collections.Sequence[str],
    system: authsys.AuthSystem,
) -> Result[tuple[float, tuple[float, ...]], error.UnknownIdentity]:
    """Verify one adversarial image against each enrolled id.

    Returns the fraction of ids that accepted it together with every score.
    """
    ids = (identity_ids,) if isinstance(identity_ids, str) else tuple(identity_ids)
    if not ids:
        raise ValueError("an adversarial example needs at least one enrolled id")

    accepted = 0
    scores: list[float] = []
    for identity_id in ids:
        match system.verify(identity_id, adversarial):
            case Ok(verdict):
                accepted += verdict.accepted
                scores.append(verdict.score)
            case Err(why):
                return Err(why)
    return Ok((accepted / len(ids), tuple(scores)))


def asr(
    adversarials: collections.Sequence[tuple[data.Image, str | collections.Sequence[str]]],
    system: authsys.AuthSystem,
) -> Result[float, error.UnknownIdentity]:
    """Attack success rate.

    Each pair is an adversarial image and the id or ids it claims. A pair
    contributes the fraction of its ids that accept it, the rate is the mean over
    pairs.

    Raises
    ------
    `ValueError`
        If `adversarials` is empty.
    """
    if not adversarials:
        raise ValueError("attack success rate of zero examples is undefined")

    total = 0.0
    for image, ids in adversarials:
        match attack_success(image, ids, system):
            case Ok((fraction, _)):
                total += fraction
            case Err(why):
                return Err(why)
    return Ok(total / len(adversarials))


def linf_distance(a: data.Image, b: data.Image) -> float:
    """The largest absolute pixel difference."""
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} != {b.dims}")
    return float(np.max(np.abs(a.pixels - b.pixels)))


def _gaussian_kernel(size: int, sigma: float) -> data.FloatArray:
    axis = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    line = np.exp(-(axis**2) / (2.0 * sigma**2))
    kernel = np.outer(line, line)
    return kernel / kernel.sum()


def _windowed_mean(
    channel: data.FloatArray, size: int, kernel: data.FloatArray | None
) -> data.FloatArray:
    windows = sliding_window_view(channel, (size, size))
    if kernel is None:
        return windows.mean(axis=(-2, -1))
    return np.tensordot(windows, kernel, axes=((-2, -1), (0, 1)))


def _ssim_channel(
    x: data.FloatArray, y: data.FloatArray, size: int, kernel: data.FloatArray | None
) -> float:
    c1 = (SSIM_K1 * 1.0) ** 2
    c2 = (SSIM_K2 * 1.0) ** 2
    mu_x = _windowed_mean(x, size, kernel)
    mu_y = _windowed_mean(y, size, kernel)
    # Population moments, each window centred on its own mean.
    sigma_xx = _windowed_mean(x * x, size, kernel) - mu_x * mu_x
    sigma_yy = _windowed_mean(y * y, size, kernel) - mu_y * mu_y
    sigma_xy = _windowed_mean(x * y, size, kernel) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    return float(np.mean(numerator / denominator))


def ssim(
    a: data.Image, b: data.Image, *, window: int = 8, kind: WindowKind = "uniform"
) -> float:
    """Mean structural similarity over every fully contained window.

    The dynamic range is 1 with `K1 = 0.01` and `K2 = 0.03`. A uniform window is
    `window x window`, a Gaussian one is `11 x 11` with `sigma = 1.5`. Color images
    average the per-channel scores.

    Raises
    ------
    `ValueError`
        If the dimensions differ or the image is smaller than the window.
    """
    if a.dims != b.dims:
        raise ValueError(f"dimension mismatch {a.dims} != {b.dims}")

    kernel = None
    size = window
    if kind == "gaussian":
        size = _GAUSSIAN_SIZE
        kernel = _gaussian_kernel(_GAUSSIAN_SIZE, _GAUSSIAN_SIGMA)
    elif kind != "uniform":
        raise ValueError(f"unknown window kind {kind!r}")

    if size < 1 or a.width < size or a.height < size:
        raise ValueError(f"a {a.width}x{a.height} image has no {size}x{size} window")

    return statistics.fmean(
        _ssim_channel(a.pixels[:, :, c], b.pixels[:, :, c], size, kernel)
        for c in range(a.channels)
    )


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class ExampleMetrics:
    """One scored adversarial example."""

    scenario: str
    technique: str
    identity_id: str
    fold: int
    success: float
    """Fraction of the claimed ids that accepted the example."""
    dissimilarity: float
    """Dissimilarity between the adversarial template and the attacked target image."""
    ssim: float
    linf: float


def _mean(values: collections.Iterable[float]) -> Option[float]:
    collected = list(values)
    if not collected:
        return nothing_unchecked()
    return Some(statistics.fmean(collected))


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class MetricReport:
    """Aggregated metrics of one technique.

    The white-box and gray-box rates are empty when that scenario was not run.
    The remaining means cover every row, both scenarios score the same
    adversarial examples.
    """

    technique: str
    asr_white: Option[float]
    asr_gray: Option[float]
    mean_dissimilarity: float
    mean_ssim: float
    mean_linf: float
    rows: tuple[ExampleMetrics, ...]

    @classmethod
    def from_rows(cls, technique: str, rows: collections.Iterable[ExampleMetrics]) -> MetricReport:
        """Aggregate the rows of `technique`, rows of other techniques are skipped."""
        own = tuple(row for row in rows if row.technique == technique)
        if not own:
            raise ValueError(f"no rows for technique {technique!r}")

        # Each adversarial example counts once for the perceptual means.
        unique = {(row.identity_id, row.fold): row for row in own}.values()
        return cls(
            technique=technique,
            asr_white=_mean(row.success for row in own if row.scenario == "S1"),
            asr_gray=_mean(row.success for row in own if row.scenario == "S2"),
            mean_dissimilarity=statistics.fmean(row.dissimilarity for row in unique),
            mean_ssim=statistics.fmean(row.ssim for row in unique),
            mean_linf=statistics.fmean(row.linf for row in unique),
            rows=own,
        )

    def median_dissimilarity(self) -> float:
        return statistics.median(
            {(row.identity_id, row.fold): row.dissimilarity for row in self.rows}.values()
        )
