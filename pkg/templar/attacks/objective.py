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
"""Attack losses and their gradients with respect to the adversarial template.

Both losses are minimized. Their cotangents are handed to
`EmbeddingModel.input_gradient`, the normalization inside the embedder already
projects out the radial component, so the similarity loss cotangent reduces
to `-target / 2`.
"""

from __future__ import annotations

__all__ = (
    "LOG_FLOOR",
    "Objective",
    "sgadv_loss",
    "sgadv_loss_cograd",
    "cbce_loss",
    "cbce_loss_cograd",
    "loss_and_cograd",
)

import enum
import math
import typing

import numpy as np

from templar import embedding
from templar import metrics

if typing.TYPE_CHECKING:
    from templar import data

LOG_FLOOR: typing.Final = 1e-12
"""The clamped confidence is floored here before the log."""


@typing.final
class Objective(enum.Enum):
    SIMILARITY = "similarity"
    """Minimize the dissimilarity to the target template."""
    CBCE = "cbce"
    """Clamped binary cross-entropy on the verifier's accept decision."""


def _check(f_adv: embedding.FeatureVector, f_target: embedding.FeatureVector) -> None:
    if f_adv.dim != f_target.dim:
        raise ValueError(f"dimension mismatch {f_adv.dim} != {f_target.dim}")


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")


def sgadv_loss(f_adv: embedding.FeatureVector, f_target: embedding.FeatureVector) -> float:
    """The dissimilarity between the two templates, zero when they coincide."""
    _check(f_adv, f_target)
    return metrics.dissimilarity(f_adv, f_target)


def sgadv_loss_cograd(
    f_adv: embedding.FeatureVector, f_target: embedding.FeatureVector
) -> data.FloatArray:
    _check(f_adv, f_target)
    return -0.5 * f_target.values


def _confidence(d: float, tau: float) -> float:
    return min(1.0 - d, 1.0 - tau) / (1.0 - tau)


def cbce_loss(
    f_adv: embedding.FeatureVector, f_target: embedding.FeatureVector, tau: float
) -> float:
    """`-log(min(1 - d, 1 - tau) / (1 - tau))` with `d` the dissimilarity.

    Zero once the template is inside the acceptance region, `d <= tau`, the
    confidence is floored at `LOG_FLOOR` so the loss stays finite at `d = 1`.

    Example
    -------
    ```py
    # d = 0.75 and tau = 0.5 gives log(2)
    ```
    """
    _check(f_adv, f_target)
    _check_tau(tau)
    confidence = _confidence(metrics.dissimilarity(f_adv, f_target), tau)
    if confidence >= 1.0:
        return 0.0
    return -math.log(max(confidence, LOG_FLOOR))


def cbce_loss_cograd(
    f_adv: embedding.FeatureVector, f_target: embedding.FeatureVector, tau: float
) -> data.FloatArray:
    """Exactly zero when `d <= tau` or the floor is active, `-target / (2 (1 - d))` otherwise."""
    _check(f_adv, f_target)
    _check_tau(tau)
    d = metrics.dissimilarity(f_adv, f_target)
    confidence = _confidence(d, tau)
    if confidence >= 1.0 or confidence <= LOG_FLOOR:
        return np.zeros(f_target.dim)
    return -f_target.values / (2.0 * (1.0 - d))


def loss_and_cograd(
    objective: Objective,
    f_adv: embedding.FeatureVector,
    f_target: embedding.FeatureVector,
    tau: float | None = None,
) -> tuple[float, data.FloatArray]:
    """Evaluate `objective` and its cotangent together.

    Raises
    ------
    `ValueError`
        If the objective is `CBCE` and `tau` is missing.
    """
    if objective is Objective.SIMILARITY:
        return sgadv_loss(f_adv, f_target), sgadv_loss_cograd(f_adv, f_target)
    if tau is None:
        raise ValueError("the cbce objective needs the verifier threshold")
    return cbce_loss(f_adv, f_target, tau), cbce_loss_cograd(f_adv, f_target, tau)
