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
"""Sign-gradient attacks under an L-infinity budget.

Every attack moves against the gradient of its loss, `x - alpha * sign(grad)`
with `sign(0) = 0`, then clips back into the intersection of the budget ball
around the source and the pixel box `[0, 1]`. Pixels whose gradient is exactly
zero do not move, which is what keeps a clamped cross-entropy attack still once
it has crossed the threshold.
"""

from __future__ import annotations

__all__ = (
    "Technique",
    "AttackConfig",
    "AttackResult",
    "fgsm",
    "pgd",
    "sgadv",
    "run_technique",
)

import dataclasses
import enum
import logging
import typing

import numpy as np
from sain import Default

from templar import data
from templar.attacks import objective as _objective
from templar.attacks import stop

if typing.TYPE_CHECKING:
    from templar import embedding

_LOGGER = logging.getLogger(__name__)
_BORDER_TOLERANCE: typing.Final = 1e-12


@typing.final
class Technique(enum.Enum):
    """The attacks compared by the harness."""

    FGSM_CBCE = "FGSM-CBCE"
    PGD_CBCE = "PGD-CBCE"
    SGADV = "SGADV"

    @property
    def objective(self) -> _objective.Objective:
        if self is Technique.SGADV:
            return _objective.Objective.SIMILARITY
        return _objective.Objective.CBCE


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class AttackConfig(Default["AttackConfig"]):
    """Hyperparameters of one attack.

    Parameters
    ----------
    epsilon : `float`
        L-infinity budget around the source image.
    alpha : `float`
        Step size of every iteration.
    t_max : `int`
        Iteration cap.
    tau_conv : `float`
        Convergence tolerance of the early stopping rule.
    seed : `int`
        Seed of the random start.
    objective : `Objective`
        The loss the attack descends.
    cbce_tau : `float | None`
        The verifier threshold, required by the cross-entropy objective.
    """

    epsilon: float = 0.03
    alpha: float = 0.001
    t_max: int = 1000
    tau_conv: float = 1e-4
    seed: int = 0
    objective: _objective.Objective = _objective.Objective.SIMILARITY
    cbce_tau: float | None = None

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not self.alpha > 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.t_max < 1:
            raise ValueError(f"t_max must be at least 1, got {self.t_max}")
        if not self.tau_conv >= 0.0:
            raise ValueError(f"tau_conv must be non-negative, got {self.tau_conv}")
        if self.seed < 0:
            raise ValueError(f"seed must be non-negative, got {self.seed}")
        if self.cbce_tau is not None and not 0.0 < self.cbce_tau < 1.0:
            raise ValueError(f"cbce_tau must lie in (0, 1), got {self.cbce_tau}")

    @staticmethod
    def default() -> AttackConfig:
        return AttackConfig()

    def reaches_border(self) -> bool:
        """Whether `t_max` steps of `alpha` can walk from the source to the budget border."""
        return self.t_max * self.alpha >= self.epsilon - _BORDER_TOLERANCE

    def replace(self, **changes: typing.Any) -> AttackConfig:
        return dataclasses.replace(self, **changes)


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class AttackResult:
    """The outcome of one attack.

    The traces are indexed by step, index 0 holds the value at the starting
    point, so they are one longer than `steps_taken`. `movement[t]` is the
    largest pixel change of step `t + 1`.
    """

    adversarial: data.Image
    loss_trace: tuple[float, ...]
    dissimilarity_trace: tuple[float, ...]
    movement: tuple[float, ...]
    steps_taken: int
    stop_reason: stop.StopReason

    @property
    def final_dissimilarity(self) -> float:
        """Dissimilarity between the adversarial template and the target template."""
        return self.dissimilarity_trace[-1]

    @property
    def best_step(self) -> int:
        """The first step holding the lowest loss seen."""
        return int(np.argmin(self.loss_trace))

    @property
    def best_loss(self) -> float:
        return self.loss_trace[self.best_step]


class _Walker:
    # Shared state of one attack run.

    __slots__ = ("model", "config", "f_target", "source", "lower", "upper")

    def __init__(
        self,
        model: embedding.EmbeddingModel,
        source: data.Image,
        target: data.Image,
        config: AttackConfig,
    ) -> None:
        if source.dims != target.dims:
            raise ValueError(f"source is {source.dims} but target is {target.dims}")
        if source.dims != model.input_dims:
            raise ValueError(f"model takes {model.input_dims} images, got {source.dims}")
        if config.objective is _objective.Objective.CBCE and config.cbce_tau is None:
            raise ValueError("the cbce objective needs cbce_tau")

        self.model = model
        self.config = config
        self.f_target = model.embed(target)
        self.source = source.pixels
        self.lower = np.maximum(self.source - config.epsilon, 0.0)
        self.upper = np.minimum(self.source + config.epsilon, 1.0)

    def evaluate(self, pixels: data.FloatArray) -> tuple[float, float, data.FloatArray]:
        image = data.Image.from_array_unchecked(pixels)
        features = self.model.embed(image)
        loss, cograd = _objective.loss_and_cograd(
            self.config.objective, features, self.f_target, self.config.cbce_tau
        )
        return loss, _objective.sgadv_loss(features, self.f_target), cograd

    def step(
        self, pixels: data.FloatArray, cograd: data.FloatArray, size: float
    ) -> data.FloatArray:
        gradient = self.model.input_gradient(data.Image.from_array_unchecked(pixels), cograd)
        return np.clip(pixels - size * np.sign(gradient), self.lower, self.upper)


def _finish(
    pixels: data.FloatArray,
    losses: list[float],
    dissimilarities: list[float],
    movement: list[float],
    reason: stop.StopReason,
) -> AttackResult:
    return AttackResult(
        adversarial=data.Image.from_array(pixels),
        loss_trace=tuple(losses),
        dissimilarity_trace=tuple(dissimilarities),
        movement=tuple(movement),
        steps_taken=len(movement),
        stop_reason=reason,
    )


def fgsm(
    model: embedding.EmbeddingModel,
    source: data.Image,
    target: data.Image,
    config: AttackConfig,
) -> AttackResult:
    """One signed step of size `epsilon` from the source.

    Stops with `OneStep`, `alpha`, `t_max` and the seed are not used.
    """
    walker = _Walker(model, source, target, config)
    pixels = np.array(walker.source, copy=True)
    loss, dissim, cograd = walker.evaluate(pixels)
    nxt = walker.step(pixels, cograd, config.epsilon)
    next_loss, next_dissim, _ = walker.evaluate(nxt)
    return _finish(
        nxt,
        [loss, next_loss],
        [dissim, next_dissim],
        [float(np.max(np.abs(nxt - pixels)))],
        stop.StopReason.ONE_STEP,
    )


def _iterate(walker: _Walker, *, early_stopping: bool) -> AttackResult:
    config = walker.config
    rng = data.rng_for(config.seed)
    pixels = np.clip(
        walker.source + rng.uniform(-config.epsilon, config.epsilon, walker.source.shape),
        0.0,
        1.0,
    )
    loss, dissim, cograd = walker.evaluate(pixels)
    losses = [loss]
    dissimilarities = [dissim]
    movement: list[float] = []
    state = stop.StopState()
    reason = stop.StopReason.MAX_STEPS

    for t in range(1, config.t_max + 1):
        nxt = walker.step(pixels, cograd, config.alpha)
        movement.append(float(np.max(np.abs(nxt - pixels))))
        pixels = nxt
        next_loss, dissim, cograd = walker.evaluate(pixels)
        state.push(loss - next_loss)
        loss = next_loss
        losses.append(loss)
        dissimilarities.append(dissim)

        if early_stopping:
            decided = stop.check_stop(state, t, config.t_max, config.tau_conv)
            if decided.is_some():
                reason = decided.unwrap()
                break

    return _finish(pixels, losses, dissimilarities, movement, reason)


def _check_border(config: AttackConfig) -> None:
    if not config.reaches_border():
        raise ValueError(
            f"t_max * alpha = {config.t_max * config.alpha} cannot reach epsilon = {config.epsilon}"
        )


def pgd(
    model: embedding.EmbeddingModel,
    source: data.Image,
    target: data.Image,
    config: AttackConfig,
) -> AttackResult:
    """Projected gradient descent from a seeded uniform start inside the budget.

    Runs exactly `t_max` steps on `config.objective` and returns the last iterate.

    Raises
    ------
    `ValueError`
        If `t_max * alpha < epsilon` or the image dims disagree.
    """
    _check_border(config)
    return _iterate(_Walker(model, source, target, config), early_stopping=False)


def sgadv(
    model: embedding.EmbeddingModel,
    source: data.Image,
    target: data.Image,
    config: AttackConfig,
) -> AttackResult:
    """Projected descent on the similarity loss with early stopping.

    Same start and step as `pgd`, after every step the loss decrease is pushed
    into a window of `stop.WINDOW` and `stop.check_stop` may end the run early.
    The last iterate is returned, the lowest loss seen is kept on the result as
    `best_loss`.

    Example
    -------
    ```py
    result = sgadv(model, source, target, AttackConfig(seed=derive_seed(...)))
    print(result.stop_reason, result.final_dissimilarity)
    ```

    Raises
    ------
    `ValueError`
        If the objective is not the similarity loss or `t_max * alpha < epsilon`.
    """
    if config.objective is not _objective.Objective.SIMILARITY:
        raise ValueError("sgadv only descends the similarity loss")
    _check_border(config)
    return _iterate(_Walker(model, source, target, config), early_stopping=True)


def run_technique(
    technique: Technique,
    model: embedding.EmbeddingModel,
    source: data.Image,
    target: data.Image,
    config: AttackConfig,
) -> AttackResult:
    """Run `technique` with `config`, forcing the objective the technique uses."""
    config = config.replace(objective=technique.objective)
    match technique:
        case Technique.FGSM_CBCE:
            result = fgsm(model, source, target, config)
        case Technique.PGD_CBCE:
            result = pgd(model, source, target, config)
        case Technique.SGADV:
            result = sgadv(model, source, target, config)

    _LOGGER.debug(
        "%s seed=%d steps=%d stop=%s d=%.6f",
        technique.value,
        config.seed,
        result.steps_taken,
        result.stop_reason.value,
        result.final_dissimilarity,
    )
    return result
