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
"""The early stopping rule of the similarity attack."""

from __future__ import annotations

__all__ = ("WINDOW", "StopReason", "StopState", "check_stop")

import collections
import enum
import typing

from sain import Some
from sain.option import nothing_unchecked

if typing.TYPE_CHECKING:
    from collections.abc import Iterable

    from sain import Option

WINDOW: typing.Final = 5
"""How many recent loss decreases the rule looks at."""


@typing.final
class StopReason(enum.Enum):
    MAX_STEPS = "MaxSteps"
    CONVERGED = "Converged"
    SETTLED = "Settled"
    ONE_STEP = "OneStep"


@typing.final
class StopState:
    """A bounded window of the most recent per-step loss decreases.

    A decrease is `J(x_t) - J(x_{t+1})`, positive while the attack makes progress.
    """

    __slots__ = ("_deltas",)

    def __init__(self, deltas: Iterable[float] = ()) -> None:
        self._deltas: collections.deque[float] = collections.deque(deltas, maxlen=WINDOW)

    def push(self, delta: float) -> None:
        self._deltas.append(delta)

    @property
    def deltas(self) -> tuple[float, ...]:
        return tuple(self._deltas)

    def is_full(self) -> bool:
        return len(self._deltas) == WINDOW

    def __len__(self) -> int:
        return len(self._deltas)

    def __repr__(self) -> str:
        return f"StopState({list(self._deltas)!r})"


def check_stop(
    state: StopState, t: int, t_max: int, tau_conv: float
) -> Option[StopReason]:
    """Decide whether the attack stops after step `t`.

    Checked in order:

    * `MaxSteps` once `t` reaches `t_max`.
    * Nothing else until the window is full.
    * `Converged` when every decrease is within `tau_conv`.
    * `Settled` when at least two of the decreases in the window are not positive.

    Example
    -------
    ```py
    state = StopState([0.01, -0.002, 0.003, -0.001, 0.004])
    assert check_stop(state, 10, 1000, 1e-4).unwrap() is StopReason.SETTLED
    ```
    """
    if t >= t_max:
        return Some(StopReason.MAX_STEPS)

    if not state.is_full():
        return nothing_unchecked()

    deltas = state.deltas
    if all(abs(delta) <= tau_conv for delta in deltas):
        return Some(StopReason.CONVERGED)

    if sum(1 for delta in deltas if delta <= 0.0) >= 2:
        return Some(StopReason.SETTLED)

    return nothing_unchecked()
