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
"""Template-level attacks.

`sgadv` descends the dissimilarity to a target template directly, `fgsm` and
`pgd` descend a clamped cross-entropy on the verifier's decision and serve as
the label-based baselines.

Example
-------
```py
from templar import attacks

config = attacks.AttackConfig.default()
result = attacks.sgadv(model, source, target, config)
print(result.stop_reason, result.final_dissimilarity)
```
"""

from __future__ import annotations

__all__ = (
    # objective.py
    "objective",
    "Objective",
    "sgadv_loss",
    "sgadv_loss_cograd",
    "cbce_loss",
    "cbce_loss_cograd",
    # stop.py
    "stop",
    "StopReason",
    "StopState",
    "check_stop",
    # algorithms.py
    "algorithms",
    "Technique",
    "AttackConfig",
    "AttackResult",
    "fgsm",
    "pgd",
    "sgadv",
    "run_technique",
)

from . import algorithms
from . import objective
from . import stop
from .algorithms import AttackConfig
from .algorithms import AttackResult
from .algorithms import Technique
from .algorithms import fgsm
from .algorithms import pgd
from .algorithms import run_technique
from .algorithms import sgadv
from .objective import Objective
from .objective import cbce_loss
from .objective import cbce_loss_cograd
from .objective import sgadv_loss
from .objective import sgadv_loss_cograd
from .stop import StopReason
from .stop import StopState
from .stop import check_stop
