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
"""The experiment harness: configuration, scenarios, reports and the command line.

Example
-------
```py
from templar import harness

config = harness.ExperimentConfig.default()
bench = harness.run_bench(harness.Experiment.build(config))
harness.write_report(bench, config.output_dir).unwrap()
```
"""

from __future__ import annotations

__all__ = (
    # config.py
    "config",
    "Scenario",
    "DatasetConfig",
    "EmbedderConfig",
    "ExperimentConfig",
    "load_config",
    "write_config",
    # scenario.py
    "scenario",
    "AttackKey",
    "Experiment",
    "ExampleOutcome",
    "ScenarioResult",
    "BenchResult",
    "derive_seed",
    "run_s1",
    "run_s2",
    "run_bench",
    "run_models",
    "run_epsilon_sweep",
    "SweepRow",
    "SweepResult",
    # gap.py
    "gap",
    "validate_probability_gap",
    # report.py
    "report",
    "write_report",
    "write_trace",
    "write_sweep",
    "load_results",
    # cli.py
    "cli",
    "main",
)

from . import cli
from . import config
from . import gap
from . import report
from . import scenario
from .cli import main
from .config import DatasetConfig
from .config import EmbedderConfig
from .config import ExperimentConfig
from .config import Scenario
from .config import load_config
from .config import write_config
from .gap import validate_probability_gap
from .report import load_results
from .report import write_report
from .report import write_sweep
from .report import write_trace
from .scenario import AttackKey
from .scenario import BenchResult
from .scenario import ExampleOutcome
from .scenario import Experiment
from .scenario import ScenarioResult
from .scenario import SweepResult
from .scenario import SweepRow
from .scenario import derive_seed
from .scenario import run_bench
from .scenario import run_epsilon_sweep
from .scenario import run_models
from .scenario import run_s1
from .scenario import run_s2
