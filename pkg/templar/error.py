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
"""Errors returned inside `sain.Result` values.

Contract violations, a wrong shape or an out of range parameter, raise `ValueError`
at the call site. Everything that can go wrong at run time while the caller did
nothing wrong, a corrupt file or an identity that was never enrolled, is returned
as `Err` holding one of the types below.

Example
-------
```py
from sain import Ok, Err
from templar import data

match data.load_dataset("results/dataset"):
    case Ok(dataset):
        print(len(dataset))
    case Err(why):
        print(why.message)
```
"""

from __future__ import annotations

__all__ = (
    "TemplarError",
    "DatasetError",
    "ModelFileError",
    "SystemFileError",
    "ConfigError",
    "ReportError",
    "UnknownIdentity",
    "ScenarioMissing",
    "InvariantViolation",
)

import dataclasses
import typing

from sain import Error
from sain import Some

if typing.TYPE_CHECKING:
    import pathlib

    from sain import Option


class TemplarError(Error):
    """The base error every `Err` of this package holds."""

    __slots__ = ()

    def source(self) -> Option[type[Error]]:
        return Some(TemplarError)


@dataclasses.dataclass(repr=False, eq=False)
class DatasetError(TemplarError):
    """A dataset directory, manifest or image file could not be read or written."""

    path: pathlib.Path
    reason: str

    def __post_init__(self) -> None:
        self.message = f"{self.path}: {self.reason}"

    def description(self) -> str:
        return f"dataset file {self.path} is unusable"


@dataclasses.dataclass(repr=False, eq=False)
class ModelFileError(TemplarError):
    """A serialized embedder is truncated, has a bad header or does not exist."""

    path: pathlib.Path
    reason: str

    def __post_init__(self) -> None:
        self.message = f"{self.path}: {self.reason}"


@dataclasses.dataclass(repr=False, eq=False)
class SystemFileError(TemplarError):
    """A saved authentication system is malformed or was built for another model."""

    path: pathlib.Path
    reason: str

    def __post_init__(self) -> None:
        self.message = f"{self.path}: {self.reason}"


@dataclasses.dataclass(repr=False, eq=False)
class ConfigError(TemplarError):
    """An experiment configuration failed validation.

    `key` is the dotted path of the offending entry, `"techniques.SGADV.alpha"` for example.
    """

    key: str
    reason: str

    def __post_init__(self) -> None:
        self.message = f"{self.key}: {self.reason}" if self.key else self.reason

    def description(self) -> str:
        return "invalid experiment configuration"


@dataclasses.dataclass(repr=False, eq=False)
class ReportError(TemplarError):
    """A report file could not be written or a results file could not be read back."""

    path: pathlib.Path
    reason: str

    def __post_init__(self) -> None:
        self.message = f"{self.path}: {self.reason}"


@dataclasses.dataclass(repr=False, eq=False)
class UnknownIdentity(TemplarError):
    """A verification named an identity that has no enrolled template."""

    identity_id: str

    def __post_init__(self) -> None:
        self.message = f"identity {self.identity_id!r} is not enrolled"


@dataclasses.dataclass(repr=False, eq=False)
class ScenarioMissing(TemplarError):
    """An analysis needs the results of a scenario that has not been run."""

    scenario: str

    def __post_init__(self) -> None:
        self.message = f"scenario {self.scenario} has not been run"


@dataclasses.dataclass(repr=False, eq=False)
class InvariantViolation(TemplarError):
    """A run-time check on an attack outcome failed.

    These are collected by the harness instead of raised, the run finishes and
    the command line exits with status 2.
    """

    check: str
    subject: str
    detail: str

    def __post_init__(self) -> None:
        self.message = f"[{self.check}] {self.subject}: {self.detail}"

    def description(self) -> str:
        return f"the {self.check} check failed"
