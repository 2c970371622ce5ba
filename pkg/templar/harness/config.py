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
"""Experiment configuration.

A configuration is a tree of frozen dataclasses. It is read from `config.json`
through `ExperimentConfig.try_from`, written back through `into`, and every
missing entry falls back to the profile it names, `desk` unless told otherwise.

Example
-------
```py
from sain import Ok, Err
from templar.harness import config

match config.load_config("config.json"):
    case Ok(cfg):
        print(cfg.dataset.dims)
    case Err(why):
        print(why.message)
```
"""

from __future__ import annotations

__all__ = (
    "PROFILES",
    "Scenario",
    "DatasetConfig",
    "EmbedderConfig",
    "ExperimentConfig",
    "profile",
    "load_config",
    "write_config",
)

import dataclasses
import enum
import json
import pathlib
import re
import types
import typing

from sain import Default
from sain import Err
from sain import Ok
from sain.convert import Into
from sain.convert import TryFrom

from templar import error
from templar.attacks import AttackConfig
from templar.attacks import Technique

if typing.TYPE_CHECKING:
    import collections.abc as collections
    import os

    from sain import Result

    from templar import data

PROFILES: typing.Final = ("desk", "full")
SWEEP_EPSILONS: typing.Final = (0.003, 0.01, 0.03, 0.1, 0.3)
_NAME: typing.Final = re.compile(r"[A-Za-z0-9_-]+")


@typing.final
class Scenario(enum.Enum):
    S1 = "S1"
    """White-box, the attacked target image is the enrolled template."""
    S2 = "S2"
    """Gray-box, the target image is held out and the other samples are enrolled."""


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class DatasetConfig:
    n_identities: int = 30
    samples_per_identity: int = 5
    width: int = 80
    height: int = 80
    channels: int = 1
    intra_noise_sigma: float = 0.15
    seed: int = 7
    source_identities: int = 30
    """Identities in the attacker's own pool, disjoint from the gallery. `0` draws sources
    from the gallery instead."""

    def __post_init__(self) -> None:
        if self.n_identities < 2:
            raise ValueError("need at least two identities")
        if self.samples_per_identity < 2:
            raise ValueError("need at least two samples per identity")
        if self.width < 1 or self.height < 1 or self.channels not in (1, 3):
            raise ValueError(f"bad image dims {self.dims}")
        if not self.intra_noise_sigma >= 0.0:
            raise ValueError("noise sigma must be non-negative")
        if self.seed < 0 or self.source_identities < 0:
            raise ValueError("seeds and counts must be non-negative")

    @property
    def dims(self) -> data.Dims:
        return (self.width, self.height, self.channels)


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class EmbedderConfig:
    name: str = "reference"
    """Labels the model in every report, letters, digits, `-` and `_` only."""
    feature_dim: int = 16
    seed: int = 11

    def __post_init__(self) -> None:
        if not _NAME.fullmatch(self.name):
            raise ValueError(f"bad model name {self.name!r}")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def _table_defaults() -> dict[Technique, AttackConfig]:
    return {
        Technique.FGSM_CBCE: AttackConfig(epsilon=0.03, alpha=0.03, t_max=1),
        Technique.PGD_CBCE: AttackConfig(epsilon=0.03, alpha=0.001, t_max=40),
        Technique.SGADV: AttackConfig(epsilon=0.03, alpha=0.001, t_max=1000, tau_conv=1e-4),
    }


# Keys of an attack section, the seed, objective and threshold are filled at run time.
_ATTACK_KEYS: typing.Final = ("epsilon", "alpha", "t_max", "tau_conv")


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class ExperimentConfig(
    Default["ExperimentConfig"],
    TryFrom["collections.Mapping[str, typing.Any]", error.ConfigError],
    Into[dict[str, typing.Any]],
):
    """Everything a bench run depends on.

    Parameters
    ----------
    dataset : `DatasetConfig`
        Gallery generation.
    embedders : `tuple[EmbedderConfig, ...]`
        The verifiers under attack. Each is calibrated on its own and reported
        under its name.
    techniques : `Mapping[Technique, AttackConfig]`
        The techniques to run, in report order, with their hyperparameters.
    scenarios : `tuple[Scenario, ...]`
        Which scenarios `bench` runs.
    seed : `int`
        The global seed every per-example seed is derived from.
    output_dir : `str`
        Where reports land.
    workers : `int`
        Attack processes, `1` runs in process.
    trace_examples : `int`
        Loss traces written per technique.
    ssim_window : `int`
        Side of the uniform SSIM window.
    ssim_kind : `str`
        `"uniform"` or `"gaussian"`.
    sweep_epsilons : `tuple[float, ...]`
        The budgets `sweep` runs every technique at.
    """

    dataset: DatasetConfig = dataclasses.field(default_factory=DatasetConfig)
    embedders: tuple[EmbedderConfig, ...] = (EmbedderConfig(),)
    techniques: collections.Mapping[Technique, AttackConfig] = dataclasses.field(
        default_factory=lambda: types.MappingProxyType(_table_defaults())
    )
    scenarios: tuple[Scenario, ...] = (Scenario.S1, Scenario.S2)
    seed: int = 2022
    output_dir: str = "results"
    workers: int = 1
    trace_examples: int = 3
    ssim_window: int = 8
    ssim_kind: str = "uniform"
    sweep_epsilons: tuple[float, ...] = SWEEP_EPSILONS

    def __post_init__(self) -> None:
        if not self.embedders:
            raise ValueError("at least one embedder must be configured")
        if len({e.name for e in self.embedders}) != len(self.embedders):
            raise ValueError("embedder names must be unique")
        if not self.sweep_epsilons or not all(0.0 < e <= 1.0 for e in self.sweep_epsilons):
            raise ValueError("sweep epsilons must lie in (0, 1]")
        if not self.techniques:
            raise ValueError("at least one technique must be configured")
        if not self.scenarios:
            raise ValueError("at least one scenario must be selected")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.trace_examples < 0:
            raise ValueError("trace_examples must be non-negative")
        if self.ssim_kind not in ("uniform", "gaussian"):
            raise ValueError(f"unknown ssim kind {self.ssim_kind!r}")
        if self.ssim_window < 1 or self.ssim_window > min(self.dataset.width, self.dataset.height):
            raise ValueError(f"ssim window {self.ssim_window} does not fit the images")
        for technique, attack in self.techniques.items():
            if technique is not Technique.FGSM_CBCE and not attack.reaches_border():
                raise ValueError(f"{technique.value}: t_max * alpha cannot reach epsilon")

    @staticmethod
    def default() -> ExperimentConfig:
        """The desk profile."""
        return ExperimentConfig()

    @classmethod
    def full(cls) -> ExperimentConfig:
        """The full-size profile.

        158 identities of ten 112x112 color samples, a disjoint pool of as many
        source identities and two 512 feature verifiers.
        """
        return cls(
            dataset=DatasetConfig(
                n_identities=158,
                samples_per_identity=10,
                width=112,
                height=112,
                channels=3,
                source_identities=158,
            ),
            embedders=(
                EmbedderConfig(name="ref512-s11", feature_dim=512, seed=11),
                EmbedderConfig(name="ref512-s13", feature_dim=512, seed=13),
            ),
        )

    @classmethod
    def try_from(
        cls, value: collections.Mapping[str, typing.Any]
    ) -> Result[ExperimentConfig, error.ConfigError]:
        """Parse a decoded `config.json`.

        Missing entries come from the profile named by the `"profile"` key.
        Unknown keys, wrong types and values that fail validation are errors.
        """
        named = profile(str(value.get("profile", "desk")))
        if named.is_err():
            return Err(named.unwrap_err())
        base = named.unwrap()

        overrides = {k: v for k, v in value.items() if k != "profile"}
        nested = ("dataset", "embedders", "techniques", "scenarios", "ssim", "sweep_epsilons")
        plain = {k: v for k, v in overrides.items() if k not in nested}
        changes: dict[str, typing.Any] = {}

        match _merge(base, plain, ""):
            case Ok(fields):
                changes.update(fields)
            case Err(why):
                return Err(why)

        if "dataset" in overrides:
            match _section(base.dataset, overrides["dataset"], "dataset"):
                case Ok(parsed):
                    changes["dataset"] = parsed
                case Err(why):
                    return Err(why)

        if "embedders" in overrides:
            match _embedders(base.embedder, overrides["embedders"]):
                case Ok(embedders):
                    changes["embedders"] = embedders
                case Err(why):
                    return Err(why)

        if "sweep_epsilons" in overrides:
            epsilons = overrides["sweep_epsilons"]
            if not isinstance(epsilons, list) or not all(
                isinstance(e, (int, float)) and not isinstance(e, bool) for e in epsilons
            ):
                return Err(error.ConfigError("sweep_epsilons", "expected a list of numbers"))
            changes["sweep_epsilons"] = tuple(float(e) for e in epsilons)

        if "ssim" in overrides:
            ssim = overrides["ssim"]
            if not isinstance(ssim, dict) or not set(ssim) <= {"window", "kind"}:
                return Err(error.ConfigError("ssim", "expected {window, kind}"))
            changes["ssim_window"] = ssim.get("window", base.ssim_window)
            changes["ssim_kind"] = ssim.get("kind", base.ssim_kind)

        if "scenarios" in overrides:
            try:
                changes["scenarios"] = tuple(Scenario(s) for s in overrides["scenarios"])
            except (ValueError, TypeError):
                return Err(error.ConfigError("scenarios", "expected a list of S1 and S2"))

        if "techniques" in overrides:
            match _techniques(overrides["techniques"]):
                case Ok(techniques):
                    changes["techniques"] = techniques
                case Err(why):
                    return Err(why)

        try:
            return Ok(dataclasses.replace(base, **changes))
        except (ValueError, TypeError) as exc:
            return Err(error.ConfigError("", str(exc)))

    def into(self) -> dict[str, typing.Any]:
        """The JSON document `try_from` reads back into an equal config."""
        return {
            "seed": self.seed,
            "output_dir": self.output_dir,
            "workers": self.workers,
            "trace_examples": self.trace_examples,
            "scenarios": [s.value for s in self.scenarios],
            "ssim": {"window": self.ssim_window, "kind": self.ssim_kind},
            "dataset": dataclasses.asdict(self.dataset),
            "embedders": [dataclasses.asdict(e) for e in self.embedders],
            "sweep_epsilons": list(self.sweep_epsilons),
            "techniques": {
                technique.value: {key: getattr(attack, key) for key in _ATTACK_KEYS}
                for technique, attack in self.techniques.items()
            },
        }

    def attack_config(self, technique: Technique) -> AttackConfig:
        """The configured hyperparameters of `technique`.

        Raises
        ------
        `KeyError`
            If `technique` is not configured.
        """
        return self.techniques[technique]

    @property
    def embedder(self) -> EmbedderConfig:
        """The first configured verifier, the one `attack` and `gen-data` default to."""
        return self.embedders[0]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.into() == other.into()


def profile(name: str) -> Result[ExperimentConfig, error.ConfigError]:
    """A named profile, one of `PROFILES`."""
    if name == "desk":
        return Ok(ExperimentConfig.default())
    if name == "full":
        return Ok(ExperimentConfig.full())
    return Err(error.ConfigError("profile", f"unknown profile {name!r}, expected one of {PROFILES}"))


def _coerce(default: object, value: object, key: str) -> Result[typing.Any, error.ConfigError]:
    # bool is an int subclass, it never stands in for a number here.
    if isinstance(value, bool) or value is None:
        return Err(error.ConfigError(key, f"unexpected {value!r}"))
    if isinstance(default, bool):
        return Err(error.ConfigError(key, "booleans are not configurable"))
    if isinstance(default, int) and isinstance(value, int):
        return Ok(value)
    if isinstance(default, float) and isinstance(value, (int, float)):
        return Ok(float(value))
    if isinstance(default, str) and isinstance(value, str):
        return Ok(value)
    return Err(error.ConfigError(key, f"expected {type(default).__name__}, got {value!r}"))


def _merge(
    base: typing.Any,
    values: collections.Mapping[str, typing.Any],
    prefix: str,
    *,
    allowed: collections.Iterable[str] | None = None,
) -> Result[dict[str, typing.Any], error.ConfigError]:
    names = set(allowed) if allowed is not None else {f.name for f in dataclasses.fields(base)}
    merged: dict[str, typing.Any] = {}
    for key, value in values.items():
        path = f"{prefix}.{key}" if prefix else key
        if key not in names:
            return Err(error.ConfigError(path, "unknown key"))
        match _coerce(getattr(base, key), value, path):
            case Ok(coerced):
                merged[key] = coerced
            case Err(why):
                return Err(why)
    return Ok(merged)


def _section(base: typing.Any, values: object, prefix: str) -> Result[typing.Any, error.ConfigError]:
    if not isinstance(values, dict):
        return Err(error.ConfigError(prefix, "expected an object"))

    match _merge(base, typing.cast("dict[str, typing.Any]", values), prefix):
        case Ok(changes):
            try:
                return Ok(dataclasses.replace(base, **changes))
            except ValueError as exc:
                return Err(error.ConfigError(prefix, str(exc)))
        case Err(why):
            return Err(why)


def _embedders(
    base: EmbedderConfig, values: object
) -> Result[tuple[EmbedderConfig, ...], error.ConfigError]:
    if not isinstance(values, list) or not values:
        return Err(error.ConfigError("embedders", "expected a non-empty list"))

    parsed: list[EmbedderConfig] = []
    for index, section in enumerate(typing.cast("list[typing.Any]", values)):
        match _section(base, section, f"embedders.{index}"):
            case Ok(embedder):
                parsed.append(embedder)
            case Err(why):
                return Err(why)
    return Ok(tuple(parsed))


def _techniques(
    values: object,
) -> Result[collections.Mapping[Technique, AttackConfig], error.ConfigError]:
    if not isinstance(values, dict) or not values:
        return Err(error.ConfigError("techniques", "expected a non-empty object"))

    defaults = _table_defaults()
    parsed: dict[Technique, AttackConfig] = {}
    for name, section in typing.cast("dict[str, typing.Any]", values).items():
        try:
            technique = Technique(name)
        except ValueError:
            known = ", ".join(t.value for t in Technique)
            return Err(error.ConfigError(f"techniques.{name}", f"unknown technique, expected {known}"))

        prefix = f"techniques.{name}"
        if not isinstance(section, dict):
            return Err(error.ConfigError(prefix, "expected an object"))

        base = defaults[technique]
        match _merge(base, typing.cast("dict[str, typing.Any]", section), prefix, allowed=_ATTACK_KEYS):
            case Ok(changes):
                try:
                    parsed[technique] = base.replace(**changes)
                except ValueError as exc:
                    return Err(error.ConfigError(prefix, str(exc)))
            case Err(why):
                return Err(why)

    return Ok(types.MappingProxyType(parsed))


def load_config(path: str | os.PathLike[str]) -> Result[ExperimentConfig, error.ConfigError]:
    source = pathlib.Path(path)
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
    except OSError as exc:
        return Err(error.ConfigError(str(source), exc.strerror or str(exc)))
    except ValueError as exc:
        return Err(error.ConfigError(str(source), f"not valid JSON: {exc}"))

    if not isinstance(document, dict):
        return Err(error.ConfigError(str(source), "expected a JSON object"))
    return ExperimentConfig.try_from(typing.cast("dict[str, typing.Any]", document))


def write_config(
    config: ExperimentConfig, path: str | os.PathLike[str]
) -> Result[pathlib.Path, error.ConfigError]:
    target = pathlib.Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(config.into(), indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        return Err(error.ConfigError(str(target), exc.strerror or str(exc)))
    return Ok(target)
