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
"""Threshold based verification over enrolled templates.

An image claiming identity `i` is accepted when the dissimilarity between its
template and the one enrolled for `i` is at most `tau`. The threshold comes from
the equal error rate of a benign score sample, see `calibrate_threshold`.

Example
-------
```py
from templar import authsys

system = authsys.AuthSystem(model)
for identity_id, index, image in dataset.iter_samples():
    system.enroll(dataset.sample_key(identity_id, index), image)

scores = authsys.sample_scores(dataset, model, seed=3)
tau, eer = system.calibrate(scores)
verdict = system.verify("id0003/0", claim).unwrap()
```
"""

from __future__ import annotations

__all__ = (
    "ScoreSets",
    "Verdict",
    "RocPoint",
    "AuthSystem",
    "calibrate_threshold",
    "sample_scores",
    "roc",
    "attacked_roc",
    "auc",
    "save_system",
    "load_system",
)

import itertools
import json
import logging
import math
import pathlib
import types
import typing

import numpy as np
from sain import Err
from sain import Ok
from sain import Some
from sain.option import nothing_unchecked

from templar import data
from templar import embedding
from templar import error
from templar import metrics

if typing.TYPE_CHECKING:
    import collections.abc as collections
    import os

    from sain import Option
    from sain import Result

_LOGGER = logging.getLogger(__name__)
_FORMAT: typing.Final = 1


class ScoreSets(typing.NamedTuple):
    """Benign dissimilarity scores, `genuine` from same-identity pairs."""

    genuine: tuple[float, ...]
    imposter: tuple[float, ...]


class Verdict(typing.NamedTuple):
    accepted: bool
    score: float


class RocPoint(typing.NamedTuple):
    """One operating point, a claim is accepted when its score is at most `threshold`."""

    threshold: float
    fpr: float
    tpr: float


@typing.final
class AuthSystem:
    """A verifier holding one template per enrolled id.

    The system is mutable until `calibrate` or `freeze` is called, after that
    enrollment raises and the instance can be shared between threads for
    read-only verification.

    Parameters
    ----------
    model : `EmbeddingModel`
        The embedder templates are computed with.
    threshold_tau : `float | None`
        A fixed acceptance threshold in `(0, 1)`, leave unset and call `calibrate`.
    """

    __slots__ = ("_model", "_templates", "_tau", "_eer", "_frozen")

    def __init__(
        self, model: embedding.EmbeddingModel, threshold_tau: float | None = None
    ) -> None:
        self._model = model
        self._templates: dict[str, embedding.FeatureVector] = {}
        self._tau: float | None = None
        self._eer: float | None = None
        self._frozen = False
        if threshold_tau is not None:
            self.set_threshold(threshold_tau)

    @classmethod
    def restore(
        cls,
        model: embedding.EmbeddingModel,
        templates: collections.Mapping[str, embedding.FeatureVector],
        threshold_tau: float,
        eer: float | None = None,
    ) -> AuthSystem:
        """Rebuild a frozen system from stored templates without re-embedding anything."""
        system = cls(model, threshold_tau)
        system._templates.update(templates)
        system._eer = eer
        system.freeze()
        return system

    @property
    def model(self) -> embedding.EmbeddingModel:
        return self._model

    @property
    def threshold_tau(self) -> float:
        """The acceptance threshold.

        Raises
        ------
        `RuntimeError`
            If no threshold was set or calibrated.
        """
        if self._tau is None:
            raise RuntimeError("the system has no threshold, calibrate it first")
        return self._tau

    @property
    def eer(self) -> Option[float]:
        """The equal error rate measured by `calibrate`, if it ran."""
        return Some(self._eer) if self._eer is not None else nothing_unchecked()

    @property
    def enrolled(self) -> collections.Mapping[str, embedding.FeatureVector]:
        return types.MappingProxyType(self._templates)

    def is_frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        self._frozen = True

    def set_threshold(self, tau: float) -> None:
        if self._frozen:
            raise RuntimeError("the system is frozen")
        if not 0.0 < tau < 1.0:
            raise ValueError(f"threshold must lie in (0, 1), got {tau}")
        self._tau = tau

    def enroll(self, identity_id: str, image: data.Image) -> None:
        """Store the template of `image` under `identity_id`, replacing any earlier one.

        Raises
        ------
        `RuntimeError`
            If the system is frozen.
        `ValueError`
            If the image does not match the model's input dims.
        """
        if self._frozen:
            raise RuntimeError("the system is frozen, enrollment is closed")
        self._templates[identity_id] = self._model.embed(image)

    def template(self, identity_id: str) -> Option[embedding.FeatureVector]:
        if (found := self._templates.get(identity_id)) is not None:
            return Some(found)
        return nothing_unchecked()

    def verify(
        self, identity_id: str, claim: data.Image
    ) -> Result[Verdict, error.UnknownIdentity]:
        """Score `claim` against the template enrolled for `identity_id`.

        A score exactly equal to the threshold is accepted.
        """
        if (enrolled := self._templates.get(identity_id)) is None:
            return Err(error.UnknownIdentity(identity_id))

        score = metrics.dissimilarity(self._model.embed(claim), enrolled)
        return Ok(Verdict(score <= self.threshold_tau, score))

    def calibrate(self, scores: ScoreSets) -> tuple[float, float]:
        """Set the threshold at the equal error rate of `scores` and freeze."""
        tau, eer = calibrate_threshold(scores)
        self.set_threshold(tau)
        self._eer = eer
        self.freeze()
        _LOGGER.info("calibrated tau=%.6f at eer=%.4f", tau, eer)
        return tau, eer

    def __len__(self) -> int:
        return len(self._templates)

    def __contains__(self, identity_id: object) -> bool:
        return identity_id in self._templates

    def __repr__(self) -> str:
        tau = "unset" if self._tau is None else f"{self._tau:.6f}"
        return f"AuthSystem(enrolled={len(self)}, tau={tau}, frozen={self._frozen})"


def _rates(
    scores: ScoreSets,
) -> tuple[data.FloatArray, data.FloatArray, data.FloatArray]:
    genuine = np.sort(np.asarray(scores.genuine, dtype=np.float64))
    imposter = np.sort(np.asarray(scores.imposter, dtype=np.float64))
    if genuine.size == 0 or imposter.size == 0:
        raise ValueError("both score populations must be non-empty")

    thresholds = np.unique(np.concatenate((genuine, imposter)))
    fpr = np.searchsorted(imposter, thresholds, side="right") / imposter.size
    fnr = (genuine.size - np.searchsorted(genuine, thresholds, side="right")) / genuine.size
    return thresholds, fpr, fnr


def calibrate_threshold(scores: ScoreSets) -> tuple[float, float]:
    """Find the threshold where false accepts and false rejects balance.

    The sweep runs over every distinct score, a claim with score `s` being
    accepted at threshold `t` when `s <= t`. The first sweep point where the
    false accept rate reaches the false reject rate decides the result. When
    both rates are exactly equal there, `tau` is the midpoint to the next
    sweep point and the equal error rate is that common value. Otherwise both
    are linearly interpolated from the previous point.

    Returns
    -------
    `tuple[float, float]`
        `(tau, eer)`.

    Raises
    ------
    `ValueError`
        If either population is empty.
    """
    grid, fpr, fnr = _rates(scores)
    # A point below every score, nothing accepted.
    thresholds = np.concatenate(([grid[0]], grid))
    fpr = np.concatenate(([0.0], fpr))
    fnr = np.concatenate(([1.0], fnr))
    diff = fpr - fnr

    j = int(np.argmax(diff >= 0.0))
    if diff[j] == 0.0:
        after = j + 1 + int(np.argmax(diff[j + 1 :] > 0.0))
        return float(thresholds[j] + thresholds[after]) / 2.0, float(fpr[j])

    weight = -diff[j - 1] / (diff[j] - diff[j - 1])
    tau = thresholds[j - 1] + weight * (thresholds[j] - thresholds[j - 1])
    eer = fpr[j - 1] + weight * (fpr[j] - fpr[j - 1])
    return float(tau), float(eer)


def roc(scores: ScoreSets) -> list[RocPoint]:
    """The receiver operating curve of `scores`.

    Starts at `(0, 0)` below every score and ends at `(1, 1)`.
    """
    grid, fpr, fnr = _rates(scores)
    points = [RocPoint(-math.inf, 0.0, 0.0)]
    points.extend(
        RocPoint(float(t), float(fa), float(1.0 - fr)) for t, fa, fr in zip(grid, fpr, fnr)
    )
    return points


def attacked_roc(
    genuine: collections.Sequence[float], adversarial: collections.Sequence[float]
) -> list[RocPoint]:
    """The curve with adversarial scores standing in for the imposter population."""
    return roc(ScoreSets(tuple(genuine), tuple(adversarial)))


def auc(points: collections.Sequence[RocPoint]) -> float:
    """Area under a curve by the trapezoidal rule."""
    if len(points) < 2:
        raise ValueError("a curve needs two points")
    fpr = np.fromiter((p.fpr for p in points), dtype=np.float64)
    tpr = np.fromiter((p.tpr for p in points), dtype=np.float64)
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def sample_scores(
    dataset: data.IdentityDataset, model: embedding.EmbeddingModel, seed: int
) -> ScoreSets:
    """Benign scores for calibration.

    Genuine scores come from every same-identity sample pair. Imposter scores
    are as many seeded draws of a sample pair from two different identities.

    Raises
    ------
    `ValueError`
        If the dataset has fewer than two identities.
    """
    if len(dataset) < 2:
        raise ValueError("imposter scores need at least two identities")

    templates = [[model.embed(image) for image in identity.samples] for identity in dataset]
    genuine = tuple(
        metrics.dissimilarity(a, b)
        for samples in templates
        for a, b in itertools.combinations(samples, 2)
    )

    rng = data.rng_for(seed)
    imposter: list[float] = []
    while len(imposter) < len(genuine):
        first, second = (int(i) for i in rng.choice(len(templates), size=2, replace=False))
        a = templates[first][int(rng.integers(len(templates[first])))]
        b = templates[second][int(rng.integers(len(templates[second])))]
        imposter.append(metrics.dissimilarity(a, b))

    _LOGGER.debug("sampled %d genuine and %d imposter scores", len(genuine), len(imposter))
    return ScoreSets(genuine, tuple(imposter))


def _model_reference(model: embedding.EmbeddingModel) -> dict[str, typing.Any]:
    width, height, channels = model.input_dims
    reference: dict[str, typing.Any] = {
        "input_dims": [width, height, channels],
        "feature_dim": model.feature_dim,
    }
    if isinstance(model, embedding.ReferenceEmbedder):
        reference["seed"] = model.seed
    return reference


def save_system(
    system: AuthSystem, path: str | os.PathLike[str]
) -> Result[pathlib.Path, error.SystemFileError]:
    """Write the threshold and every enrolled template as JSON."""
    target = pathlib.Path(path)
    document = {
        "format": _FORMAT,
        "model": _model_reference(system.model),
        "threshold_tau": system.threshold_tau,
        "eer": system.eer.map_or(None, float),
        "templates": {key: list(map(float, vec.values)) for key, vec in system.enrolled.items()},
    }
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(json.dumps(document, indent=1) + "\n", encoding="utf-8")
    except OSError as exc:
        return Err(error.SystemFileError(target, exc.strerror or str(exc)))
    return Ok(target)


def load_system(
    path: str | os.PathLike[str], model: embedding.EmbeddingModel
) -> Result[AuthSystem, error.SystemFileError]:
    """Read a system written by `save_system` back, frozen, on top of `model`."""
    source = pathlib.Path(path)
    try:
        document = json.loads(source.read_text(encoding="utf-8"))
        reference = document["model"]
        tau = float(document["threshold_tau"])
        eer = document.get("eer")
        templates = {
            str(key): np.asarray(values, dtype=np.float64)
            for key, values in document["templates"].items()
        }
    except OSError as exc:
        return Err(error.SystemFileError(source, exc.strerror or str(exc)))
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        return Err(error.SystemFileError(source, f"malformed system file: {exc!r}"))

    if reference != _model_reference(model):
        return Err(error.SystemFileError(source, "saved for a different model"))

    try:
        system = AuthSystem.restore(
            model,
            {key: embedding.FeatureVector(values) for key, values in templates.items()},
            tau,
            None if eer is None else float(eer),
        )
    except ValueError as exc:
        return Err(error.SystemFileError(source, str(exc)))
    return Ok(system)
