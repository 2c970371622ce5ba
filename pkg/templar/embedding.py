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
"""Embedding models and their input gradients.

An embedding model maps an image to a unit-norm feature vector and can pull a
cotangent on that vector back to the input pixels. The attacks never look
inside a model, they only call `embed` and `input_gradient`, so any object
implementing `EmbeddingModel` can stand in for `ReferenceEmbedder`.

The reference model is one random projection followed by `tanh` and L2
normalization:

```
a = W x + b          W ~ N(0, 1/n), b = 0
z = tanh(a)
f = z / ||z||
```
"""

from __future__ import annotations

__all__ = (
    "FeatureVector",
    "EmbeddingModel",
    "ReferenceEmbedder",
    "make_reference_embedder",
    "embed",
    "input_gradient",
    "finite_diff_gradient",
    "save_model",
    "load_model",
)

import dataclasses
import logging
import math
import pathlib
import struct
import typing

import numpy as np
from sain import Err
from sain import Ok
from sain.collections.buf import Bytes

from templar import data
from templar import error

if typing.TYPE_CHECKING:
    import collections.abc as collections
    import os

    import numpy.typing as npt
    from sain import Result

_LOGGER = logging.getLogger(__name__)
_UNIT_TOLERANCE: typing.Final = 1e-6
_MAGIC: typing.Final = b"TMPLR\x00"
_VERSION: typing.Final = 1
# magic, version, seed, width, height, channels, feature_dim
_HEADER: typing.Final = struct.Struct("<6sHQ4I")


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class FeatureVector:
    """A unit-norm template.

    Raises
    ------
    `ValueError`
        If `values` is not one dimensional or its norm is not 1 within `1e-6`.
    """

    values: data.FloatArray

    def __post_init__(self) -> None:
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError(f"a feature vector is one dimensional, got {self.values.shape}")
        norm = float(np.linalg.norm(self.values))
        if not math.isclose(norm, 1.0, abs_tol=_UNIT_TOLERANCE):
            raise ValueError(f"feature vectors have unit norm, got {norm}")
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureVector):
            return NotImplemented
        return bool(np.array_equal(self.values, other.values))

    def __repr__(self) -> str:
        return f"FeatureVector(dim={self.dim})"


@typing.runtime_checkable
class EmbeddingModel(typing.Protocol):
    """The interface an attack needs from a face or voice embedder.

    Implementations must be deterministic, two calls with the same image return
    bitwise equal results.
    """

    __slots__ = ()

    @property
    def input_dims(self) -> data.Dims: ...

    @property
    def feature_dim(self) -> int: ...

    def embed(self, image: data.Image) -> FeatureVector:
        """Map `image` to its unit-norm template.

        Raises
        ------
        `ValueError`
            If `image` has the wrong dims, or if it maps to the zero vector and so
            has no direction. The reference model does that for an all-black image.
        """
        ...

    def input_gradient(
        self, image: data.Image, feature_cograd: npt.ArrayLike
    ) -> data.FloatArray:
        """Return `J^T g` where `J` is the Jacobian of `embed` at `image`.

        The result has the shape of `image.pixels`.
        """
        ...


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class ReferenceEmbedder:
    """The seeded reference model, see the module docs for its form.

    Build one with `make_reference_embedder`.
    """

    input_dims: data.Dims
    weights: data.FloatArray
    bias: data.FloatArray
    seed: int

    def __post_init__(self) -> None:
        width, height, channels = self.input_dims
        n = width * height * channels
        if self.weights.ndim != 2 or self.weights.shape[1] != n:
            raise ValueError(f"weights must be (feature_dim, {n}), got {self.weights.shape}")
        if self.weights.shape[0] < 2:
            raise ValueError(f"need at least two features, got {self.weights.shape[0]}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(f"bias must be ({self.weights.shape[0]},), got {self.bias.shape}")
        self.weights.setflags(write=False)
        self.bias.setflags(write=False)

    @property
    def feature_dim(self) -> int:
        return self.weights.shape[0]

    def _check(self, image: data.Image) -> None:
        if image.dims != self.input_dims:
            raise ValueError(f"model takes {self.input_dims} images, got {image.dims}")

    def _forward(self, image: data.Image) -> tuple[data.FloatArray, float]:
        self._check(image)
        z = np.tanh(self.weights @ image.flat() + self.bias)
        norm = float(np.linalg.norm(z))
        if norm == 0.0:
            raise ValueError("image maps to the zero vector and has no direction")
        return z, norm

    def pre_activations(self, image: data.Image) -> data.FloatArray:
        """`W x + b` before the nonlinearity, used to check the model is not saturated."""
        self._check(image)
        return self.weights @ image.flat() + self.bias

    def embed(self, image: data.Image) -> FeatureVector:
        z, norm = self._forward(image)
        return FeatureVector(z / norm)

    def input_gradient(
        self, image: data.Image, feature_cograd: npt.ArrayLike
    ) -> data.FloatArray:
        g = np.asarray(feature_cograd, dtype=np.float64)
        if g.shape != (self.feature_dim,):
            raise ValueError(f"cotangent must be ({self.feature_dim},), got {g.shape}")

        z, norm = self._forward(image)
        f = z / norm
        # Normalization projects out the radial component.
        grad_z = (g - f * float(f @ g)) / norm
        grad_a = grad_z * (1.0 - z * z)
        return (self.weights.T @ grad_a).reshape(image.pixels.shape)


def make_reference_embedder(
    input_dims: data.Dims, feature_dim: int, seed: int
) -> ReferenceEmbedder:
    """Build the reference model.

    Weights are drawn `N(0, 1/n)` with `n = width * height * channels` so that
    pre-activations stay in the unsaturated range of `tanh` for images in `[0, 1]`.

    Raises
    ------
    `ValueError`
        If `feature_dim < 2` or the dims are not positive. A single feature
        normalizes to `+1` or `-1` everywhere and has a zero input gradient.
    """
    width, height, channels = input_dims
    if width < 1 or height < 1 or channels not in (1, 3):
        raise ValueError(f"bad input dims {input_dims}")
    if feature_dim < 2:
        raise ValueError(f"feature_dim must be at least 2, got {feature_dim}")

    n = width * height * channels
    rng = data.rng_for(seed)
    weights = rng.normal(0.0, 1.0 / math.sqrt(n), size=(feature_dim, n))
    return ReferenceEmbedder((width, height, channels), weights, np.zeros(feature_dim), seed)


def embed(model: EmbeddingModel, image: data.Image) -> FeatureVector:
    """Map `image` to its template with `model`.

    Raises
    ------
    `ValueError`
        As `EmbeddingModel.embed`, an image without a direction is rejected.
    """
    return model.embed(image)


def input_gradient(
    model: EmbeddingModel, image: data.Image, feature_cograd: npt.ArrayLike
) -> data.FloatArray:
    """Pull `feature_cograd` back to the pixels of `image` through `model`."""
    return model.input_gradient(image, feature_cograd)


def finite_diff_gradient(
    objective: collections.Callable[[data.Image], float],
    image: data.Image,
    h: float = 1e-4,
) -> data.FloatArray:
    """Central difference gradient of a scalar objective over the pixels of `image`.

    Probes are allowed to step outside `[0, 1]`.

    Example
    -------
    ```py
    grad = finite_diff_gradient(lambda im: float(im.pixels.sum()), image, h=0.25)
    assert np.all(grad == 1.0)
    ```
    """
    if not h > 0.0:
        raise ValueError(f"step must be positive, got {h}")

    shifted = np.array(image.pixels, dtype=np.float64, copy=True)
    flat = shifted.reshape(-1)
    grad = np.empty(flat.size, dtype=np.float64)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        up = objective(data.Image.from_array_unchecked(shifted))
        flat[i] = original - h
        down = objective(data.Image.from_array_unchecked(shifted))
        flat[i] = original
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(image.pixels.shape)


def save_model(
    model: ReferenceEmbedder, path: str | os.PathLike[str]
) -> Result[pathlib.Path, error.ModelFileError]:
    """Write `model` to a little-endian binary file.

    The layout is a fixed header followed by `W` then `b` as float64, which
    makes a loaded model bitwise equal to the saved one.
    """
    target = pathlib.Path(path)
    width, height, channels = model.input_dims
    buf = Bytes()
    buf.put_bytes(
        _HEADER.pack(_MAGIC, _VERSION, model.seed, width, height, channels, model.feature_dim)
    )
    buf.put_bytes(model.weights.astype("<f8").tobytes(order="C"))
    buf.put_bytes(model.bias.astype("<f8").tobytes())
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_bytes(buf.to_bytes())
    except OSError as exc:
        return Err(error.ModelFileError(target, exc.strerror or str(exc)))

    _LOGGER.info("saved %dx%d embedder to %s", model.feature_dim, model.weights.shape[1], target)
    return Ok(target)


def load_model(path: str | os.PathLike[str]) -> Result[ReferenceEmbedder, error.ModelFileError]:
    """Read a model written by `save_model`."""
    source = pathlib.Path(path)
    try:
        raw = source.read_bytes()
    except OSError as exc:
        return Err(error.ModelFileError(source, exc.strerror or str(exc)))

    if len(raw) < _HEADER.size:
        return Err(error.ModelFileError(source, "truncated header"))

    magic, version, seed, width, height, channels, feature_dim = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        return Err(error.ModelFileError(source, f"bad magic {magic!r}"))
    if version != _VERSION:
        return Err(error.ModelFileError(source, f"unsupported version {version}"))

    n = width * height * channels
    expected = _HEADER.size + 8 * (feature_dim * n + feature_dim)
    if len(raw) != expected:
        return Err(error.ModelFileError(source, f"holds {len(raw)} bytes, expected {expected}"))

    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    weights = body[: feature_dim * n].reshape(feature_dim, n).copy()
    bias = body[feature_dim * n :].copy()
    try:
        model = ReferenceEmbedder((width, height, channels), weights, bias, seed)
    except ValueError as exc:
        return Err(error.ModelFileError(source, str(exc)))
    return Ok(model)
