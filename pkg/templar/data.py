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
"""Synthetic identity datasets.

Every identity is a random prototype image, its samples are the prototype plus
independent Gaussian noise clamped back into `[0, 1]`. Samples of one identity are
closer to each other than to any other identity, which is all an embedding based
verifier needs to have something to tell apart.

Example
-------
```py
from templar import data

dataset = data.generate_dataset(
    n_identities=10,
    samples_per_identity=5,
    dims=(16, 16, 1),
    intra_noise_sigma=0.05,
    seed=7,
)
for identity_id, index, image in dataset.iter_samples():
    ...
```
"""

from __future__ import annotations

__all__ = (
    "PRNG",
    "Dims",
    "FloatArray",
    "Image",
    "Identity",
    "IdentityDataset",
    "generate_dataset",
    "generate_source_pool",
    "save_dataset",
    "load_dataset",
)

import dataclasses
import json
import logging
import pathlib
import typing

import numpy as np
from sain import Err
from sain import Ok
from sain import Some
from sain.option import nothing_unchecked

from templar import error
from templar import netpbm

if typing.TYPE_CHECKING:
    import collections.abc as collections
    import os

    import numpy.typing as npt
    from sain import Option
    from sain import Result

FloatArray: typing.TypeAlias = "npt.NDArray[np.float64]"
Dims: typing.TypeAlias = tuple[int, int, int]
"""`(width, height, channels)`."""

PRNG: typing.Final = "PCG64"
"""The bit generator every seeded draw in this package goes through."""

_MANIFEST: typing.Final = "manifest.json"
_FORMAT: typing.Final = 1
_LOGGER = logging.getLogger(__name__)


def rng_for(seed: int) -> np.random.Generator:
    """A fresh generator for `seed`, `numpy.random.SeedSequence(seed)` feeding `PCG64`."""
    if seed < 0:
        raise ValueError(f"seeds are unsigned 64-bit integers, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


@typing.final
@dataclasses.dataclass(frozen=True, slots=True, eq=False)
class Image:
    """An immutable `(height, width, channels)` image with values in `[0, 1]`.

    The array is row-major and channel-interleaved, `channels` is 1 or 3.
    Two images are equal when their pixels are bitwise equal.
    """

    pixels: FloatArray

    def __post_init__(self) -> None:
        pixels = self.pixels
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3) or pixels.size == 0:
            raise ValueError(f"expected a (height, width, 1|3) array, got {pixels.shape}")
        if pixels.dtype != np.float64:
            raise ValueError(f"expected float64 pixels, got {pixels.dtype}")
        pixels.setflags(write=False)

    @classmethod
    def from_array(cls, array: npt.ArrayLike) -> Image:
        """Copy `array` into a new image.

        Raises
        ------
        `ValueError`
            If the shape is wrong or any value lies outside `[0, 1]`.
        """
        pixels = np.array(array, dtype=np.float64, copy=True)
        if pixels.ndim == 2:
            pixels = pixels[:, :, np.newaxis]
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ValueError("pixel values must lie in [0, 1]")
        return cls(pixels)

    @classmethod
    def from_array_unchecked(cls, array: npt.ArrayLike) -> Image:
        """Copy `array` into a new image without the `[0, 1]` range check.

        Finite differences and attack iterates use this, the iterates are clamped
        already and the shifted images of a finite difference step may poke past the box.
        """
        return cls(np.array(array, dtype=np.float64, copy=True))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def dims(self) -> Dims:
        return (self.width, self.height, self.channels)

    def flat(self) -> FloatArray:
        """A read-only flat view over the pixels."""
        return self.pixels.reshape(-1)

    def quantized(self) -> Image:
        """This image rounded to the 16-bit grid the on-disk format stores."""
        return Image(np.rint(self.pixels * netpbm.MAXVAL) / netpbm.MAXVAL)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Image):
            return NotImplemented
        return bool(np.array_equal(self.pixels, other.pixels))

    def __repr__(self) -> str:
        return f"Image(width={self.width}, height={self.height}, channels={self.channels})"


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class Identity:
    """One identity and its ordered samples."""

    identity_id: str
    samples: tuple[Image, ...]

    def __len__(self) -> int:
        return len(self.samples)


@typing.final
@dataclasses.dataclass(frozen=True, slots=True)
class IdentityDataset:
    """A generated set of identities, each with at least two samples.

    Parameters
    ----------
    identities : `tuple[Identity, ...]`
        The identities in generation order.
    image_dims : `Dims`
        `(width, height, channels)` shared by every image.
    generator_seed : `int`
        The seed this dataset was generated from.
    intra_noise_sigma : `float`
        Standard deviation of the per-sample noise.
    """

    identities: tuple[Identity, ...]
    image_dims: Dims
    generator_seed: int
    intra_noise_sigma: float
    prng: str = PRNG

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for identity in self.identities:
            if identity.identity_id in seen:
                raise ValueError(f"duplicate identity {identity.identity_id!r}")
            seen.add(identity.identity_id)
            if len(identity) < 2:
                raise ValueError(
                    f"identity {identity.identity_id!r} has {len(identity)} samples, need 2"
                )
            for image in identity.samples:
                if image.dims != self.image_dims:
                    raise ValueError(
                        f"identity {identity.identity_id!r} holds a {image.dims} image, "
                        f"dataset is {self.image_dims}"
                    )

    @staticmethod
    def sample_key(identity_id: str, index: int) -> str:
        """The enrollment key of one sample, `"<identity>/<index>"`."""
        return f"{identity_id}/{index}"

    def __len__(self) -> int:
        return len(self.identities)

    def __iter__(self) -> collections.Iterator[Identity]:
        return iter(self.identities)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(identity.identity_id for identity in self.identities)

    @property
    def samples_per_identity(self) -> int:
        """The smallest sample count over all identities."""
        return min((len(identity) for identity in self.identities), default=0)

    def identity(self, identity_id: str) -> Option[Identity]:
        for identity in self.identities:
            if identity.identity_id == identity_id:
                return Some(identity)
        return nothing_unchecked()

    def sample(self, key: str) -> Option[Image]:
        """Look up a sample by its `sample_key`."""
        identity_id, _, index = key.rpartition("/")
        if not index.isdigit():
            return nothing_unchecked()
        position = int(index)
        return self.identity(identity_id).filter(lambda i: position < len(i)).map(
            lambda i: i.samples[position]
        )

    def iter_samples(self) -> collections.Iterator[tuple[str, int, Image]]:
        for identity in self.identities:
            for index, image in enumerate(identity.samples):
                yield identity.identity_id, index, image

    def quantized(self) -> IdentityDataset:
        """This dataset with every image rounded to the stored 16-bit grid."""
        return dataclasses.replace(
            self,
            identities=tuple(
                Identity(i.identity_id, tuple(s.quantized() for s in i.samples))
                for i in self.identities
            ),
        )


def generate_dataset(
    n_identities: int,
    samples_per_identity: int,
    dims: Dims,
    intra_noise_sigma: float,
    seed: int,
    *,
    prefix: str = "id",
) -> IdentityDataset:
    """Generate a dataset.

    Identity `i` draws its prototype uniformly from `[0, 1]`, then each of its
    samples adds `N(0, intra_noise_sigma)` noise to every pixel and clamps.
    Draws happen in identity order from one `PCG64` stream, so the same
    arguments always give the same dataset, bit for bit.

    Parameters
    ----------
    n_identities : `int`
        Number of identities, at least one.
    samples_per_identity : `int`
        Samples per identity, at least two.
    dims : `Dims`
        `(width, height, channels)`, channels is 1 or 3.
    intra_noise_sigma : `float`
        Per-sample noise, `0` makes every sample equal to its prototype.
    seed : `int`
        Unsigned 64-bit seed.
    prefix : `str`
        Identity ids are `f"{prefix}{i:04d}"`.

    Raises
    ------
    `ValueError`
        If any parameter is out of range.
    """
    width, height, channels = dims
    if n_identities < 1:
        raise ValueError(f"need at least one identity, got {n_identities}")
    if samples_per_identity < 2:
        raise ValueError(f"need at least two samples per identity, got {samples_per_identity}")
    if width < 1 or height < 1 or channels not in (1, 3):
        raise ValueError(f"bad image dims {dims}")
    if not intra_noise_sigma >= 0.0:
        raise ValueError(f"noise sigma must be non-negative, got {intra_noise_sigma}")

    rng = rng_for(seed)
    shape = (height, width, channels)
    identities: list[Identity] = []
    for i in range(n_identities):
        prototype = rng.random(shape)
        samples = tuple(
            Image(np.clip(prototype + rng.normal(0.0, intra_noise_sigma, shape), 0.0, 1.0))
            for _ in range(samples_per_identity)
        )
        identities.append(Identity(f"{prefix}{i:04d}", samples))

    _LOGGER.debug(
        "generated %d identities x %d samples at %s from seed %d",
        n_identities,
        samples_per_identity,
        dims,
        seed,
    )
    return IdentityDataset(tuple(identities), (width, height, channels), seed, intra_noise_sigma)


def generate_source_pool(
    n_identities: int,
    samples_per_identity: int,
    dims: Dims,
    intra_noise_sigma: float,
    seed: int,
) -> IdentityDataset:
    """Generate attacker-owned source images whose identities never overlap the gallery."""
    return generate_dataset(
        n_identities, samples_per_identity, dims, intra_noise_sigma, seed, prefix="src"
    )


def save_dataset(
    dataset: IdentityDataset, directory: str | os.PathLike[str]
) -> Result[pathlib.Path, error.DatasetError]:
    """Write `dataset` as 16-bit netpbm images plus a JSON manifest.

    Layout is `manifest.json` and `images/<identity>/<index>.pgm` (`.ppm` for color).
    Returns the manifest path.
    """
    root = pathlib.Path(directory)
    suffix = netpbm.suffix_for(dataset.image_dims[2])
    width, height, channels = dataset.image_dims
    entries: list[dict[str, typing.Any]] = []

    try:
        for identity in dataset:
            folder = root / "images" / identity.identity_id
            folder.mkdir(parents=True, exist_ok=True)
            files: list[str] = []
            for index, image in enumerate(identity.samples):
                relative = f"images/{identity.identity_id}/{index}{suffix}"
                (root / relative).write_bytes(netpbm.encode(image.pixels))
                files.append(relative)
            entries.append({"id": identity.identity_id, "samples": files})

        manifest = {
            "format": _FORMAT,
            "generator": {
                "prng": dataset.prng,
                "seeding": "numpy.random.SeedSequence(seed)",
                "seed": dataset.generator_seed,
                "intra_noise_sigma": dataset.intra_noise_sigma,
            },
            "image_dims": {"width": width, "height": height, "channels": channels},
            "identities": entries,
        }
        path = root / _MANIFEST
        path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    except OSError as exc:
        return Err(error.DatasetError(pathlib.Path(exc.filename or root), exc.strerror or str(exc)))

    _LOGGER.info("wrote %d identities to %s", len(dataset), root)
    return Ok(path)


def _read_image(path: pathlib.Path, dims: Dims) -> Result[Image, error.DatasetError]:
    try:
        pixels = netpbm.decode(path.read_bytes())
    except OSError as exc:
        return Err(error.DatasetError(path, exc.strerror or str(exc)))
    except ValueError as exc:
        return Err(error.DatasetError(path, str(exc)))

    image = Image(pixels)
    if image.dims != dims:
        return Err(error.DatasetError(path, f"image is {image.dims}, manifest says {dims}"))
    return Ok(image)


def load_dataset(
    directory: str | os.PathLike[str],
) -> Result[IdentityDataset, error.DatasetError]:
    """Read a dataset written by `save_dataset`.

    Pixels come back on the 16-bit grid, so a loaded dataset equals
    `dataset.quantized()` of the one that was saved.

    Example
    -------
    ```py
    dataset = data.load_dataset("results/dataset").unwrap()
    ```
    """
    root = pathlib.Path(directory)
    manifest_path = root / _MANIFEST
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        generator = manifest["generator"]
        raw_dims = manifest["image_dims"]
        dims: Dims = (int(raw_dims["width"]), int(raw_dims["height"]), int(raw_dims["channels"]))
        seed = int(generator["seed"])
        sigma = float(generator["intra_noise_sigma"])
        prng = str(generator["prng"])
        listing = [(str(e["id"]), [str(s) for s in e["samples"]]) for e in manifest["identities"]]
    except OSError as exc:
        return Err(error.DatasetError(manifest_path, exc.strerror or str(exc)))
    except (ValueError, KeyError, TypeError) as exc:
        return Err(error.DatasetError(manifest_path, f"malformed manifest: {exc!r}"))

    identities: list[Identity] = []
    for identity_id, files in listing:
        samples: list[Image] = []
        for relative in files:
            match _read_image(root / relative, dims):
                case Ok(image):
                    samples.append(image)
                case Err(why):
                    return Err(why)
        identities.append(Identity(identity_id, tuple(samples)))

    try:
        dataset = IdentityDataset(tuple(identities), dims, seed, sigma, prng)
    except ValueError as exc:
        return Err(error.DatasetError(manifest_path, str(exc)))

    _LOGGER.info("loaded %d identities from %s", len(dataset), root)
    return Ok(dataset)
