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
from __future__ import annotations

import json
import typing

import numpy as np
import pytest

from templar import data
from templar import error
from templar import netpbm

if typing.TYPE_CHECKING:
    import pathlib


@pytest.fixture(scope="module")
def dataset() -> data.IdentityDataset:
    return data.generate_dataset(10, 10, (16, 16, 1), 0.05, seed=7)


class TestRng:
    def test_same_seed_same_stream(self):
        assert np.array_equal(data.rng_for(3).random(8), data.rng_for(3).random(8))

    def test_negative_seed(self):
        with pytest.raises(ValueError):
            data.rng_for(-1)


class TestImage:
    def test_from_array_promotes_grayscale(self):
        image = data.Image.from_array(np.zeros((4, 5)))
        assert image.dims == (5, 4, 1)
        assert image.width == 5 and image.height == 4 and image.channels == 1

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            data.Image.from_array(np.full((2, 2), 1.5))

    def test_bad_channels(self):
        with pytest.raises(ValueError):
            data.Image.from_array(np.zeros((2, 2, 2)))

    def test_pixels_are_read_only(self):
        image = data.Image.from_array(np.zeros((2, 2)))
        with pytest.raises(ValueError):
            image.pixels[0, 0, 0] = 1.0

    def test_from_array_copies(self):
        source = np.zeros((2, 2))
        image = data.Image.from_array(source)
        source[0, 0] = 1.0
        assert image.pixels[0, 0, 0] == 0.0

    def test_equality(self):
        a = data.Image.from_array(np.full((2, 2), 0.5))
        b = data.Image.from_array(np.full((2, 2), 0.5))
        c = data.Image.from_array(np.full((2, 2), 0.25))
        assert a == b
        assert a != c

    def test_flat(self):
        image = data.Image.from_array(np.arange(6).reshape(2, 3) / 10)
        assert image.flat().tolist() == pytest.approx([0.0, 0.1, 0.2, 0.3, 0.4, 0.5])


class TestGenerate:
    def test_shape(self, dataset: data.IdentityDataset):
        assert len(dataset) == 10
        assert dataset.samples_per_identity == 10
        assert sum(1 for _ in dataset.iter_samples()) == 100
        assert dataset.ids[0] == "id0000"
        assert dataset.image_dims == (16, 16, 1)

    def test_clamped(self, dataset: data.IdentityDataset):
        for _, _, image in dataset.iter_samples():
            assert image.pixels.min() >= 0.0
            assert image.pixels.max() <= 1.0

    def test_deterministic(self, dataset: data.IdentityDataset):
        again = data.generate_dataset(10, 10, (16, 16, 1), 0.05, seed=7)
        for (_, _, a), (_, _, b) in zip(dataset.iter_samples(), again.iter_samples()):
            assert a == b

    def test_seed_matters(self, dataset: data.IdentityDataset):
        other = data.generate_dataset(10, 10, (16, 16, 1), 0.05, seed=8)
        assert dataset.identities[0].samples[0] != other.identities[0].samples[0]

    def test_zero_noise(self):
        flat = data.generate_dataset(3, 4, (8, 8, 1), 0.0, seed=1)
        for identity in flat:
            assert all(sample == identity.samples[0] for sample in identity.samples)

    def test_heavy_noise_stays_in_the_box(self):
        noisy = data.generate_dataset(2, 2, (8, 8, 3), 5.0, seed=1)
        for _, _, image in noisy.iter_samples():
            assert 0.0 <= image.pixels.min() <= image.pixels.max() <= 1.0

    def test_identities_cluster(self):
        spread = data.generate_dataset(30, 2, (16, 16, 1), 0.05, seed=7)
        within = [
            np.linalg.norm(i.samples[0].pixels - i.samples[1].pixels) for i in spread
        ]
        between = [
            np.linalg.norm(a.samples[0].pixels - b.samples[0].pixels)
            for a, b in zip(spread.identities, spread.identities[1:])
        ]
        assert np.mean(within) < np.mean(between)

    def test_source_pool_prefix(self):
        pool = data.generate_source_pool(3, 2, (8, 8, 1), 0.05, seed=1)
        assert pool.ids == ("src0000", "src0001", "src0002")

    @pytest.mark.parametrize(
        ("n", "k", "dims", "sigma"),
        [
            (0, 2, (8, 8, 1), 0.1),
            (2, 1, (8, 8, 1), 0.1),
            (2, 2, (0, 8, 1), 0.1),
            (2, 2, (8, 8, 2), 0.1),
            (2, 2, (8, 8, 1), -0.1),
        ],
    )
    def test_rejects(self, n: int, k: int, dims: data.Dims, sigma: float):
        with pytest.raises(ValueError):
            data.generate_dataset(n, k, dims, sigma, seed=1)


class TestIdentityDataset:
    def test_sample_lookup(self, dataset: data.IdentityDataset):
        key = dataset.sample_key("id0001", 2)
        assert key == "id0001/2"
        assert dataset.sample(key).unwrap() == dataset.identities[1].samples[2]
        assert dataset.sample("id0001/10").is_none()
        assert dataset.sample("id0001/x").is_none()
        assert dataset.sample("nobody/0").is_none()

    def test_identity(self, dataset: data.IdentityDataset):
        assert dataset.identity("id0003").unwrap().identity_id == "id0003"
        assert dataset.identity("id9999").is_none()

    def test_duplicate_ids(self, dataset: data.IdentityDataset):
        first = dataset.identities[0]
        with pytest.raises(ValueError):
            data.IdentityDataset((first, first), (16, 16, 1), 7, 0.05)

    def test_single_sample_identity(self, dataset: data.IdentityDataset):
        lonely = data.Identity("lonely", dataset.identities[0].samples[:1])
        with pytest.raises(ValueError):
            data.IdentityDataset((lonely,), (16, 16, 1), 7, 0.05)

    def test_mixed_dims(self, dataset: data.IdentityDataset):
        with pytest.raises(ValueError):
            data.IdentityDataset(dataset.identities, (8, 8, 1), 7, 0.05)


class TestPersistence:
    def test_round_trip(self, dataset: data.IdentityDataset, tmp_path: pathlib.Path):
        manifest = data.save_dataset(dataset, tmp_path).unwrap()
        assert manifest.name == "manifest.json"
        assert (tmp_path / "images" / "id0000" / "0.pgm").is_file()

        loaded = data.load_dataset(tmp_path).unwrap()
        assert loaded.ids == dataset.ids
        assert loaded.image_dims == dataset.image_dims
        assert loaded.generator_seed == 7
        assert loaded.intra_noise_sigma == 0.05
        assert loaded.prng == data.PRNG
        quantized = dataset.quantized()
        for (_, _, a), (_, _, b) in zip(loaded.iter_samples(), quantized.iter_samples()):
            assert a == b

    def test_manifest_fields(self, dataset: data.IdentityDataset, tmp_path: pathlib.Path):
        data.save_dataset(dataset, tmp_path).unwrap()
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert manifest["generator"] == {
            "prng": "PCG64",
            "seeding": "numpy.random.SeedSequence(seed)",
            "seed": 7,
            "intra_noise_sigma": 0.05,
        }
        assert manifest["image_dims"] == {"width": 16, "height": 16, "channels": 1}
        assert len(manifest["identities"]) == 10

    def test_color_round_trip(self, tmp_path: pathlib.Path):
        color = data.generate_dataset(2, 2, (4, 3, 3), 0.1, seed=5)
        data.save_dataset(color, tmp_path).unwrap()
        assert (tmp_path / "images" / "id0001" / "1.ppm").is_file()
        loaded = data.load_dataset(tmp_path).unwrap()
        assert loaded.identities[1].samples[1] == color.identities[1].samples[1].quantized()

    def test_missing_manifest(self, tmp_path: pathlib.Path):
        result = data.load_dataset(tmp_path / "nowhere")
        assert result.is_err()
        assert isinstance(result.unwrap_err(), error.DatasetError)

    def test_corrupt_image_names_the_file(
        self, dataset: data.IdentityDataset, tmp_path: pathlib.Path
    ):
        data.save_dataset(dataset, tmp_path).unwrap()
        broken = tmp_path / "images" / "id0004" / "3.pgm"
        broken.write_bytes(b"P5\n16 16\n65535\n\x00")

        why = data.load_dataset(tmp_path).unwrap_err()
        assert why.path == broken
        assert str(broken) in why.message

    def test_image_dims_disagree_with_manifest(
        self, dataset: data.IdentityDataset, tmp_path: pathlib.Path
    ):
        data.save_dataset(dataset, tmp_path).unwrap()
        (tmp_path / "images" / "id0000" / "0.pgm").write_bytes(
            netpbm.encode(np.zeros((8, 8, 1)))
        )
        assert data.load_dataset(tmp_path).is_err()
