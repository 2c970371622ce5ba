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

import math

import numpy as np
import pytest

from templar import data
from templar import embedding
from templar import metrics
from templar.attacks import AttackConfig
from templar.attacks import AttackResult
from templar.attacks import Objective
from templar.attacks import StopReason
from templar.attacks import StopState
from templar.attacks import Technique
from templar.attacks import algorithms
from templar.attacks import check_stop
from templar.attacks import objective

_DIMS: data.Dims = (16, 16, 1)


def _unit(*values: float) -> embedding.FeatureVector:
    array = np.array(values, dtype=np.float64)
    return embedding.FeatureVector(array / np.linalg.norm(array))


def _at_dissimilarity(d: float) -> tuple[embedding.FeatureVector, embedding.FeatureVector]:
    cosine = 1.0 - 2.0 * d
    return _unit(cosine, math.sqrt(1.0 - cosine * cosine)), _unit(1.0, 0.0)


class _ConstantModel:
    """Embeds everything to the same template, its input gradient is a constant."""

    input_dims: data.Dims = (4, 4, 1)
    feature_dim = 2

    def __init__(self, gradient: float) -> None:
        self._gradient = gradient

    def embed(self, image: data.Image) -> embedding.FeatureVector:
        return _unit(1.0, 0.0)

    def input_gradient(self, image: data.Image, feature_cograd: object) -> data.FloatArray:
        return np.full(image.pixels.shape, self._gradient)


@pytest.fixture(scope="module")
def model() -> embedding.ReferenceEmbedder:
    return embedding.make_reference_embedder(_DIMS, 8, seed=3)


@pytest.fixture(scope="module")
def dataset() -> data.IdentityDataset:
    return data.generate_dataset(6, 2, _DIMS, 0.05, seed=1)


@pytest.fixture(scope="module")
def pair(dataset: data.IdentityDataset) -> tuple[data.Image, data.Image]:
    return dataset.identities[0].samples[0], dataset.identities[1].samples[0]


class TestSimilarityLoss:
    def test_values(self):
        f = _unit(0.6, 0.8)
        assert objective.sgadv_loss(f, f) == pytest.approx(0.0, abs=1e-12)
        assert objective.sgadv_loss(_unit(1.0, 0.0), _unit(-1.0, 0.0)) == 1.0
        assert objective.sgadv_loss(_unit(1.0, 0.0), _unit(0.0, 1.0)) == 0.5

    def test_cotangent_ignores_the_adversarial_template(self):
        target = _unit(0.6, 0.8)
        for adversarial in (_unit(1.0, 0.0), _unit(-0.3, 0.7)):
            assert np.array_equal(objective.sgadv_loss_cograd(adversarial, target), -target.values / 2)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            objective.sgadv_loss(_unit(1.0, 0.0), _unit(1.0, 0.0, 0.0))


class TestCbceLoss:
    def test_inside_the_acceptance_region(self):
        adversarial, target = _at_dissimilarity(0.3)
        assert objective.cbce_loss(adversarial, target, 0.5) == 0.0
        assert not np.any(objective.cbce_loss_cograd(adversarial, target, 0.5))

    def test_outside(self):
        adversarial, target = _at_dissimilarity(0.75)
        assert objective.cbce_loss(adversarial, target, 0.5) == pytest.approx(math.log(2.0))

    def test_on_the_threshold(self):
        adversarial, target = _at_dissimilarity(0.4)
        tau = metrics.dissimilarity(adversarial, target)
        assert objective.cbce_loss(adversarial, target, tau) == 0.0
        assert not np.any(objective.cbce_loss_cograd(adversarial, target, tau))

    def test_cotangent(self):
        adversarial, target = _at_dissimilarity(0.6)
        d = metrics.dissimilarity(adversarial, target)
        np.testing.assert_allclose(
            objective.cbce_loss_cograd(adversarial, target, 0.2), -target.values / (2 * (1 - d))
        )

    def test_floor_keeps_it_finite(self):
        loss = objective.cbce_loss(_unit(-1.0, 0.0), _unit(1.0, 0.0), 0.5)
        assert loss == pytest.approx(-math.log(objective.LOG_FLOOR))
        assert not np.any(objective.cbce_loss_cograd(_unit(-1.0, 0.0), _unit(1.0, 0.0), 0.5))

    @pytest.mark.parametrize("tau", [0.0, 1.0])
    def test_threshold_range(self, tau: float):
        with pytest.raises(ValueError):
            objective.cbce_loss(_unit(1.0, 0.0), _unit(0.0, 1.0), tau)

    def test_threshold_required(self):
        with pytest.raises(ValueError):
            objective.loss_and_cograd(Objective.CBCE, _unit(1.0, 0.0), _unit(0.0, 1.0))


class TestCheckStop:
    def test_converged(self):
        assert check_stop(StopState([0.0] * 5), 5, 1000, 1e-4).unwrap() is StopReason.CONVERGED

    def test_settled(self):
        state = StopState([0.01, -0.002, 0.01, -0.003, 0.01])
        assert check_stop(state, 10, 1000, 1e-4).unwrap() is StopReason.SETTLED

    def test_single_uptick(self):
        state = StopState([0.01, 0.01, 0.01, -0.002, 0.01])
        assert check_stop(state, 10, 1000, 1e-4).is_none()

    def test_max_steps_first(self):
        assert check_stop(StopState([0.0] * 5), 1000, 1000, 1e-4).unwrap() is StopReason.MAX_STEPS

    def test_constant_trace_converges_on_the_fifth_delta(self):
        state = StopState()
        decisions = []
        for t in range(1, 6):
            state.push(0.0)
            decisions.append(check_stop(state, t, 1000, 1e-4))
        assert all(d.is_none() for d in decisions[:4])
        assert decisions[4].unwrap() is StopReason.CONVERGED

    def test_steady_decrease_runs_to_the_cap(self):
        state = StopState()
        for t in range(1, 50):
            state.push(0.01)
            assert check_stop(state, t, 50, 1e-4).is_none()
        state.push(0.01)
        assert check_stop(state, 50, 50, 1e-4).unwrap() is StopReason.MAX_STEPS

    def test_window_is_bounded(self):
        state = StopState(range(8))
        assert state.deltas == (3, 4, 5, 6, 7)
        assert state.is_full()


class TestAttackConfig:
    def test_defaults(self):
        config = AttackConfig.default()
        assert (config.epsilon, config.alpha, config.t_max, config.tau_conv) == (
            0.03,
            0.001,
            1000,
            1e-4,
        )
        assert config.objective is Objective.SIMILARITY
        assert config.reaches_border()

    def test_border(self):
        assert AttackConfig(alpha=0.001, t_max=40).reaches_border()
        assert not AttackConfig(alpha=0.001, t_max=10).reaches_border()

    @pytest.mark.parametrize(
        "changes",
        [
            {"epsilon": 0.0},
            {"alpha": -0.1},
            {"t_max": 0},
            {"tau_conv": -1.0},
            {"seed": -1},
            {"cbce_tau": 1.0},
        ],
    )
    def test_rejects(self, changes: dict[str, object]):
        with pytest.raises(ValueError):
            AttackConfig.default().replace(**changes)

    def test_technique_objectives(self):
        assert Technique.SGADV.objective is Objective.SIMILARITY
        assert Technique.PGD_CBCE.objective is Objective.CBCE
        assert Technique.FGSM_CBCE.objective is Objective.CBCE


class TestAttackResult:
    def test_best_step(self):
        image = data.Image.from_array(np.zeros((2, 2)))
        result = AttackResult(
            image, (0.5, 0.2, 0.3), (0.5, 0.2, 0.3), (0.001, 0.001), 2, StopReason.MAX_STEPS
        )
        assert result.best_step == 1
        assert result.best_loss == 0.2
        assert result.final_dissimilarity == 0.3


class TestFgsm:
    def test_zero_gradient_stays(self):
        source = data.Image.from_array(np.full((4, 4), 0.5))
        result = algorithms.fgsm(_ConstantModel(0.0), source, source, AttackConfig(alpha=0.03, t_max=1))
        assert result.adversarial == source
        assert result.movement == (0.0,)

    def test_clamps_to_the_box(self):
        pixels = np.full((4, 4), 0.5)
        pixels[0, 0] = 0.01
        source = data.Image.from_array(pixels)
        result = algorithms.fgsm(_ConstantModel(1.0), source, source, AttackConfig())
        assert result.adversarial.pixels[0, 0, 0] == 0.0
        assert result.adversarial.pixels[1, 1, 0] == pytest.approx(0.47)

    def test_one_step(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        config = AttackConfig(alpha=0.03, t_max=1, objective=Objective.CBCE, cbce_tau=0.05)
        result = algorithms.fgsm(model, source, target, config)
        assert result.stop_reason is StopReason.ONE_STEP
        assert result.steps_taken == 1
        assert len(result.loss_trace) == 2
        assert metrics.linf_distance(result.adversarial, source) <= 0.03 + 1e-9


class TestPgd:
    def test_budget_and_box(
        self, model: embedding.ReferenceEmbedder, dataset: data.IdentityDataset
    ):
        images = [image for _, _, image in dataset.iter_samples()]
        for seed in range(10):
            source, target = images[seed], images[(seed + 3) % len(images)]
            config = AttackConfig(t_max=40, seed=seed, objective=Objective.CBCE, cbce_tau=0.05)
            result = algorithms.pgd(model, source, target, config)
            assert metrics.linf_distance(result.adversarial, source) <= 0.03 + 1e-9
            assert 0.0 <= result.adversarial.pixels.min()
            assert result.adversarial.pixels.max() <= 1.0
            assert result.steps_taken == 40
            assert result.stop_reason is StopReason.MAX_STEPS
            assert max(result.movement) <= 0.001 + 1e-12

    def test_deterministic(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        config = AttackConfig(t_max=40, seed=5)
        first = algorithms.pgd(model, source, target, config)
        assert first.adversarial == algorithms.pgd(model, source, target, config).adversarial
        assert first.adversarial != algorithms.pgd(model, source, target, config.replace(seed=6)).adversarial

    def test_rejects_an_unreachable_border(
        self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]
    ):
        source, target = pair
        with pytest.raises(ValueError):
            algorithms.pgd(model, source, target, AttackConfig(t_max=10))

    def test_rejects_mismatched_images(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, _ = pair
        with pytest.raises(ValueError):
            algorithms.pgd(model, source, data.Image.from_array(np.zeros((4, 4))), AttackConfig(t_max=40))

    def test_similarity_descent(self, model: embedding.ReferenceEmbedder, dataset: data.IdentityDataset):
        images = [image for _, _, image in dataset.iter_samples()]
        improved = 0
        for seed in range(100):
            source, target = images[seed % len(images)], images[(seed + 5) % len(images)]
            result = algorithms.pgd(model, source, target, AttackConfig(t_max=40, seed=seed))
            improved += result.loss_trace[-1] <= result.loss_trace[0]
        assert improved >= 95

    def test_cbce_acceptance_region_absorbs(
        self, model: embedding.ReferenceEmbedder, dataset: data.IdentityDataset
    ):
        images = [image for _, _, image in dataset.iter_samples()]
        cases = [(images[0], images[0], 0.5)]
        for seed in range(1, 10):
            source, target = images[seed], images[(seed + 1) % len(images)]
            start = metrics.dissimilarity(model.embed(source), model.embed(target))
            cases.append((source, target, min(0.9, max(0.01, start / 2))))

        reached = 0
        for seed, (source, target, tau) in enumerate(cases):
            config = AttackConfig(t_max=40, seed=seed, objective=Objective.CBCE, cbce_tau=tau)
            result = algorithms.pgd(model, source, target, config)
            inside = [t for t, d in enumerate(result.dissimilarity_trace) if d <= tau]
            if inside:
                reached += 1
                assert not any(result.movement[inside[0] :])
                assert all(d <= tau for d in result.dissimilarity_trace[inside[0] :])
        assert reached >= 1


class TestSgadv:
    def test_halts(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        result = algorithms.sgadv(model, source, target, AttackConfig(seed=1))
        assert 1 <= result.steps_taken <= 1000
        assert len(result.loss_trace) == result.steps_taken + 1
        assert len(result.dissimilarity_trace) == result.steps_taken + 1
        assert result.stop_reason in (StopReason.CONVERGED, StopReason.SETTLED, StopReason.MAX_STEPS)
        assert result.best_loss <= result.loss_trace[-1]
        assert result.loss_trace == result.dissimilarity_trace
        assert metrics.linf_distance(result.adversarial, source) <= 0.03 + 1e-9

    def test_gets_closer(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        start = metrics.dissimilarity(model.embed(source), model.embed(target))
        result = algorithms.sgadv(model, source, target, AttackConfig(seed=2))
        assert result.final_dissimilarity < start

    def test_similarity_only(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        with pytest.raises(ValueError):
            algorithms.sgadv(model, source, target, AttackConfig(objective=Objective.CBCE, cbce_tau=0.1))


class TestRunTechnique:
    def test_forces_the_objective(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        config = AttackConfig(objective=Objective.CBCE, cbce_tau=0.1, seed=4)
        result = algorithms.run_technique(Technique.SGADV, model, source, target, config)
        assert result.loss_trace == result.dissimilarity_trace

    def test_cbce_needs_a_threshold(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        with pytest.raises(ValueError):
            algorithms.run_technique(Technique.PGD_CBCE, model, source, target, AttackConfig(t_max=40))

    def test_fgsm(self, model: embedding.ReferenceEmbedder, pair: tuple[data.Image, data.Image]):
        source, target = pair
        config = AttackConfig(alpha=0.03, t_max=1, cbce_tau=0.05)
        result = algorithms.run_technique(Technique.FGSM_CBCE, model, source, target, config)
        assert result.stop_reason is StopReason.ONE_STEP
