"""Shared fixtures: a synthetic regression problem whose training dynamics
are verified end to end (RMSE halving, gamma sweep), built once per session
because training runs take seconds."""

import numpy as np
import pytest

import specgp as sg

SYNTH_SEED = 10
NOISE_SD = 0.1
LENGTHSCALE = 0.055


class SyntheticProblem:
    """A 2-d, five-frequency dataset with a fixed split, standardization,
    partition, and prior; trains and scores models with pinned seeds."""

    def __init__(self):
        self.dataset, self.truth = sg.synth_ssgp(
            n=2000, d=2, m_true=5, noise=NOISE_SD, seed=SYNTH_SEED,
            lengthscale=LENGTHSCALE,
        )
        self.train_idx, self.test_idx = sg.split_indices(
            self.dataset.n, 0.95, seed=SYNTH_SEED
        )
        self.std = sg.Standardization.fit(
            self.dataset.X[self.train_idx], self.dataset.y[self.train_idx]
        )
        x_std = self.std.apply_x(self.dataset.X[self.train_idx])
        y_std = self.std.apply_y(self.dataset.y[self.train_idx])
        self.cfg = sg.SpectralConfig(
            d=2, m=5, signal_variance=1.0, noise_variance=0.01
        )
        self.partition = sg.kmeans_partition(x_std, y_std, p=20, seed=SYNTH_SEED)
        self.prior = sg.PriorSpec.for_inputs(x_std, self.cfg)
        self._trained = {}

    def initial_state(self, train_seed):
        return sg.initial_state(self.prior, self.cfg, seed=train_seed)

    def train(self, train_seed, iterations):
        key = (train_seed, iterations)
        if key not in self._trained:
            tcfg = sg.TrainConfig(
                iterations=iterations,
                plan=sg.GradientSamplePlan(4, 8, train_seed),
                schedule=sg.StepSchedule(
                    base_step=0.1, decay_power=0.51, adaptive=True
                ),
                seed=train_seed,
            )
            self._trained[key] = sg.train(
                self.partition, self.initial_state(train_seed),
                self.prior, self.cfg, tcfg,
            )
        return self._trained[key]

    def rmse_at(self, idx, state, spectral, gamma=0.0, n_samples=256):
        model = sg.TrainedModel(
            state=state, prior=self.prior, spectral=spectral,
            partition=self.partition, standardization=self.std,
        )
        pcfg = sg.PredictConfig(n_samples=n_samples, gamma_mix=gamma, seed=123)
        means, _ = sg.predict_batch(
            self.std.apply_x(self.dataset.X[idx]), model, pcfg
        )
        return sg.rmse(self.std.invert_mean(means), self.dataset.y[idx])


@pytest.fixture(scope="session")
def synthetic_problem():
    return SyntheticProblem()
