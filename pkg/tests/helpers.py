"""Small datasets and models shared by several test modules."""
import numpy as np

from pcnode.baselines import VanillaNode
from pcnode.building import default_true_params, synth_building_generate, synthetic_inputs
from pcnode.data import Normalizer, Trajectory, chunk, rk4_generate
from pcnode.gas_piston import INPUT_LABELS, STATE_LABELS, GasPistonTruth, LearnedGasPiston


def decay_traj(a, n=11, h=0.1, x0=1.0):
    x = x0 * (1 + h * a) ** np.arange(n)
    return Trajectory(np.arange(n) * h, x[:, None], np.zeros((n, 1)), ["x[m]"], ["u[N]"])


def building_chunks(n_samples=200, length=51, substeps=10, seed=0, params=None):
    params = default_true_params(3) if params is None else params
    inputs = synthetic_inputs(3, n_samples, 900.0, np.random.default_rng(seed))
    traj = synth_building_generate(params, inputs, np.full(3, 293.0), h=900.0, substeps=substeps)
    return chunk(traj, length)


def gas_chunks(n=151, length=51):
    truth = GasPistonTruth()
    forcing = lambda t: np.array([2.0 * np.sin(2 * np.pi * 0.2 * t)])
    traj = rk4_generate(truth, truth.x0, forcing, 0.01, n - 1, substeps=10,
                        state_labels=STATE_LABELS, input_labels=INPUT_LABELS)
    return chunk(traj, length)


def gas_model(chunks, seed=0):
    norm = Normalizer.fit(chunks)
    return LearnedGasPiston.initialize(4, seed=seed, shift=norm.state_mean, scale=norm.state_std)


def vanilla_model(chunks, seed=0):
    norm = Normalizer.fit(chunks)
    return VanillaNode.initialize(4, 1, (6, 6), seed=seed, use_inputs=True, shift=norm.state_mean,
                                  scale=norm.state_std, input_shift=norm.input_mean, input_scale=norm.input_std,
                                  output_gain=1.0)
