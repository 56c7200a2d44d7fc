"""Exact-simulation variational quantum classifier for the two-moons task."""

from .ansatz import AnsatzSpec, expectations, jacobian, param_count, run_ansatz
from .dataset import MoonsDataset, generate, load_csv, make_moons, save_csv, split
from .hybridnn import (
    FFNNModel,
    HybridModel,
    MetricsHistory,
    TrainConfig,
    ffnn_baseline,
    train,
    trainable_count,
)
from .statevector import GateOp, StateVector, expectation_z, zero_state

__version__ = "0.1.0"
