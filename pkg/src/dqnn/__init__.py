"""Dissipative quantum neural networks: exact density-matrix simulation and training."""
from .channels import KrausChannel, amplitude_damping, bitflip_iid, single_error_bitflip
from .codes import Dataset, TrainingPair, extract_codeword
from .evaluation import compare_to_oracle, conditional_fidelity, mesh_fidelity
from .network import NetworkSpec, forward, load_checkpoint, make_spec, save_checkpoint
from .pauli import parameter_count
from .training import SessionConfig, run_session, run_sessions

__version__ = "0.1.0"

__all__ = [
    "Dataset", "KrausChannel", "NetworkSpec", "SessionConfig", "TrainingPair",
    "amplitude_damping", "bitflip_iid", "compare_to_oracle", "conditional_fidelity",
    "extract_codeword", "forward", "load_checkpoint", "make_spec", "mesh_fidelity",
    "parameter_count", "run_session", "run_sessions", "save_checkpoint",
    "single_error_bitflip",
]
