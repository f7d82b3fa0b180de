"""KPCANet: kernel-PCA filter cascades with binary hashing and histogram pooling."""
from .core import ConfigError, DataError, Dataset, NetConfig, make_rng, split_dataset
from .kernels import KernelSpec
from .kpca import InsufficientSpectrumError, KpcaBasis, learn_filters, project
from .network import Model, fit, forward, train_network

__all__ = [
    "ConfigError", "DataError", "Dataset", "NetConfig", "KernelSpec", "KpcaBasis",
    "InsufficientSpectrumError", "Model", "fit", "forward", "learn_filters", "make_rng",
    "project", "split_dataset", "train_network",
]
__version__ = "0.1.0"
