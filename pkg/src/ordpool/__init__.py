"""Ordinal pooling for small convolutional networks in numpy."""

from ._accel import BACKEND
from .analysis import distribution, enumerate_templates, nearest_template
from .errors import OrdpoolError
from .experiment import ExperimentConfig, load_mnist, load_mnist_idx, paired_run, relative_variation, sweep
from .network import SGD, NetworkSpec, build_network, build_paired, extra_ordinal_params
from .pooling import (OrdinalKernelSet, PoolMode, classic_pool_forward, init_kernels,
                      ordinal_pool_backward, ordinal_pool_forward, ordinal_sort, project_simplex)
from .rng import RngStream

__version__ = "0.1.0"
