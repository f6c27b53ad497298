"""Minimal reverse-mode engine for dense networks."""

from .autodiff import CTensor, Tensor, backward
from .checkpoint import load_checkpoint, save_checkpoint, stores_equal
from .gradcheck import GradcheckReport, gradcheck, gradcheck_store
from .layers import (Ctx, Dense, LayerSpec, Sequential, anneal_slope, binary_backward, binary_forward,
                     constant_modulus, constant_modulus_param, dense_forward, mlp)
from .store import Param, ParameterStore, adam_step

__all__ = [
    "CTensor", "Ctx", "Dense", "GradcheckReport", "LayerSpec", "Param", "ParameterStore", "Sequential", "Tensor",
    "adam_step", "anneal_slope", "backward", "binary_backward", "binary_forward", "constant_modulus",
    "constant_modulus_param", "dense_forward", "gradcheck", "gradcheck_store", "load_checkpoint", "mlp",
    "save_checkpoint", "stores_equal",
]
