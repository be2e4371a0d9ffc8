"""
Minimal reverse-mode differentiation, optimizers and layers
"""
from ptychoprior.nn.layers import Conv3x3, Dense, Layer, Network
from ptychoprior.nn.optim import Optimizer
from ptychoprior.nn.tensor import Tape, Tensor, backward

__all__ = ['Tape', 'Tensor', 'backward', 'Optimizer', 'Layer', 'Dense', 'Conv3x3', 'Network']
