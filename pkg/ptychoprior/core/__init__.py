"""
Core packages: field types, FFT, randomness and the PTYF array format
"""
from ptychoprior.core.fields import ComplexField, RealField
from ptychoprior.core.fft import fft2, fft2_array, ifft2, ifft2_array, is_power_of_two
from ptychoprior.core.ptyf import read_field, write_field
from ptychoprior.core.rng import Rng

__all__ = [
    'ComplexField', 'RealField', 'Rng',
    'fft2', 'ifft2', 'fft2_array', 'ifft2_array', 'is_power_of_two',
    'read_field', 'write_field',
]
