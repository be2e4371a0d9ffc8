"""
ePIE Service
Object-only extended Ptychographical Iterative Engine with a known probe
"""
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from ptycho_config import PtychoConfig
from ptychoprior.core.fft import fft2_array, ifft2_array
from ptychoprior.core.fields import ComplexField
from ptychoprior.core.rng import Rng
from ptychoprior.errors import DimensionError, DivergedError, DomainError, EmptyPatternError


@dataclass(frozen=True)
class EpieConfig:
    alpha: float = PtychoConfig.EPIE_ALPHA
    iterations: int = PtychoConfig.EPIE_ITERATIONS
    init: str = 'flat'  # flat | random
    seed: int = 0  # drives the random init and the per-epoch shuffle
    shuffle_positions: bool = True

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise DomainError(f"alpha must lie in (0, 2], got {self.alpha}")
        if self.iterations < 1:
            raise DomainError(f"iterations must be at least 1, got {self.iterations}")
        if self.init not in ('flat', 'random'):
            raise DomainError(f"unknown init '{self.init}'")


def _check(stack, probe):
    if stack.pattern.count == 0:
        raise EmptyPatternError("stack has no scan positions")
    if stack.pattern.probe_size != probe.size:
        raise DimensionError(f"stack frames are {stack.pattern.probe_size}px, probe is {probe.size}px")


def modulus_projection(spectrum, intensity, floor=PtychoConfig.MODULUS_FLOOR):
    """Replace Fourier magnitudes by sqrt(measured intensity), keep phases"""
    magnitude = np.maximum(np.abs(spectrum), floor)
    return np.sqrt(intensity) * spectrum / magnitude


def initial_object(size, cfg):
    if cfg.init == 'flat':
        return np.ones((size, size), dtype=np.complex128)
    rng = Rng(cfg.seed)
    return np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(size, size)))


def epie_reconstruct(stack, probe, cfg=None, initial=None):
    """
    Sequential per-position object updates

    Args:
        stack: DiffractionStack
        probe: known Probe (never updated)
        cfg: EpieConfig
        initial: optional ComplexField overriding cfg.init

    Returns:
        Reconstructed object as a ComplexField
    """
    cfg = cfg or EpieConfig()
    _check(stack, probe)
    size = stack.pattern.object_size
    window = probe.size
    obj = initial.data.copy() if initial is not None else initial_object(size, cfg)
    p = probe.field.data
    step = cfg.alpha * np.conj(p) / np.max(np.abs(p) ** 2)
    intensities = stack.intensities()
    positions = stack.pattern.as_array()
    order_rng = Rng(cfg.seed).split(1)

    for epoch in tqdm(range(cfg.iterations), desc='ePIE', disable=not PtychoConfig.SHOW_PROGRESS):
        order = order_rng.permutation(len(positions)) if cfg.shuffle_positions else range(len(positions))
        for index in order:
            row, col = positions[index]
            patch = obj[row:row + window, col:col + window]
            wave = p * patch
            revised = ifft2_array(modulus_projection(fft2_array(wave), intensities[index]))
            obj[row:row + window, col:col + window] = patch + step * (revised - wave)
        if not np.all(np.isfinite(obj)):
            raise DivergedError(f"ePIE diverged at epoch {epoch}", step=epoch)
        if PtychoConfig.ENABLE_DEBUG_OUTPUT and epoch % 50 == 0:
            print(f"🔄 ePIE epoch {epoch}: L1 = {_l1(intensities, p, obj, positions):.6g}")
    return ComplexField(obj)


def _l1(intensities, p, obj, positions):
    window = p.shape[0]
    rows = positions[:, 0:1] + np.arange(window)
    cols = positions[:, 1:2] + np.arange(window)
    patches = obj[rows[:, :, None], cols[:, None, :]]
    spectrum = fft2_array(p * patches)
    model = spectrum.real ** 2 + spectrum.imag ** 2
    return float(np.sum(np.abs(intensities - model)))


def l1_amplitude_loss(stack, probe, obj):
    """Sum over positions of || d_i - |F(P * crop(x, i))|^2 ||_1"""
    _check(stack, probe)
    if obj.shape != (stack.pattern.object_size,) * 2:
        raise DimensionError(f"object {obj.shape} does not match the {stack.pattern.object_size}px scan")
    return _l1(stack.intensities(), probe.field.data, obj.data, stack.pattern.as_array())
