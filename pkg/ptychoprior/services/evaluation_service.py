"""
Evaluation Service
SSIM scoring, phase alignment and PGM image dumps
"""
import io
import os
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from PIL import Image

from ptycho_config import PtychoConfig
from ptychoprior.core.fields import ComplexField, RealField
from ptychoprior.core.ptyf import atomic_write_bytes, read_field
from ptychoprior.errors import DimensionError, DomainError


@dataclass(frozen=True)
class SsimConfig:
    window: int = PtychoConfig.SSIM_WINDOW
    sigma: float = PtychoConfig.SSIM_SIGMA
    k1: float = PtychoConfig.SSIM_K1
    k2: float = PtychoConfig.SSIM_K2
    dynamic_range: float = PtychoConfig.SSIM_DYNAMIC_RANGE

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise DomainError(f"SSIM window must be a positive odd size, got {self.window}")
        if self.sigma <= 0 or self.dynamic_range <= 0:
            raise DomainError("SSIM sigma and dynamic range must be positive")

    def describe(self):
        return (f"window={self.window} sigma={self.sigma} K1={self.k1} K2={self.k2} "
                f"L={self.dynamic_range}")


@lru_cache(maxsize=8)
def gaussian_window(size, sigma):
    """Normalized 2D Gaussian weights (sum exactly 1 up to rounding)"""
    offsets = np.arange(size) - (size - 1) / 2.0
    line = np.exp(-offsets ** 2 / (2.0 * sigma ** 2))
    line /= line.sum()
    window = np.outer(line, line)
    window.setflags(write=False)
    return window


def _check_pair(a, b):
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")


def _local_mean(data, window):
    views = np.lib.stride_tricks.sliding_window_view(data, window.shape)
    return np.einsum('ijkl,kl->ij', views, window)


def ssim_map(a, b, cfg=None):
    """Local SSIM over every fully contained window position"""
    cfg = cfg or SsimConfig()
    _check_pair(a, b)
    x, y = a.data, b.data
    if min(x.shape) < cfg.window:
        raise DimensionError(f"images {x.shape} are smaller than the {cfg.window}px SSIM window")
    window = gaussian_window(cfg.window, cfg.sigma)
    c1 = (cfg.k1 * cfg.dynamic_range) ** 2
    c2 = (cfg.k2 * cfg.dynamic_range) ** 2
    mu_x, mu_y = _local_mean(x, window), _local_mean(y, window)
    var_x = _local_mean(x * x, window) - mu_x * mu_x
    var_y = _local_mean(y * y, window) - mu_y * mu_y
    cov = _local_mean(x * y, window) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return numerator / denominator


def ssim(a, b, cfg=None):
    return float(np.mean(ssim_map(a, b, cfg)))


def align_phase(recon, truth):
    """Remove the global phase offset: recon - mean(recon - truth)"""
    _check_pair(recon, truth)
    return RealField(recon.data - np.mean(recon.data - truth.data))


def object_phase(obj, truth=None):
    """
    Phase image of a complex reconstruction

    The global complex phase is removed first, either against `truth` (least
    squares fit of exp(j*truth)) or against the mean field.
    """
    if truth is not None:
        _check_pair(obj, truth)
        reference = np.sum(obj.data * np.exp(-1j * truth.data))
        rotated = obj.data * np.exp(-1j * np.angle(reference))
        # measure phases relative to the truth so no value wraps at +-pi
        return RealField(truth.data + np.angle(rotated * np.exp(-1j * truth.data)))
    reference = np.sum(obj.data)
    return RealField(np.angle(obj.data * np.exp(-1j * np.angle(reference))))


def quantize(field):
    """floor(v * 255 + 0.5) on values clamped to [0, 1]"""
    return np.floor(np.clip(field.data, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _pgm_bytes(pixels):
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format='PPM')
    return buffer.getvalue()


def dump_image(field, path):
    """8-bit binary PGM (P5, maxval 255), written atomically"""
    atomic_write_bytes(path, _pgm_bytes(quantize(field)))


def dump_panel(fields, path, gap=2):
    """Side-by-side panel of same-height images separated by white columns"""
    if not fields:
        raise DomainError("a panel needs at least one image")
    height = fields[0].height
    columns = []
    for index, field in enumerate(fields):
        if field.height != height:
            raise DimensionError(f"panel images must share a height, got {field.height} and {height}")
        if index:
            columns.append(np.full((height, gap), 255, dtype=np.uint8))
        columns.append(quantize(field))
    atomic_write_bytes(path, _pgm_bytes(np.hstack(columns)))


def evaluate_files(recon_path, truth_path, out_path=None, cfg=None):
    """
    Score a stored reconstruction against the stored truth phantom

    A complex reconstruction is first reduced to its phase with
    object_phase; the phase is then offset-aligned before scoring.
    """
    cfg = cfg or SsimConfig()
    recon, truth = read_field(recon_path), read_field(truth_path)
    if not isinstance(truth, RealField):
        raise DimensionError(f"{truth_path} does not hold a real phase image")
    if isinstance(recon, ComplexField):
        recon = object_phase(recon, truth)
    elif not isinstance(recon, RealField):
        raise DimensionError(f"{recon_path} does not hold a 2D field")
    score = ssim(align_phase(recon, truth), truth, cfg)
    if out_path is not None:
        lines = [f"ssim={score!r}", 'aligned=global_offset'] + cfg.describe().split()
        text = '\n'.join(lines) + '\n'
        os.makedirs(os.path.dirname(os.path.abspath(out_path)), exist_ok=True)
        atomic_write_bytes(out_path, text.encode('utf-8'))
    print(f"📊 SSIM = {score:.4f}")
    return score
