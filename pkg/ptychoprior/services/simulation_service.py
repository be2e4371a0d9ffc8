"""
Simulation Service
Probes, phantoms, raster scans and noisy diffraction stacks
"""
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from PIL import Image, ImageDraw

from ptycho_config import PtychoConfig
from ptychoprior.core.fft import fft2_array, is_power_of_two
from ptychoprior.core.fields import ComplexField, RealField
from ptychoprior.core.ptyf import atomic_write_bytes, read_field, write_field
from ptychoprior.core.rng import Rng
from ptychoprior.errors import DimensionError, DomainError, EmptyPatternError
from ptychoprior.nn.checkpoint import parse_key_values


@dataclass(frozen=True, eq=False)
class Probe:
    field: ComplexField
    diameter_px: int

    @property
    def size(self):
        return self.field.height


@dataclass(frozen=True)
class ScanPattern:
    positions: tuple
    step_px: int
    probe_size: int
    object_size: int

    @property
    def overlap(self):
        return (self.probe_size - self.step_px) / self.probe_size

    @property
    def count(self):
        return len(self.positions)

    def as_array(self):
        return np.asarray(self.positions, dtype=np.int64).reshape(-1, 2)


@dataclass(frozen=True)
class NoiseModel:
    sigma: float = 0.0
    enabled: bool = True

    def __post_init__(self):
        if self.sigma < 0:
            raise DomainError(f"noise sigma must be nonnegative, got {self.sigma}")

    @property
    def active(self):
        return self.enabled and self.sigma > 0


@dataclass(frozen=True, eq=False)
class Phantom:
    phase: RealField
    label: str = 'phantom'

    def __post_init__(self):
        object.__setattr__(self, 'phase', RealField(np.clip(self.phase.data, 0.0, 1.0)))


@dataclass(eq=False)
class DiffractionStack:
    frames: list
    pattern: ScanPattern
    noise: NoiseModel = field(default_factory=NoiseModel)
    peak_intensity: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if len(self.frames) != self.pattern.count:
            raise DimensionError(f"{len(self.frames)} frames for {self.pattern.count} positions")

    def intensities(self):
        """All frames as one (K, M, M) array"""
        return np.stack([frame.data for frame in self.frames])


# ---------------------------------------------------------------- builders

def make_object(phantom):
    phase = phantom.phase.data
    if np.any(phase < 0) or np.any(phase > 1):
        raise DomainError("phantom phase must lie in [0, 1]")
    return ComplexField(np.exp(1j * phase))


def make_probe(size, diameter_px, defocus=PtychoConfig.PROBE_DEFOCUS, edge_px=PtychoConfig.PROBE_EDGE_PX):
    """
    Raised-cosine edged disk with quadratic (defocus) phase, unit energy

    Args:
        size: window size M
        diameter_px: disk diameter in pixels, at most M
        defocus: phase at the disk edge, radians (phase = defocus * r^2, r normalized)
    """
    if diameter_px < 1 or diameter_px > size:
        raise DimensionError(f"probe diameter {diameter_px} does not fit a {size}px window")
    center = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    radius = np.hypot(yy - center, xx - center)
    outer = diameter_px / 2.0
    inner = max(outer - edge_px, 0.0)
    ramp = np.clip((radius - inner) / max(outer - inner, 1e-12), 0.0, 1.0)
    amplitude = np.where(radius >= outer, 0.0, 0.5 * (1.0 + np.cos(np.pi * ramp)))
    phase = defocus * (radius / outer) ** 2
    probe = amplitude * np.exp(1j * phase)
    energy = np.sum(np.abs(probe) ** 2)
    if energy <= 0:
        raise DimensionError(f"probe of diameter {diameter_px} has no support")
    return Probe(ComplexField(probe / np.sqrt(energy)), diameter_px)


def make_raster(object_size, probe_size, step_px):
    if step_px < 1:
        raise DomainError(f"step must be at least 1 pixel, got {step_px}")
    if probe_size > object_size:
        raise DimensionError(f"probe {probe_size}px larger than object {object_size}px")
    anchors = list(range(0, object_size - probe_size + 1, step_px))
    positions = tuple((r, c) for r in anchors for c in anchors)
    if not positions:
        raise EmptyPatternError(f"no valid position for N={object_size}, M={probe_size}, step={step_px}")
    return ScanPattern(positions, step_px, probe_size, object_size)


def step_for_overlap(overlap, probe_size):
    """Scan step giving the requested overlap fraction (M - step) / M"""
    return max(1, int(round(probe_size * (1.0 - overlap))))


def exit_wave(obj, probe, position):
    size = probe.size
    row, col = position
    if row < 0 or col < 0 or row + size > obj.height or col + size > obj.width:
        raise DimensionError(f"window at {position} of size {size} leaves the {obj.shape} object")
    return ComplexField(probe.field.data * obj.data[row:row + size, col:col + size])


def diffract(wave):
    spectrum = fft2_array(wave.data)
    return RealField(spectrum.real ** 2 + spectrum.imag ** 2)


def add_poisson_noise(frame, noise, rng, peak_intensity):
    """
    Scaled Poisson sampling calibrated to the stack peak

    With kappa = 1 / (sigma^2 * I_peak) the relative standard deviation of a
    pixel at I_peak is exactly sigma.
    """
    if not noise.active:
        return frame
    if peak_intensity <= 0:
        raise DomainError(f"peak intensity must be positive, got {peak_intensity}")
    if np.any(frame.data < 0):
        raise DomainError("intensities must be nonnegative")
    kappa = 1.0 / (noise.sigma ** 2 * peak_intensity)
    counts = rng.poisson(frame.data * kappa)
    return RealField(counts / kappa)


def simulate(phantom, probe, pattern, noise, rng, workers=PtychoConfig.WORKERS):
    """Forward model for every scan position; a pure function of the seed"""
    if probe.size != pattern.probe_size or phantom.phase.height != pattern.object_size:
        raise DimensionError(
            f"probe {probe.size}px / phantom {phantom.phase.height}px do not match the pattern "
            f"({pattern.probe_size}px over {pattern.object_size}px)")
    obj = make_object(phantom)
    clean = [diffract(exit_wave(obj, probe, pos)) for pos in pattern.positions]
    peak = max(float(frame.data.max()) for frame in clean)

    def noisy(index):
        return add_poisson_noise(clean[index], noise, rng.split(index), peak)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(noisy, range(len(clean))))
    else:
        frames = [noisy(i) for i in range(len(clean))]
    return DiffractionStack(frames, pattern, noise, peak, rng.seed)


# ---------------------------------------------------------------- phantoms

def _polygon_mask(size, rng):
    low, high = PtychoConfig.PHANTOM_POLYGON_VERTICES
    vertices = int(rng.integers(low, high + 1))
    center = rng.uniform(0.2 * size, 0.8 * size, size=2)
    radius = rng.uniform(size / 10.0, size / 4.0)
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=vertices))
    points = [(float(center[1] + radius * np.cos(a)), float(center[0] + radius * np.sin(a)))
              for a in angles]
    canvas = Image.new('L', (size, size), 0)
    ImageDraw.Draw(canvas).polygon(points, fill=255)
    return np.asarray(canvas) > 0


def make_phantom(size, rng, label='phantom'):
    """
    One member of the procedural phantom family

    3-8 Gaussian bumps (random centers, widths in [N/16, N/5], heights in
    [0.15, 0.5]) over a 0.1 base, then 1-3 random polygons of constant
    phase in [0.3, 0.9] painted on top, clamped to [0, 1].
    """
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    phase = np.full((size, size), 0.1)
    low, high = PtychoConfig.PHANTOM_BLOBS
    for _ in range(int(rng.integers(low, high + 1))):
        cy, cx = rng.uniform(0, size, size=2)
        width = rng.uniform(size / 16.0, size / 5.0)
        height = rng.uniform(0.15, 0.5)
        phase += height * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * width ** 2))
    low, high = PtychoConfig.PHANTOM_POLYGONS
    for _ in range(int(rng.integers(low, high + 1))):
        phase[_polygon_mask(size, rng)] = rng.uniform(0.3, 0.9)
    return Phantom(RealField(np.clip(phase, 0.0, 1.0)), label)


def make_phantom_dataset(count, size, rng):
    if count < 1:
        raise DomainError(f"dataset needs at least one phantom, got {count}")
    return [make_phantom(size, rng.split(i), label=f"blob-{i:05d}") for i in range(count)]


def make_noise_phantom(size, rng):
    """Uniform random phase, outside the procedural family"""
    return Phantom(RealField(rng.uniform(0.0, 1.0, size=(size, size))), 'noise')


def load_phantom_image(path, size):
    """Grayscale image resized to size x size and scaled to [0, 1]"""
    with Image.open(path) as image:
        gray = image.convert('L').resize((size, size), Image.Resampling.BILINEAR)
        data = np.asarray(gray, dtype=np.float64) / 255.0
    return Phantom(RealField(data), os.path.splitext(os.path.basename(path))[0])


def probe_window_for(diameter_px):
    """Smallest power-of-two window that holds the probe disk"""
    size = 1
    while size < diameter_px:
        size *= 2
    return size


# ---------------------------------------------------------------- persistence

def save_stack(directory, stack, probe, phantom=None):
    os.makedirs(directory, exist_ok=True)
    pattern = stack.pattern
    meta = {
        'N': pattern.object_size,
        'M': pattern.probe_size,
        'step_px': pattern.step_px,
        'sigma': stack.noise.sigma if stack.noise.enabled else 0.0,
        'seed': stack.seed,
        'overlap': pattern.overlap,
        'count': pattern.count,
        'probe_diam': probe.diameter_px,
        'peak_intensity': repr(stack.peak_intensity),
    }
    text = ''.join(f"{key}={value}\n" for key, value in meta.items())
    atomic_write_bytes(os.path.join(directory, 'meta.txt'), text.encode('utf-8'))
    for index, frame in enumerate(stack.frames):
        write_field(os.path.join(directory, f"frame_{index:05d}.ptyf"), frame)
    write_field(os.path.join(directory, 'probe.ptyf'), probe.field)
    if phantom is not None:
        write_field(os.path.join(directory, 'phantom.ptyf'), phantom.phase)
    print(f"💾 Saved {pattern.count} frames to {directory}")


def load_stack(directory):
    """Returns (stack, probe, phantom or None)"""
    with open(os.path.join(directory, 'meta.txt'), 'r', encoding='utf-8') as handle:
        meta = parse_key_values(handle.read())
    size, window, step = int(meta['N']), int(meta['M']), int(meta['step_px'])
    pattern = make_raster(size, window, step)
    count = int(meta['count'])
    if count != pattern.count:
        raise DimensionError(f"meta.txt lists {count} frames, raster has {pattern.count}")
    frames = [read_field(os.path.join(directory, f"frame_{i:05d}.ptyf")) for i in range(count)]
    sigma = float(meta.get('sigma', 0.0))
    noise = NoiseModel(sigma, enabled=sigma > 0)
    stack = DiffractionStack(frames, pattern, noise, float(meta.get('peak_intensity', 0.0)),
                             int(meta.get('seed', 0)))
    probe_field = read_field(os.path.join(directory, 'probe.ptyf'))
    probe = Probe(probe_field, int(meta.get('probe_diam', window)))
    phantom_path = os.path.join(directory, 'phantom.ptyf')
    phantom = Phantom(read_field(phantom_path), 'truth') if os.path.exists(phantom_path) else None
    return stack, probe, phantom


def run_simulation(size, probe_diameter, step_px, sigma, seed, defocus=PtychoConfig.PROBE_DEFOCUS,
                   phantom=None):
    """Convenience pipeline used by the CLI and the sweep"""
    check_geometry(size, probe_window_for(probe_diameter))
    rng = Rng(seed)
    if phantom is None:
        phantom = make_phantom(size, rng.split(0), label=f"test-{seed}")
    probe = make_probe(probe_window_for(probe_diameter), probe_diameter, defocus)
    pattern = make_raster(size, probe.size, step_px)
    noise = NoiseModel(sigma, enabled=sigma > 0)
    stack = simulate(phantom, probe, pattern, noise, rng.split(1))
    return stack, probe, phantom


def check_geometry(size, probe_size):
    if not is_power_of_two(size) or not is_power_of_two(probe_size):
        raise DimensionError(f"object {size}px and probe {probe_size}px must be powers of two")
