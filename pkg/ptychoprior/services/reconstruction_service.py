"""
Reconstruction Service
Latent search, progressive weight optimisation and the full two-step driver.

The object is phase-only: x = exp(j * G(z)) with G the pretrained generator.
Step one fits z with the generator frozen; step two trains z together with the
generator weights, unfreezing layers stage by stage, under the data term plus
optional TV and discriminator penalties.
"""
import csv
import io
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from tqdm import tqdm

from ptycho_config import PtychoConfig
from ptychoprior.core.fields import ComplexField, RealField
from ptychoprior.core.ptyf import atomic_write_bytes, write_field
from ptychoprior.core.rng import Rng
from ptychoprior.errors import ArchitectureMismatchError, DimensionError, DivergedError, DomainError
from ptychoprior.nn import complex_ops, ops
from ptychoprior.nn.optim import Optimizer
from ptychoprior.nn.tensor import Tape, Tensor, backward
from ptychoprior.services.gan_service import generate, load_gan

LOSS_KINDS = ('l1_intensity', 'poisson_nll')
DIRECTIONS = ('shallow_first', 'deep_first')


@dataclass(frozen=True)
class ReconConfig:
    loss_kind: str = PtychoConfig.LOSS_KIND
    latent_loss_kind: str = PtychoConfig.LATENT_LOSS_KIND
    lambda1: float = 0.0
    lambda2: float = 0.0
    latent_lr: float = PtychoConfig.LATENT_LR
    latent_steps: int = PtychoConfig.LATENT_STEPS
    weight_lr: float = PtychoConfig.WEIGHT_LR
    stage_steps: int = PtychoConfig.STAGE_STEPS
    total_steps: int = PtychoConfig.TOTAL_STEPS
    direction: str = 'shallow_first'
    progressive: bool = True
    all_layers_stage: int = PtychoConfig.ALL_LAYERS_STAGE
    max_restarts: int = PtychoConfig.MAX_RESTARTS
    seed: int = PtychoConfig.SEED
    workers: int = PtychoConfig.WORKERS
    literal_abs_poisson: bool = False

    def __post_init__(self):
        for name in ('loss_kind', 'latent_loss_kind'):
            if getattr(self, name) not in LOSS_KINDS:
                raise DomainError(f"{name} must be one of {LOSS_KINDS}, got '{getattr(self, name)}'")
        if self.direction not in DIRECTIONS:
            raise DomainError(f"direction must be one of {DIRECTIONS}, got '{self.direction}'")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise DomainError("regularization weights must be nonnegative")
        if self.latent_lr <= 0 or self.weight_lr <= 0:
            raise DomainError("learning rates must be positive")
        if min(self.latent_steps, self.stage_steps, self.total_steps, self.workers) < 1:
            raise DomainError("step counts and worker count must be positive")
        if self.max_restarts < 0 or self.all_layers_stage < 0:
            raise DomainError("max_restarts and all_layers_stage must be nonnegative")


def config_for_stack(stack, **overrides):
    """
    ReconConfig whose regularization defaults follow the stack's noise model

    Noiseless stacks run unregularized; stacks with active noise get
    (NOISY_LAMBDA1, NOISY_LAMBDA2). Explicit overrides always win.
    """
    if stack.noise.active:
        overrides.setdefault('lambda1', PtychoConfig.NOISY_LAMBDA1)
        overrides.setdefault('lambda2', PtychoConfig.NOISY_LAMBDA2)
    return ReconConfig(**overrides)


@dataclass(frozen=True)
class TraceEntry:
    step: int
    data: float
    tv: float
    dl: float
    total: float


@dataclass(eq=False)
class ReconResult:
    phase: RealField
    object: ComplexField
    latent: np.ndarray
    loss_trace: list = field(default_factory=list)
    stage_boundaries: list = field(default_factory=list)
    stage_phases: list = field(default_factory=list)
    latent_phase: RealField = None
    latent_trace: list = field(default_factory=list)
    best_step: int = 0


# ---------------------------------------------------------------- losses

def _check_stack(stack, probe, phase):
    size = stack.pattern.object_size
    if phase.shape != (size, size):
        raise DimensionError(f"phase {phase.shape} does not match the {size}px scan")
    if probe.size != stack.pattern.probe_size:
        raise DimensionError(f"probe {probe.size}px does not match {stack.pattern.probe_size}px frames")


def model_intensities(stack, probe, phase, workers=1):
    """|F(P * crop(exp(j*phase), i))|^2 for every position, shape (K, M, M)"""
    _check_stack(stack, probe, phase)
    obj = complex_ops.expj(phase)
    patches = complex_ops.crop_windows(obj, stack.pattern.as_array(), probe.size)
    waves = complex_ops.cmul_const(patches, probe.field.data)
    return complex_ops.abs2(complex_ops.fft2c(waves, workers))


def data_loss_l1(stack, probe, phase, workers=1):
    phase = ops.as_tensor(phase)
    model = model_intensities(stack, probe, phase, workers)
    return ops.sum(ops.abs(ops.sub(Tensor.wrap(stack.intensities()), model)))


def data_loss_poisson(stack, probe, phase, workers=1, literal_abs=False, eps=PtychoConfig.LOG_EPS):
    """Sum of I - 2 d log(sqrt(I) + eps); `literal_abs` wraps each summand in |.|"""
    phase = ops.as_tensor(phase)
    model = model_intensities(stack, probe, phase, workers)
    log_amplitude = ops.log(ops.add(ops.sqrt(model), eps))
    summand = ops.sub(model, ops.mul(Tensor.wrap(2.0 * stack.intensities()), log_amplitude))
    if literal_abs:
        summand = ops.abs(summand)
    return ops.sum(summand)


def data_loss(kind, stack, probe, phase, workers=1, literal_abs=False):
    if kind == 'l1_intensity':
        return data_loss_l1(stack, probe, phase, workers)
    if kind == 'poisson_nll':
        return data_loss_poisson(stack, probe, phase, workers, literal_abs)
    raise DomainError(f"unknown loss kind '{kind}'")


def tv(phase, eps=PtychoConfig.TV_EPS):
    """
    Smoothed anisotropic total variation with forward differences

    Each |u| is replaced by sqrt(u^2 + eps) - sqrt(eps), so a constant image
    scores exactly zero. The value (and the traced tv term) therefore sits
    n_pairs * sqrt(eps) below the plain sum of sqrt(u^2 + eps), where
    n_pairs = 2 * N * (N - 1) for an N x N image; gradients are identical.
    """
    phase = ops.as_tensor(phase)
    if phase.data.ndim != 2:
        raise DimensionError(f"tv needs a 2D phase, got {phase.shape}")
    offset = np.sqrt(eps)
    total = None
    for axis in (0, 1):
        smooth = ops.add(ops.sqrt(ops.add(ops.square(ops.diff(phase, axis)), eps)), -offset)
        term = ops.sum(smooth)
        total = term if total is None else ops.add(total, term)
    return total


def dl_reg(discriminator, phase, eps=PtychoConfig.DL_EPS):
    """log(1 - sigmoid(D(phase)) + eps)"""
    phase = ops.as_tensor(phase)
    if phase.shape != (discriminator.size, discriminator.size):
        raise DimensionError(f"phase {phase.shape} does not match the {discriminator.size}px discriminator")
    score = ops.sigmoid(discriminator(phase))
    return ops.log(ops.add(ops.sub(1.0, ops.sum(score)), eps))


# ---------------------------------------------------------------- step one: latent

def _phase_of(generator, z):
    return ops.reshape(generator(z), (generator.size, generator.size))


def _frozen_flags(network):
    return [layer.frozen for layer in network.layers]


def _restore_flags(network, flags):
    for layer, frozen in zip(network.layers, flags):
        layer.set_trainable(not frozen)


def optimize_latent(generator, stack, probe, cfg=None, rng=None, history=None):
    """
    Gradient descent on z alone with the generator frozen

    Args:
        generator: pretrained GeneratorNet (its weights are not touched)
        stack, probe: measurements and the known probe
        cfg: ReconConfig; uses latent_loss_kind, latent_lr, latent_steps
        rng: Rng for the initial latent (one child stream per restart)
        history: optional list receiving the data loss of every step

    Returns:
        The lowest-loss latent seen, as a float64 array of length k
    """
    cfg = cfg or ReconConfig()
    rng = rng or Rng(cfg.seed)
    flags = _frozen_flags(generator)
    generator.freeze_all()
    try:
        for attempt in range(cfg.max_restarts + 1):
            z = Tensor(rng.split(attempt).normal(size=generator.latent_dim), requires_grad=True, name='z')
            optimizer = Optimizer([z], 'sgd', cfg.latent_lr)
            best_loss, best_z = np.inf, z.data.copy()
            losses = []
            diverged = False
            bar = tqdm(range(cfg.latent_steps), desc='latent', disable=not PtychoConfig.SHOW_PROGRESS)
            for step in bar:
                z.grad = None
                with Tape():
                    loss = data_loss(cfg.latent_loss_kind, stack, probe, _phase_of(generator, z),
                                     cfg.workers, cfg.literal_abs_poisson)
                    backward(loss)
                value = loss.item()
                if not np.isfinite(value) or not np.all(np.isfinite(z.grad)):
                    diverged = True
                    print(f"⚠️ Latent search diverged at step {step} (attempt {attempt + 1})")
                    break
                losses.append(value)
                if value < best_loss:
                    best_loss, best_z = value, z.data.copy()
                optimizer.step()
                if step % 50 == 0:
                    bar.set_postfix(loss=f"{value:.4g}")
            if not diverged:
                if history is not None:
                    history.extend(losses)
                print(f"✅ Latent search done: loss {losses[0]:.6g} -> {best_loss:.6g}")
                return best_z
        raise DivergedError(f"latent search diverged after {cfg.max_restarts} restarts",
                            step=cfg.latent_steps)
    finally:
        _restore_flags(generator, flags)


# ---------------------------------------------------------------- step two: weights

def trainable_layers(stage, layer_count, cfg):
    """Layer indices trained during `stage`"""
    if not cfg.progressive or stage >= cfg.all_layers_stage:
        return list(range(layer_count))
    order = list(range(layer_count))
    if cfg.direction == 'deep_first':
        order.reverse()
    return sorted(order[:min(stage + 1, layer_count)])


def _objective(generator, discriminator, z, stack, probe, cfg):
    """Build the taped total loss; returns (total, data, tv, dl, phase)"""
    phase = _phase_of(generator, z)
    data = data_loss(cfg.loss_kind, stack, probe, phase, cfg.workers, cfg.literal_abs_poisson)
    total = data
    tv_term = dl_term = None
    if cfg.lambda1 > 0:
        tv_term = tv(phase)
        total = ops.add(total, ops.scale(tv_term, cfg.lambda1))
    if cfg.lambda2 > 0:
        if discriminator is None:
            raise DomainError("lambda2 > 0 needs a discriminator")
        dl_term = dl_reg(discriminator, phase)
        total = ops.add(total, ops.scale(dl_term, cfg.lambda2))
    return total, data, tv_term, dl_term, phase


def _term_value(term, fn, phase):
    # unweighted terms still go into the trace, evaluated without the tape
    return term.item() if term is not None else fn(Tensor.wrap(phase)).item()


def progressive_optimize(generator, discriminator, z_hat, stack, probe, cfg=None):
    """
    Adam over z and the unfrozen generator layers

    Stage s = step // stage_steps trains the first s + 1 layers in
    `cfg.direction` order; from `all_layers_stage` on every layer trains.
    Returns the lowest-total-loss iterate (earliest step wins ties).
    """
    cfg = cfg or ReconConfig()
    z_hat = np.asarray(z_hat, dtype=np.float64)
    if z_hat.shape != (generator.latent_dim,):
        raise DimensionError(f"latent must have length {generator.latent_dim}, got {z_hat.shape}")
    gen_flags = _frozen_flags(generator)
    disc_flags = _frozen_flags(discriminator) if discriminator is not None else None
    if discriminator is not None:
        discriminator.freeze_all()

    layer_count = generator.layer_count
    z = Tensor(z_hat.copy(), requires_grad=True, name='z')
    optimizer = Optimizer([z] + generator.parameters(), 'adam', cfg.weight_lr)
    result = ReconResult(phase=None, object=None, latent=None)
    best = None  # (total, step, z, generator state, phase)
    failures = 0
    stage = -1

    def stage_snapshot():
        result.stage_phases.append(RealField(best[4].copy()))

    try:
        bar = tqdm(range(cfg.total_steps), desc='progressive', disable=not PtychoConfig.SHOW_PROGRESS)
        for step in bar:
            if step // cfg.stage_steps != stage:
                if best is not None:
                    stage_snapshot()
                stage = step // cfg.stage_steps
                result.stage_boundaries.append(step)
                generator.freeze_all()
                generator.unfreeze(trainable_layers(stage, layer_count, cfg))
                if PtychoConfig.ENABLE_DEBUG_OUTPUT:
                    print(f"🔄 Stage {stage}: training layers {trainable_layers(stage, layer_count, cfg)}")

            optimizer.zero_grad()
            with Tape():
                total, data, tv_term, dl_term, phase = _objective(
                    generator, discriminator, z, stack, probe, cfg)
                backward(total)
            value = total.item()
            if not np.isfinite(value):
                failures += 1
                if failures > cfg.max_restarts or best is None:
                    raise DivergedError(f"weight optimisation diverged at step {step}", step=step)
                print(f"⚠️ Non-finite loss at step {step}; halving lr to {optimizer.lr / 2:.3g} "
                      f"and resuming from step {best[1]}")
                z.data = best[2].copy()
                generator.load_state_dict(best[3])
                generator.freeze_all()
                generator.unfreeze(trainable_layers(stage, layer_count, cfg))
                optimizer.lr /= 2.0
                optimizer.reset_state()
                continue

            phase_data = phase.data.copy()
            tv_value = _term_value(tv_term, tv, phase_data)
            dl_value = (_term_value(dl_term, lambda p: dl_reg(discriminator, p), phase_data)
                        if discriminator is not None else 0.0)
            data_value = data.item()
            result.loss_trace.append(TraceEntry(step, data_value, tv_value, dl_value,
                                                data_value + cfg.lambda1 * tv_value + cfg.lambda2 * dl_value))
            if best is None or value < best[0]:
                best = (value, step, z.data.copy(), generator.state_dict(), phase_data)
            optimizer.step()
            if step % 50 == 0:
                bar.set_postfix(loss=f"{value:.4g}", stage=stage)
        stage_snapshot()
    finally:
        _restore_flags(generator, gen_flags)
        if discriminator is not None:
            _restore_flags(discriminator, disc_flags)

    generator.load_state_dict(best[3])
    result.best_step = best[1]
    result.latent = best[2]
    result.phase = RealField(best[4])
    result.object = ComplexField(np.exp(1j * best[4]))
    print(f"✅ Progressive optimisation done: best total {best[0]:.6g} at step {best[1]}")
    return result


# ---------------------------------------------------------------- driver

def reconstruct(stack, probe, gan, cfg=None, out_dir=None):
    """
    Latent search followed by progressive weight optimisation

    Args:
        stack, probe: measurements and the known probe
        gan: checkpoint path, or an already loaded (generator, discriminator)
        cfg: ReconConfig; defaults to config_for_stack(stack)
        out_dir: when given, the result is persisted there

    Returns:
        ReconResult with latent_phase and latent_trace filled in
    """
    cfg = cfg or config_for_stack(stack)
    if isinstance(gan, (str, os.PathLike)):
        generator, discriminator = load_gan(gan)
    else:
        generator, discriminator = gan
    if generator.size != stack.pattern.object_size:
        raise ArchitectureMismatchError(
            f"generator produces {generator.size}px images, stack object is {stack.pattern.object_size}px")

    print(f"🚀 Reconstructing {stack.pattern.count} frames "
          f"(loss={cfg.loss_kind}, lambda1={cfg.lambda1}, lambda2={cfg.lambda2})")
    started = time.time()
    rng = Rng(cfg.seed)
    latent_trace = []
    z_hat = optimize_latent(generator, stack, probe, cfg, rng.split(0), history=latent_trace)
    latent_phase = generate(generator, z_hat)
    result = progressive_optimize(generator, discriminator, z_hat, stack, probe, cfg)
    result.latent_phase = latent_phase
    result.latent_trace = latent_trace
    print(f"✅ Reconstruction finished in {time.time() - started:.1f}s")
    if out_dir is not None:
        save_result(out_dir, result, cfg)
    return result


def trace_csv(trace):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['step', 'data', 'tv', 'dl', 'total'])
    for entry in trace:
        writer.writerow([entry.step, repr(entry.data), repr(entry.tv), repr(entry.dl), repr(entry.total)])
    return buffer.getvalue()


def save_result(out_dir, result, cfg):
    os.makedirs(out_dir, exist_ok=True)
    write_field(os.path.join(out_dir, 'phase.ptyf'), result.phase)
    write_field(os.path.join(out_dir, 'object.ptyf'), result.object)
    if result.latent_phase is not None:
        write_field(os.path.join(out_dir, 'latent_phase.ptyf'), result.latent_phase)
    atomic_write_bytes(os.path.join(out_dir, 'trace.csv'), trace_csv(result.loss_trace).encode('utf-8'))
    settings = asdict(cfg)
    settings['stage_boundaries'] = ','.join(str(s) for s in result.stage_boundaries)
    settings['best_step'] = result.best_step
    text = ''.join(f"{key}={value}\n" for key, value in settings.items())
    atomic_write_bytes(os.path.join(out_dir, 'config.txt'), text.encode('utf-8'))
    print(f"💾 Saved reconstruction to {out_dir}")
