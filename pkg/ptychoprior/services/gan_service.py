"""
GAN Service
Generator / discriminator definitions, pretraining and checkpoints
"""
import hashlib
import time
from dataclasses import dataclass

import numpy as np
from tqdm import tqdm

from ptycho_config import PtychoConfig
from ptychoprior.core.fft import is_power_of_two
from ptychoprior.core.fields import RealField
from ptychoprior.core.rng import Rng
from ptychoprior.errors import ArchitectureMismatchError, DimensionError, DivergedError, DomainError
from ptychoprior.nn import ops
from ptychoprior.nn.checkpoint import load_checkpoint, save_checkpoint
from ptychoprior.nn.layers import Conv3x3, Dense, Layer, Network
from ptychoprior.nn.optim import Optimizer
from ptychoprior.nn.tensor import Tape, Tensor, backward

GENERATOR_CHANNELS = (32, 32, 16, 16, 8)
DISCRIMINATOR_CHANNELS = (8, 16, 32, 32)


# ---------------------------------------------------------------- layers

class LatentDense(Layer):
    """Dense projection of z, reshaped to a (C, s, s) feature map"""

    def __init__(self, name, latent_dim, channels, base, rng):
        super().__init__(name)
        self.dense = Dense(name, latent_dim, channels * base * base, rng)
        self.params = self.dense.params
        self.channels, self.base = channels, base

    def forward(self, z):
        out = self.dense(z)
        return ops.reshape(out, (out.shape[0], self.channels, self.base, self.base))


class UpBlock(Layer):
    def __init__(self, name, in_channels, out_channels, rng):
        super().__init__(name)
        self.conv = Conv3x3(name, in_channels, out_channels, rng)
        self.params = self.conv.params

    def forward(self, x):
        return ops.leaky_relu(self.conv(ops.upsample_nearest(x)))


class OutputConv(Layer):
    def __init__(self, name, in_channels, rng):
        super().__init__(name)
        self.conv = Conv3x3(name, in_channels, 1, rng)
        self.params = self.conv.params

    def forward(self, x):
        return ops.sigmoid(self.conv(x))


class DownBlock(Layer):
    def __init__(self, name, in_channels, out_channels, rng):
        super().__init__(name)
        self.conv = Conv3x3(name, in_channels, out_channels, rng)
        self.params = self.conv.params

    def forward(self, x):
        return ops.avgpool(ops.leaky_relu(self.conv(x)))


class LogitHead(Layer):
    def __init__(self, name, features, rng):
        super().__init__(name)
        self.dense = Dense(name, features, 1, rng)
        self.params = self.dense.params

    def forward(self, x):
        return self.dense(ops.reshape(x, (x.shape[0], -1)))


# ---------------------------------------------------------------- networks

def _check_size(size):
    if not is_power_of_two(size) or size < 16:
        raise DimensionError(f"network image size must be a power of two >= 16, got {size}")


class GeneratorNet(Network):
    """z in R^k -> phase image in (0, 1)^{N x N}; six freezable layers"""

    def __init__(self, size=PtychoConfig.OBJECT_SIZE, latent_dim=PtychoConfig.LATENT_DIM, seed=0):
        _check_size(size)
        rng = Rng(seed)
        base = size // 16
        c = GENERATOR_CHANNELS
        layers = [LatentDense('latent', latent_dim, c[0], base, rng.split(0))]
        layers += [UpBlock(f"up{i}", c[i], c[i + 1], rng.split(i + 1)) for i in range(4)]
        layers.append(OutputConv('out', c[-1], rng.split(5)))
        super().__init__(layers)
        self.size, self.latent_dim = size, latent_dim

    def forward(self, z):
        z = ops.as_tensor(z)
        if z.shape[-1] != self.latent_dim or z.data.ndim > 2:
            raise DimensionError(f"latent must have length {self.latent_dim}, got shape {z.shape}")
        if z.data.ndim == 1:
            z = ops.reshape(z, (1, self.latent_dim))
        return super().forward(z)


class DiscriminatorNet(Network):
    """Phase image -> one real logit per image"""

    def __init__(self, size=PtychoConfig.OBJECT_SIZE, seed=0):
        _check_size(size)
        rng = Rng(seed)
        c = (1,) + DISCRIMINATOR_CHANNELS
        layers = [DownBlock(f"down{i}", c[i], c[i + 1], rng.split(i)) for i in range(4)]
        layers.append(LogitHead('logit', c[-1] * (size // 16) ** 2, rng.split(4)))
        super().__init__(layers)
        self.size = size

    def forward(self, image):
        image = ops.as_tensor(image)
        if image.shape[-2:] != (self.size, self.size):
            raise DimensionError(f"discriminator expects {self.size}x{self.size} images, got {image.shape}")
        if image.data.ndim == 2:
            image = ops.reshape(image, (1, 1, self.size, self.size))
        return super().forward(image)


# ---------------------------------------------------------------- operations

def generate(generator, z):
    """G(z) as a RealField; no graph is recorded"""
    z = np.asarray(z.data if isinstance(z, Tensor) else z, dtype=np.float64)
    if z.shape != (generator.latent_dim,):
        raise DimensionError(f"latent must have length {generator.latent_dim}, got shape {z.shape}")
    return RealField(generator(Tensor.wrap(z)).data.reshape(generator.size, generator.size))


def discriminator_logit(discriminator, image):
    """Differentiable logit tensor for an (N, N) or (B, 1, N, N) image tensor"""
    return discriminator(image)


def discriminator_score(discriminator, image):
    data = image.data if isinstance(image, RealField) else np.asarray(image)
    if data.shape != (discriminator.size, discriminator.size):
        raise DimensionError(f"image {data.shape} does not match the {discriminator.size}px discriminator")
    return float(ops.sigmoid(discriminator(Tensor.wrap(data))).item())


@dataclass(frozen=True)
class GanTrainConfig:
    epochs: int = PtychoConfig.GAN_EPOCHS
    batch_size: int = PtychoConfig.GAN_BATCH_SIZE
    lr_g: float = PtychoConfig.GAN_LR
    lr_d: float = PtychoConfig.GAN_LR
    seed: int = PtychoConfig.SEED
    dataset_size: int = PtychoConfig.GAN_DATASET_SIZE
    latent_dim: int = PtychoConfig.LATENT_DIM

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.dataset_size < 1 or self.latent_dim < 1:
            raise DomainError("GAN training sizes must be positive")
        if self.lr_g <= 0 or self.lr_d <= 0:
            raise DomainError("GAN learning rates must be positive")


def _neg_mean_log_sigmoid(logits):
    return ops.scale(ops.mean(ops.log_sigmoid(logits)), -1.0)


def train_gan(dataset, cfg=None):
    """
    Alternating non-saturating GAN updates

    Args:
        dataset: list of Phantom, all the same power-of-two size
        cfg: GanTrainConfig

    Returns:
        (generator, discriminator, history) where history is a list of
        dicts with step, epoch, loss_d, loss_g
    """
    cfg = cfg or GanTrainConfig()
    if not dataset:
        raise DomainError("GAN training needs at least one image")
    size = dataset[0].phase.height
    images = np.stack([p.phase.data for p in dataset])[:, None]
    if images.shape[1:] != (1, size, size):
        raise DimensionError("all training phantoms must share one square size")

    rng = Rng(cfg.seed)
    generator = GeneratorNet(size, cfg.latent_dim, seed=rng.split(0).seed)
    discriminator = DiscriminatorNet(size, seed=rng.split(1).seed)
    opt_g = Optimizer(generator.parameters(), 'adam', cfg.lr_g)
    opt_d = Optimizer(discriminator.parameters(), 'adam', cfg.lr_d)
    order_rng, latent_rng = rng.split(2), rng.split(3)

    batch = min(cfg.batch_size, len(images))
    batches = max(1, len(images) // batch)
    history = []
    step = 0
    print(f"🚀 Training GAN on {len(images)} phantoms ({size}px) for {cfg.epochs} epochs")
    started = time.time()
    for epoch in range(cfg.epochs):
        order = order_rng.permutation(len(images))
        bar = tqdm(range(batches), desc=f'GAN epoch {epoch}', disable=not PtychoConfig.SHOW_PROGRESS)
        for b in bar:
            real = Tensor.wrap(images[order[b * batch:(b + 1) * batch]])

            # Discriminator update on real vs detached fakes
            fake = generator(Tensor.wrap(latent_rng.normal(size=(batch, cfg.latent_dim)))).detach()
            opt_d.zero_grad()
            with Tape():
                loss_d = ops.add(_neg_mean_log_sigmoid(discriminator(real)),
                                 _neg_mean_log_sigmoid(ops.scale(discriminator(fake), -1.0)))
                backward(loss_d)
            opt_d.step()

            # Generator update through a frozen discriminator
            discriminator.freeze_all()
            opt_g.zero_grad()
            with Tape():
                z = Tensor.wrap(latent_rng.normal(size=(batch, cfg.latent_dim)))
                loss_g = _neg_mean_log_sigmoid(discriminator(generator(z)))
                backward(loss_g)
            opt_g.step()
            discriminator.unfreeze_all()

            ld, lg = loss_d.item(), loss_g.item()
            if not (np.isfinite(ld) and np.isfinite(lg)):
                raise DivergedError(f"GAN training diverged at step {step}", step=step)
            history.append({'step': step, 'epoch': epoch, 'loss_d': ld, 'loss_g': lg})
            bar.set_postfix(loss_d=f"{ld:.3f}", loss_g=f"{lg:.3f}")
            step += 1
        recent = history[-batches:]
        print(f"📊 Epoch {epoch}: loss_d={np.mean([h['loss_d'] for h in recent]):.4f} "
              f"loss_g={np.mean([h['loss_g'] for h in recent]):.4f}")
    print(f"✅ GAN training finished in {time.time() - started:.1f}s ({step} steps)")
    return generator, discriminator, history


# ---------------------------------------------------------------- checkpoints

def combined_hash(generator, discriminator):
    text = generator.architecture() + ' || ' + discriminator.architecture()
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def save_gan(path, generator, discriminator):
    named = [(f"generator.{name}", param.data) for name, param in generator.named_parameters()]
    named += [(f"discriminator.{name}", param.data) for name, param in discriminator.named_parameters()]
    metadata = {
        'object_size': generator.size,
        'latent_dim': generator.latent_dim,
        'generator_hash': generator.architecture_hash(),
        'discriminator_hash': discriminator.architecture_hash(),
        'architecture_hash': combined_hash(generator, discriminator),
    }
    save_checkpoint(path, named, metadata)
    print(f"💾 Saved GAN checkpoint to {path}")


def load_gan(path):
    """Rebuild (generator, discriminator) and verify the architecture hash"""
    entries, metadata = load_checkpoint(path)
    try:
        size, latent_dim = int(metadata['object_size']), int(metadata['latent_dim'])
        expected = metadata['architecture_hash']
    except KeyError as e:
        raise ArchitectureMismatchError(f"checkpoint sidecar lacks {e}") from None
    generator = GeneratorNet(size, latent_dim)
    discriminator = DiscriminatorNet(size)
    if combined_hash(generator, discriminator) != expected:
        raise ArchitectureMismatchError(f"architecture hash mismatch for {path}")
    state = dict(entries)
    generator.load_state_dict({k[len('generator.'):]: v for k, v in state.items()
                               if k.startswith('generator.')})
    discriminator.load_state_dict({k[len('discriminator.'):]: v for k, v in state.items()
                                   if k.startswith('discriminator.')})
    return generator, discriminator
