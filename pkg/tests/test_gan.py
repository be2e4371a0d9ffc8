import numpy as np
import pytest

from ptychoprior.core.rng import Rng
from ptychoprior.errors import ArchitectureMismatchError, DimensionError, DomainError
from ptychoprior.nn import ops
from ptychoprior.nn.tensor import Tape, Tensor, backward
from ptychoprior.services import gan_service as gan
from ptychoprior.services.simulation_service import make_phantom_dataset

SIZE = 16
LATENT = 8


@pytest.fixture
def generator():
    return gan.GeneratorNet(SIZE, LATENT, seed=1)


@pytest.fixture
def discriminator():
    return gan.DiscriminatorNet(SIZE, seed=2)


@pytest.fixture
def tiny_dataset():
    return make_phantom_dataset(4, SIZE, Rng(0))


def _tiny_config(**overrides):
    values = dict(epochs=1, batch_size=2, lr_g=1e-3, lr_d=1e-3, seed=5, dataset_size=4, latent_dim=LATENT)
    values.update(overrides)
    return gan.GanTrainConfig(**values)


class TestGenerator:
    def test_output_shape_and_range(self, generator):
        image = gan.generate(generator, np.random.default_rng(0).normal(size=LATENT))
        assert image.shape == (SIZE, SIZE)
        assert image.data.min() > 0.0 and image.data.max() < 1.0

    def test_six_freezable_layers(self, generator):
        assert generator.layer_count == 6

    def test_same_seed_same_weights(self):
        z = np.ones(LATENT)
        a = gan.generate(gan.GeneratorNet(SIZE, LATENT, seed=3), z).data
        b = gan.generate(gan.GeneratorNet(SIZE, LATENT, seed=3), z).data
        assert np.array_equal(a, b)

    def test_output_depends_on_latent(self, generator):
        rng = np.random.default_rng(1)
        images = np.stack([gan.generate(generator, rng.normal(size=LATENT)).data for _ in range(4)])
        assert np.max(np.std(images, axis=0)) > 1e-4

    def test_batched_forward(self, generator):
        out = generator(Tensor.wrap(np.zeros((3, LATENT))))
        assert out.shape == (3, 1, SIZE, SIZE)

    def test_wrong_latent_length(self, generator):
        with pytest.raises(DimensionError):
            gan.generate(generator, np.zeros(LATENT - 1))
        with pytest.raises(DimensionError):
            generator(Tensor.wrap(np.zeros((2, LATENT + 1))))

    @pytest.mark.parametrize('size', [8, 24])
    def test_size_must_be_power_of_two(self, size):
        with pytest.raises(DimensionError):
            gan.GeneratorNet(size, LATENT)


class TestDiscriminator:
    def test_score_is_a_probability(self, discriminator, np_rng):
        score = gan.discriminator_score(discriminator, np_rng.uniform(size=(SIZE, SIZE)))
        assert 0.0 < score < 1.0

    def test_batched_logits(self, discriminator):
        logits = gan.discriminator_logit(discriminator, Tensor.wrap(np.zeros((5, 1, SIZE, SIZE))))
        assert logits.shape == (5, 1)

    def test_wrong_image_size(self, discriminator):
        with pytest.raises(DimensionError):
            gan.discriminator_score(discriminator, np.zeros((SIZE * 2, SIZE * 2)))

    def test_gradient_reaches_the_latent(self, generator, discriminator):
        z = Tensor(np.random.default_rng(2).normal(size=LATENT), requires_grad=True)

        def dl_term():
            logit = discriminator(ops.reshape(generator(z), (SIZE, SIZE)))
            return ops.sum(ops.log_sigmoid(ops.scale(logit, -1.0)))

        with Tape():
            loss = dl_term()
            backward(loss)
        assert z.grad is not None and np.all(np.isfinite(z.grad))
        step = 1e-4 / max(np.linalg.norm(z.grad), 1e-12)
        start = loss.item()
        z.data = z.data - step * z.grad
        assert dl_term().item() < start


class TestTraining:
    def test_zero_epochs_returns_initial_networks(self, tiny_dataset):
        cfg = _tiny_config(epochs=0)
        generator, discriminator, history = gan.train_gan(tiny_dataset, cfg)
        assert history == []
        fresh = gan.GeneratorNet(SIZE, LATENT, seed=Rng(cfg.seed).split(0).seed)
        for key, value in fresh.state_dict().items():
            assert np.array_equal(generator.state_dict()[key], value)

    def test_training_is_deterministic(self, tiny_dataset):
        first = gan.train_gan(tiny_dataset, _tiny_config())
        second = gan.train_gan(tiny_dataset, _tiny_config())
        assert first[2] == second[2]
        for key, value in first[0].state_dict().items():
            assert np.array_equal(second[0].state_dict()[key], value)

    def test_training_updates_weights(self, tiny_dataset):
        cfg = _tiny_config(epochs=2)
        generator, discriminator, history = gan.train_gan(tiny_dataset, cfg)
        assert len(history) == 4
        assert all(np.isfinite(h['loss_d']) and np.isfinite(h['loss_g']) for h in history)
        fresh = gan.GeneratorNet(SIZE, LATENT, seed=Rng(cfg.seed).split(0).seed)
        changed = [not np.array_equal(generator.state_dict()[k], v) for k, v in fresh.state_dict().items()]
        assert all(changed)
        assert not any(layer.frozen for layer in discriminator.layers)

    def test_config_validation(self):
        with pytest.raises(DomainError):
            gan.GanTrainConfig(batch_size=0)
        with pytest.raises(DomainError):
            gan.GanTrainConfig(lr_g=0.0)
        with pytest.raises(DomainError):
            gan.train_gan([], _tiny_config())


class TestCheckpoint:
    def test_round_trip(self, tmp_path, generator, discriminator, np_rng):
        path = str(tmp_path / 'gan.ptyfz')
        gan.save_gan(path, generator, discriminator)
        loaded_g, loaded_d = gan.load_gan(path)
        z = np_rng.normal(size=LATENT)
        assert np.array_equal(gan.generate(loaded_g, z).data, gan.generate(generator, z).data)
        image = np_rng.uniform(size=(SIZE, SIZE))
        assert gan.discriminator_score(loaded_d, image) == gan.discriminator_score(discriminator, image)
        sidecar = (tmp_path / 'gan.ptyfz.arch').read_text()
        assert f"object_size={SIZE}\n" in sidecar
        assert f"architecture_hash={gan.combined_hash(generator, discriminator)}\n" in sidecar

    def test_hash_mismatch(self, tmp_path, generator, discriminator):
        path = tmp_path / 'gan.ptyfz'
        gan.save_gan(str(path), generator, discriminator)
        sidecar = tmp_path / 'gan.ptyfz.arch'
        text = sidecar.read_text()
        sidecar.write_text(text.replace(gan.combined_hash(generator, discriminator), '0' * 64))
        with pytest.raises(ArchitectureMismatchError):
            gan.load_gan(str(path))

    def test_sidecar_missing_keys(self, tmp_path, generator, discriminator):
        path = tmp_path / 'gan.ptyfz'
        gan.save_gan(str(path), generator, discriminator)
        (tmp_path / 'gan.ptyfz.arch').write_text('object_size=16\n')
        with pytest.raises(ArchitectureMismatchError):
            gan.load_gan(str(path))
