import numpy as np
import pytest
from PIL import Image

from ptychoprior.core.fields import RealField
from ptychoprior.core.rng import Rng
from ptychoprior.errors import DimensionError, DomainError
from ptychoprior.services import simulation_service as sim


class TestProbe:
    @pytest.mark.parametrize('size,diameter', [(32, 32), (32, 20), (8, 8)])
    def test_unit_energy(self, size, diameter):
        probe = sim.make_probe(size, diameter)
        assert probe.field.energy == pytest.approx(1.0, abs=1e-12)
        assert probe.size == size

    def test_support_is_a_disk(self):
        probe = sim.make_probe(32, 16)
        amplitude = probe.field.amplitude.data
        assert amplitude[0, 0] == 0.0
        assert amplitude[15, 15] > 0.0

    def test_diameter_must_fit(self):
        with pytest.raises(DimensionError):
            sim.make_probe(16, 17)
        with pytest.raises(DimensionError):
            sim.make_probe(16, 0)

    def test_window_for_diameter(self):
        assert sim.probe_window_for(32) == 32
        assert sim.probe_window_for(20) == 32
        assert sim.probe_window_for(8) == 8


class TestRaster:
    def test_default_geometry_count(self):
        pattern = sim.make_raster(128, 32, 16)
        assert pattern.count == 49
        assert pattern.overlap == pytest.approx(0.5)
        assert pattern.positions[0] == (0, 0)
        assert pattern.positions[-1] == (96, 96)

    @pytest.mark.parametrize('overlap,step', [(0.75, 8), (0.5, 16), (0.25, 24), (0.0, 32), (-0.5, 48)])
    def test_step_for_overlap(self, overlap, step):
        assert sim.step_for_overlap(overlap, 32) == step

    def test_negative_overlap_leaves_gaps(self):
        pattern = sim.make_raster(128, 32, 48)
        assert pattern.count == 9
        assert pattern.overlap == pytest.approx(-0.5)

    def test_invalid_raster(self):
        with pytest.raises(DomainError):
            sim.make_raster(64, 32, 0)
        with pytest.raises(DimensionError):
            sim.make_raster(16, 32, 8)

    def test_all_windows_inside(self):
        pattern = sim.make_raster(64, 16, 12)
        positions = pattern.as_array()
        assert positions.min() >= 0
        assert positions.max() + 16 <= 64


class TestForwardModel:
    def test_energy_conservation(self, toy_geometry):
        stack, probe, phantom = toy_geometry
        obj = sim.make_object(phantom)
        for position, frame in zip(stack.pattern.positions, stack.frames):
            wave = sim.exit_wave(obj, probe, position)
            assert np.sum(frame.data) == pytest.approx(wave.energy, abs=1e-10)

    def test_frames_match_direct_fft(self, toy_geometry):
        stack, probe, phantom = toy_geometry
        obj = sim.make_object(phantom)
        wave = sim.exit_wave(obj, probe, stack.pattern.positions[4])
        expected = np.abs(np.fft.fft2(wave.data, norm='ortho')) ** 2
        np.testing.assert_allclose(stack.frames[4].data, expected, atol=1e-12)

    def test_peak_intensity(self, toy_geometry):
        stack, _, _ = toy_geometry
        assert stack.peak_intensity == pytest.approx(stack.intensities().max())

    def test_window_outside_object(self, toy_geometry):
        _, probe, phantom = toy_geometry
        with pytest.raises(DimensionError):
            sim.exit_wave(sim.make_object(phantom), probe, (12, 0))

    def test_mismatched_pattern(self, toy_geometry):
        _, probe, phantom = toy_geometry
        pattern = sim.make_raster(32, 8, 8)
        with pytest.raises(DimensionError):
            sim.simulate(phantom, probe, pattern, sim.NoiseModel(), Rng(0))

    def test_non_power_of_two_geometry(self):
        with pytest.raises(DimensionError):
            sim.run_simulation(100, 32, 16, 0.0, 1)


class TestNoise:
    @pytest.mark.parametrize('sigma', [0.2, 2.0])
    def test_relative_std_at_peak(self, sigma):
        peak = 3.0
        frame = RealField(np.full((316, 316), peak))
        noisy = sim.add_poisson_noise(frame, sim.NoiseModel(sigma), Rng(11), peak).data
        assert np.std(noisy) / peak == pytest.approx(sigma, rel=0.05)
        assert np.mean(noisy) == pytest.approx(peak, rel=0.03)

    def test_zero_sigma_is_noiseless(self, toy_geometry):
        stack, _, _ = toy_geometry
        frame = stack.frames[0]
        assert sim.add_poisson_noise(frame, sim.NoiseModel(0.0), Rng(0), 1.0) is frame

    def test_negative_sigma(self):
        with pytest.raises(DomainError):
            sim.NoiseModel(-0.1)

    def test_noisy_frames_are_nonnegative(self):
        stack, _, _ = sim.run_simulation(32, 16, 8, 0.5, 4)
        assert stack.intensities().min() >= 0.0
        assert stack.noise.active

    def test_same_seed_same_stack(self):
        first, _, _ = sim.run_simulation(32, 16, 8, 0.5, 4)
        second, _, _ = sim.run_simulation(32, 16, 8, 0.5, 4)
        assert np.array_equal(first.intensities(), second.intensities())
        third, _, _ = sim.run_simulation(32, 16, 8, 0.5, 5)
        assert not np.array_equal(first.intensities(), third.intensities())

    def test_heavier_noise_deviates_more(self):
        clean, _, _ = sim.run_simulation(32, 16, 8, 0.0, 4)

        def relative_deviation(sigma):
            noisy, _, _ = sim.run_simulation(32, 16, 8, sigma, 4)
            return np.linalg.norm(noisy.intensities() - clean.intensities()) / np.linalg.norm(clean.intensities())

        light, heavy = relative_deviation(0.2), relative_deviation(5.0)
        assert 0.0 < light < heavy

    def test_workers_do_not_change_draws(self, toy_geometry):
        _, probe, phantom = toy_geometry
        pattern = sim.make_raster(16, 8, 4)
        noise = sim.NoiseModel(0.5)
        serial = sim.simulate(phantom, probe, pattern, noise, Rng(8), workers=1)
        parallel = sim.simulate(phantom, probe, pattern, noise, Rng(8), workers=4)
        assert np.array_equal(serial.intensities(), parallel.intensities())


class TestPhantoms:
    def test_phantom_range_and_structure(self):
        phantom = sim.make_phantom(64, Rng(2))
        data = phantom.phase.data
        assert data.min() >= 0.0 and data.max() <= 1.0
        assert np.std(data) > 0.01

    def test_phantom_is_seeded(self):
        a = sim.make_phantom(32, Rng(6)).phase.data
        b = sim.make_phantom(32, Rng(6)).phase.data
        assert np.array_equal(a, b)

    def test_dataset_members_differ(self):
        dataset = sim.make_phantom_dataset(3, 32, Rng(1))
        assert [p.label for p in dataset] == ['blob-00000', 'blob-00001', 'blob-00002']
        assert not np.array_equal(dataset[0].phase.data, dataset[1].phase.data)
        with pytest.raises(DomainError):
            sim.make_phantom_dataset(0, 32, Rng(1))

    def test_dataset_mean_is_smoother_than_members(self):
        def total_variation(image):
            return np.sum(np.abs(np.diff(image, axis=0))) + np.sum(np.abs(np.diff(image, axis=1)))

        images = np.stack([p.phase.data for p in sim.make_phantom_dataset(200, 32, Rng(21))])
        member_tv = np.mean([total_variation(image) for image in images])
        assert total_variation(images.mean(axis=0)) < member_tv

    def test_phantom_clips_phase(self):
        phantom = sim.Phantom(RealField(np.array([[-0.5, 1.5]])))
        assert phantom.phase.data.tolist() == [[0.0, 1.0]]

    def test_noise_phantom(self):
        phantom = sim.make_noise_phantom(16, Rng(0))
        assert phantom.label == 'noise'
        assert phantom.phase.shape == (16, 16)

    def test_load_phantom_image(self, tmp_path):
        gradient = np.tile(np.linspace(0, 255, 40).astype(np.uint8), (40, 1))
        path = tmp_path / 'cameraman.png'
        Image.fromarray(gradient).save(path)
        phantom = sim.load_phantom_image(str(path), 16)
        assert phantom.label == 'cameraman'
        assert phantom.phase.shape == (16, 16)
        data = phantom.phase.data
        assert data.min() >= 0.0 and data.max() <= 1.0
        assert data[0, -1] > data[0, 0]


class TestPersistence:
    def test_save_and_load_round_trip(self, tmp_path):
        stack, probe, phantom = sim.run_simulation(32, 16, 8, 0.2, 9)
        sim.save_stack(str(tmp_path), stack, probe, phantom)
        loaded, loaded_probe, loaded_phantom = sim.load_stack(str(tmp_path))
        assert np.array_equal(loaded.intensities(), stack.intensities())
        assert np.array_equal(loaded_probe.field.data, probe.field.data)
        assert np.array_equal(loaded_phantom.phase.data, phantom.phase.data)
        assert loaded.pattern == stack.pattern
        assert loaded.noise.sigma == pytest.approx(0.2)
        assert loaded.peak_intensity == stack.peak_intensity
        assert loaded.seed == stack.seed

    def test_meta_file(self, tmp_path):
        stack, probe, _ = sim.run_simulation(32, 16, 16, 0.0, 2)
        sim.save_stack(str(tmp_path), stack, probe)
        meta = (tmp_path / 'meta.txt').read_text()
        assert 'N=32\n' in meta and 'M=16\n' in meta and 'count=4\n' in meta
        assert not (tmp_path / 'phantom.ptyf').exists()
        _, _, phantom = sim.load_stack(str(tmp_path))
        assert phantom is None

    def test_frame_count_mismatch(self, tmp_path):
        stack, probe, _ = sim.run_simulation(32, 16, 16, 0.0, 2)
        sim.save_stack(str(tmp_path), stack, probe)
        meta = tmp_path / 'meta.txt'
        meta.write_text(meta.read_text().replace('count=4', 'count=5'))
        with pytest.raises(DimensionError):
            sim.load_stack(str(tmp_path))
