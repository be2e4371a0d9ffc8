"""
Numerical Configuration
Defaults for simulation, baseline and prior-based reconstruction
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _float_list(value):
    return [float(v) for v in value.split(',') if v.strip()]


class PtychoConfig:
    # Acquisition Geometry
    OBJECT_SIZE = int(os.getenv('OBJECT_SIZE', '128'))  # N, power of two
    PROBE_SIZE = int(os.getenv('PROBE_SIZE', '32'))  # M, power of two
    PROBE_DIAMETER = int(os.getenv('PROBE_DIAMETER', '32'))  # pixels
    PROBE_DEFOCUS = float(os.getenv('PROBE_DEFOCUS', '2.0'))  # radians at the disk edge
    PROBE_EDGE_PX = 2
    STEP_PX = int(os.getenv('STEP_PX', '16'))
    NOISE_SIGMA = float(os.getenv('NOISE_SIGMA', '0.0'))
    SEED = int(os.getenv('SEED', '7'))

    # Phantom Family
    PHANTOM_BLOBS = (3, 8)
    PHANTOM_POLYGONS = (1, 3)
    PHANTOM_POLYGON_VERTICES = (3, 6)

    # ePIE Baseline
    EPIE_ALPHA = float(os.getenv('EPIE_ALPHA', '1.0'))
    EPIE_ITERATIONS = int(os.getenv('EPIE_ITERATIONS', '200'))
    MODULUS_FLOOR = 1e-12

    # GAN Pretraining
    LATENT_DIM = int(os.getenv('LATENT_DIM', '64'))
    GAN_EPOCHS = int(os.getenv('GAN_EPOCHS', '30'))
    GAN_BATCH_SIZE = int(os.getenv('GAN_BATCH_SIZE', '16'))
    GAN_LR = float(os.getenv('GAN_LR', '2e-4'))
    GAN_DATASET_SIZE = int(os.getenv('GAN_DATASET_SIZE', '2000'))
    LEAKY_SLOPE = 0.2

    # Prior-based Reconstruction
    LOSS_KIND = os.getenv('LOSS_KIND', 'poisson_nll')  # poisson_nll | l1_intensity
    LATENT_LOSS_KIND = 'l1_intensity'  # initialization step of the driver
    LATENT_LR = float(os.getenv('LATENT_LR', '1e-5'))
    LATENT_STEPS = int(os.getenv('LATENT_STEPS', '1000'))
    WEIGHT_LR = float(os.getenv('WEIGHT_LR', '1e-4'))
    STAGE_STEPS = int(os.getenv('STAGE_STEPS', '800'))
    TOTAL_STEPS = int(os.getenv('TOTAL_STEPS', '5600'))
    ALL_LAYERS_STAGE = 5  # from this stage on every layer trains
    MAX_RESTARTS = 3
    LOG_EPS = 1e-12
    TV_EPS = 1e-12
    DL_EPS = 1e-12
    LAMBDA1_GRID = _float_list(os.getenv('LAMBDA1_GRID', '3e-4,1e-3,3e-3'))
    LAMBDA2_GRID = _float_list(os.getenv('LAMBDA2_GRID', '1e-5,1e-4,1e-3'))
    NOISY_LAMBDA1 = float(os.getenv('NOISY_LAMBDA1', '3e-3'))  # TV weight when the stack declares noise
    NOISY_LAMBDA2 = float(os.getenv('NOISY_LAMBDA2', '1e-4'))  # discriminator weight when the stack declares noise

    # SSIM (canonical constants; the window is Gaussian)
    SSIM_WINDOW = 11
    SSIM_SIGMA = 1.5
    SSIM_K1 = 0.01
    SSIM_K2 = 0.03
    SSIM_DYNAMIC_RANGE = 1.0

    # Parallelism
    WORKERS = int(os.getenv('WORKERS', '1'))  # per-position evaluation threads
    SWEEP_WORKERS = int(os.getenv('SWEEP_WORKERS', '2'))

    # Output Configuration
    SHOW_PROGRESS = os.getenv('SHOW_PROGRESS', 'True').lower() == 'true'
    ENABLE_DEBUG_OUTPUT = os.getenv('ENABLE_DEBUG_OUTPUT', 'False').lower() == 'true'
