"""
Sweep Monitor Configuration
"""
import os
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class MonitorConfig:
    # Flask Configuration
    FLASK_HOST = os.getenv('FLASK_HOST', '0.0.0.0')
    FLASK_PORT = int(os.getenv('FLASK_PORT', '5000'))
    FLASK_DEBUG = os.getenv('FLASK_DEBUG', 'False').lower() == 'true'
    SECRET_KEY = os.getenv('SECRET_KEY', 'dev-secret-key-change-in-production')

    # SocketIO Configuration
    SOCKETIO_CORS_ALLOWED_ORIGINS = "*"

    # Results
    RESULTS_ROOT = os.getenv('RESULTS_ROOT', 'results')  # sweep outputs stay below this directory
    CHECKPOINT_DIR = os.getenv('CHECKPOINT_DIR', 'checkpoints')  # GAN checkpoints the monitor may load

    # Watcher Settings
    MONITOR_URL = os.getenv('MONITOR_URL', 'http://localhost:5000')
    RECONNECT_DELAY = 5  # seconds to wait before reconnecting to the monitor
    MAX_RECONNECT_ATTEMPTS = 10
    STATUS_TIMEOUT = int(os.getenv('STATUS_TIMEOUT', '10'))
