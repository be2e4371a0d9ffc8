"""
Sweep Monitor - Flask + SocketIO application package
"""
from flask import Flask
from flask_socketio import SocketIO
from monitor_config import MonitorConfig

# Global socketio instance
socketio = None


def create_app():
    """Application factory function"""
    global socketio

    app = Flask(__name__)
    app.config['SECRET_KEY'] = MonitorConfig.SECRET_KEY
    app.config['RESULTS_ROOT'] = MonitorConfig.RESULTS_ROOT
    app.config['CHECKPOINT_DIR'] = MonitorConfig.CHECKPOINT_DIR

    socketio = SocketIO(app, cors_allowed_origins=MonitorConfig.SOCKETIO_CORS_ALLOWED_ORIGINS,
                        async_mode='threading')

    # Import routes and handlers after app creation to avoid circular imports
    from ptychoprior.monitor.routes import main_routes, sweep_routes
    from ptychoprior.monitor.handlers import socket_handlers

    app.register_blueprint(main_routes.bp)
    app.register_blueprint(sweep_routes.bp)

    socket_handlers.register_handlers(socketio)

    return app, socketio
