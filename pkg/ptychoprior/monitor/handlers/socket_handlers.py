"""
SocketIO Event Handlers
Keeps watcher clients in sync with the running sweep
"""
from flask_socketio import emit

import ptychoprior.monitor.state as state


def register_handlers(socketio):
    """Register all socket event handlers"""

    @socketio.on('connect')
    def handle_client_connect():
        print("🌐 Watcher connected")
        emit('sweep_status', state.get_sweep_status())

    @socketio.on('disconnect')
    def handle_client_disconnect():
        print("🔌 Watcher disconnected")

    @socketio.on('request_status')
    def handle_request_status(data=None):
        emit('sweep_status', state.get_sweep_status())
