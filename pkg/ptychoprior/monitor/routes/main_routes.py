"""
Main Routes
Service information and health check
"""
from flask import Blueprint, jsonify

import ptychoprior.monitor.state as state
from ptychoprior import __version__

bp = Blueprint('main', __name__)


@bp.route('/')
def index():
    return jsonify({
        'service': 'ptychoprior sweep monitor',
        'version': __version__,
        'endpoints': ['/api/health', '/api/sweep/start', '/api/sweep/stop',
                      '/api/sweep/status', '/api/sweep/results'],
    })


@bp.route('/api/health')
def health():
    return jsonify({'status': 'ok', 'sweep_active': state.sweep_active})
