"""
Sweep Routes
API endpoints for starting, stopping and inspecting sweeps
"""
import os

from flask import Blueprint, current_app, jsonify, request

import ptychoprior.monitor.state as state
from ptychoprior.errors import SweepSpecError
from ptychoprior import monitor
from ptychoprior.services import sweep_service

bp = Blueprint('sweep', __name__, url_prefix='/api/sweep')


def contained_path(root, requested):
    """
    Resolve `requested` below `root`

    Relative paths are taken from `root`; absolute ones must already lie inside
    it. Returns None when the resolved path escapes the root.
    """
    root = os.path.realpath(root)
    path = os.path.realpath(os.path.join(root, requested))
    if os.path.commonpath([root, path]) != root:
        return None
    return path


@bp.route('/start', methods=['POST'])
def start_sweep():
    """Start a sweep from an inline spec text and/or JSON overrides"""
    data = request.get_json(silent=True) or {}
    try:
        spec = sweep_service.SweepSpec.parse(data.get('spec', ''))
        if data.get('overrides'):
            spec = sweep_service.spec_with_overrides(spec, data['overrides'])
    except SweepSpecError as e:
        return jsonify({'success': False, 'message': str(e)}), 400

    out_dir = contained_path(current_app.config['RESULTS_ROOT'], data.get('out') or 'sweep')
    if out_dir is None:
        return jsonify({'success': False, 'message': 'out must stay inside the results directory'}), 400
    gan_path = None
    if data.get('gan'):
        gan_path = contained_path(current_app.config['CHECKPOINT_DIR'], data['gan'])
        if gan_path is None:
            return jsonify({'success': False, 'message': 'gan must stay inside the checkpoint directory'}), 400
    success, message = sweep_service.start_sweep_job(spec, gan_path, out_dir, monitor.socketio)
    return jsonify({'success': success, 'message': message}), (200 if success else 409)


@bp.route('/stop', methods=['POST'])
def stop_sweep():
    success, message = sweep_service.stop_sweep_job()
    return jsonify({'success': success, 'message': message})


@bp.route('/status', methods=['GET'])
def sweep_status():
    return jsonify(state.get_sweep_status())


@bp.route('/results', methods=['GET'])
def sweep_results():
    """Rows finished so far plus the median-over-seeds summary"""
    rows = [sweep_service.jsonable_row(row) for row in state.sweep_rows]
    summary = [sweep_service.jsonable_row(item) for item in sweep_service.summarize(state.sweep_rows)]
    return jsonify({'rows': rows, 'summary': summary, 'csv_path': state.sweep_csv_path})
