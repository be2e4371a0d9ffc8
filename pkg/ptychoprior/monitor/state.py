"""
Global Monitor State
Centralized state for the sweep job run by the monitor server
"""
import threading
from datetime import datetime

# Sweep job state
sweep_lock = threading.Lock()  # guards the check-then-start in start_sweep_job
sweep_active = False
sweep_thread = None
sweep_stop_event = None
sweep_spec = None
sweep_out_dir = None
sweep_total = 0
sweep_rows = []
sweep_started_at = None
sweep_finished_at = None
sweep_error = None
sweep_csv_path = None


def reset_sweep_state():
    """Reset all sweep-related state"""
    global sweep_active, sweep_thread, sweep_stop_event, sweep_spec, sweep_out_dir, sweep_total
    global sweep_rows, sweep_started_at, sweep_finished_at, sweep_error, sweep_csv_path
    sweep_active = False
    sweep_thread = None
    sweep_stop_event = None
    sweep_spec = None
    sweep_out_dir = None
    sweep_total = 0
    sweep_rows = []
    sweep_started_at = None
    sweep_finished_at = None
    sweep_error = None
    sweep_csv_path = None


def record_cell(row):
    sweep_rows.append(row)


def mark_finished(error=None, csv_path=None):
    global sweep_active, sweep_finished_at, sweep_error, sweep_csv_path
    sweep_active = False
    sweep_finished_at = datetime.now().isoformat()
    sweep_error = error
    sweep_csv_path = csv_path


def get_sweep_status():
    """Get current sweep status"""
    failed = sum(1 for row in sweep_rows if row.get('status') != 'ok')
    return {
        'active': sweep_active,
        'total_cells': sweep_total,
        'completed_cells': len(sweep_rows),
        'failed_cells': failed,
        'started_at': sweep_started_at,
        'finished_at': sweep_finished_at,
        'out_dir': sweep_out_dir,
        'csv_path': sweep_csv_path,
        'error': sweep_error,
        'stop_requested': bool(sweep_stop_event is not None and sweep_stop_event.is_set()),
    }
