"""
Sweep Service
Overlap / noise / method grids scored by SSIM, plus the background job
control used by the monitor server
"""
import csv
import io
import itertools
import math
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from datetime import datetime

import numpy as np

import ptychoprior.monitor.state as state
from ptycho_config import PtychoConfig
from ptychoprior.core.ptyf import atomic_write_bytes
from ptychoprior.errors import DomainError, SweepSpecError
from ptychoprior.services.epie_service import EpieConfig, epie_reconstruct
from ptychoprior.services.evaluation_service import SsimConfig, align_phase, dump_panel, object_phase, ssim
from ptychoprior.services.gan_service import load_gan
from ptychoprior.services.reconstruction_service import ReconConfig, reconstruct
from ptychoprior.services.simulation_service import run_simulation, step_for_overlap

SWEEP_METHODS = ('epie', 'proposed', 'proposed_reg')
CSV_COLUMNS = ['overlap', 'sigma', 'method', 'lambda1', 'lambda2', 'seed', 'ssim', 'wall_seconds', 'status']
_LIST_KEYS = {'overlaps': float, 'sigmas': float, 'methods': str, 'seeds': int, 'lambda1': float, 'lambda2': float}


@dataclass(frozen=True)
class SweepCell:
    index: int
    overlap: float
    sigma: float
    method: str
    lambda1: float
    lambda2: float
    seed: int


@dataclass(frozen=True)
class SweepSpec:
    overlaps: tuple = (0.75, 0.5, 0.25, 0.0, -0.5)
    sigmas: tuple = (0.0, 0.2, 0.5, 2.0, 5.0)
    methods: tuple = ('epie', 'proposed')
    seeds: tuple = (1,)
    lambda1: tuple = tuple(PtychoConfig.LAMBDA1_GRID)
    lambda2: tuple = tuple(PtychoConfig.LAMBDA2_GRID)
    size: int = PtychoConfig.OBJECT_SIZE
    probe_diameter: int = PtychoConfig.PROBE_DIAMETER
    epie_iterations: int = PtychoConfig.EPIE_ITERATIONS
    loss_kind: str = PtychoConfig.LOSS_KIND
    latent_steps: int = PtychoConfig.LATENT_STEPS
    stage_steps: int = PtychoConfig.STAGE_STEPS
    total_steps: int = PtychoConfig.TOTAL_STEPS
    workers: int = PtychoConfig.SWEEP_WORKERS
    record_wall_time: bool = False
    dump_panels: bool = True

    def __post_init__(self):
        for key in _LIST_KEYS:
            if not getattr(self, key):
                raise SweepSpecError(f"sweep list '{key}' must not be empty")
        unknown = set(self.methods) - set(SWEEP_METHODS)
        if unknown:
            raise SweepSpecError(f"unknown sweep methods {sorted(unknown)}")
        if any(o >= 1.0 for o in self.overlaps):
            raise SweepSpecError("overlaps must be below 1.0")
        if any(s < 0 for s in self.sigmas) or any(l < 0 for l in self.lambda1 + self.lambda2):
            raise SweepSpecError("sigmas and lambdas must be nonnegative")
        if self.workers < 1:
            raise SweepSpecError("sweep needs at least one worker")

    @classmethod
    def parse(cls, text):
        """Flat key=value lines; list values are comma separated"""
        values = {}
        known = {f.name: f for f in fields(cls)}
        for number, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith('#'):
                continue
            key, sep, value = line.partition('=')
            key, value = key.strip(), value.strip()
            if not sep or key not in known:
                raise SweepSpecError(f"line {number}: unrecognised entry '{line}'")
            try:
                if key in _LIST_KEYS:
                    values[key] = tuple(_LIST_KEYS[key](item.strip()) for item in value.split(',') if item.strip())
                elif known[key].type in (bool, 'bool'):
                    values[key] = value.lower() in ('1', 'true', 'yes', 'on')
                elif known[key].type in (int, 'int'):
                    values[key] = int(value)
                else:
                    values[key] = value
            except ValueError as e:
                raise SweepSpecError(f"line {number}: bad value for '{key}': {e}") from None
        return cls(**values)

    @classmethod
    def load(cls, path):
        with open(path, 'r', encoding='utf-8') as handle:
            return cls.parse(handle.read())

    def cells(self):
        """Every (overlap, sigma, method, lambdas, seed) combination in spec order"""
        cells = []
        for overlap, sigma, method in itertools.product(self.overlaps, self.sigmas, self.methods):
            grid = itertools.product(self.lambda1, self.lambda2) if method == 'proposed_reg' else [(0.0, 0.0)]
            for (lambda1, lambda2), seed in itertools.product(list(grid), self.seeds):
                cells.append(SweepCell(len(cells), overlap, sigma, method, lambda1, lambda2, seed))
        return cells

    def needs_gan(self):
        return any(method != 'epie' for method in self.methods)

    def recon_config(self, cell):
        return ReconConfig(loss_kind=self.loss_kind, lambda1=cell.lambda1, lambda2=cell.lambda2,
                           latent_steps=self.latent_steps, stage_steps=self.stage_steps,
                           total_steps=self.total_steps, seed=cell.seed)


@dataclass
class SweepReport:
    rows: list
    csv_path: str = None
    cancelled: bool = False


def _panel_name(cell):
    return (f"{cell.index:04d}_{cell.method}_o{cell.overlap:g}_s{cell.sigma:g}"
            f"_l{cell.lambda1:g}_{cell.lambda2:g}_seed{cell.seed}.pgm")


def run_cell(cell, spec, gan=None, out_dir=None, ssim_cfg=None):
    """Simulate, reconstruct, align and score one cell; failures become NaN rows"""
    ssim_cfg = ssim_cfg or SsimConfig()
    started = time.time()
    try:
        step = step_for_overlap(cell.overlap, spec.probe_diameter)
        stack, probe, phantom = run_simulation(spec.size, spec.probe_diameter, step, cell.sigma, cell.seed)
        if cell.method == 'epie':
            obj = epie_reconstruct(stack, probe, EpieConfig(iterations=spec.epie_iterations, seed=cell.seed))
            phase = object_phase(obj, phantom.phase)
        else:
            if gan is None:
                raise DomainError(f"method '{cell.method}' needs a GAN checkpoint")
            networks = (gan[0].clone(), gan[1].clone())
            phase = reconstruct(stack, probe, networks, spec.recon_config(cell)).phase
        aligned = align_phase(phase, phantom.phase)
        score = ssim(aligned, phantom.phase, ssim_cfg)
        if out_dir is not None and spec.dump_panels:
            panels = os.path.join(out_dir, 'panels')
            os.makedirs(panels, exist_ok=True)
            dump_panel([phantom.phase, aligned], os.path.join(panels, _panel_name(cell)))
        status = 'ok'
    except Exception as e:
        print(f"❌ Sweep cell {cell.index} ({cell.method}, overlap={cell.overlap}, sigma={cell.sigma}) failed: {e}")
        score = math.nan
        status = f"error: {type(e).__name__}: {e}"
    elapsed = time.time() - started
    return {
        'overlap': cell.overlap,
        'sigma': cell.sigma,
        'method': cell.method,
        'lambda1': cell.lambda1,
        'lambda2': cell.lambda2,
        'seed': cell.seed,
        'ssim': score,
        'wall_seconds': round(elapsed, 3) if spec.record_wall_time else None,
        'status': status,
    }


def _cancelled_row(cell):
    return {'overlap': cell.overlap, 'sigma': cell.sigma, 'method': cell.method, 'lambda1': cell.lambda1,
            'lambda2': cell.lambda2, 'seed': cell.seed, 'ssim': math.nan, 'wall_seconds': None,
            'status': 'cancelled'}


def _format(value):
    if value is None:
        return ''
    if isinstance(value, float):
        return 'nan' if math.isnan(value) else repr(value)
    return str(value)


def results_csv(rows, ssim_cfg=None):
    ssim_cfg = ssim_cfg or SsimConfig()
    buffer = io.StringIO()
    buffer.write(f"# ssim {ssim_cfg.describe()} aligned=global_offset\n")
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        writer.writerow([_format(row[column]) for column in CSV_COLUMNS])
    return buffer.getvalue()


def load_results(path):
    with open(path, 'r', encoding='utf-8', newline='') as handle:
        lines = [line for line in handle if not line.startswith('#')]
    rows = []
    for record in csv.DictReader(lines):
        rows.append({
            'overlap': float(record['overlap']),
            'sigma': float(record['sigma']),
            'method': record['method'],
            'lambda1': float(record['lambda1']),
            'lambda2': float(record['lambda2']),
            'seed': int(record['seed']),
            'ssim': float(record['ssim']),
            'wall_seconds': float(record['wall_seconds']) if record['wall_seconds'] else None,
            'status': record['status'],
        })
    return rows


def run_sweep(spec, gan_path=None, out_dir=None, on_cell=None, stop_event=None):
    """
    Run every cell of `spec` on a bounded worker pool

    Args:
        spec: SweepSpec
        gan_path: GAN checkpoint, required when a proposed method is listed
        out_dir: where results.csv and per-cell panels go (optional)
        on_cell: callback(row) called from the worker as each cell finishes
        stop_event: threading.Event; cells not yet started are cancelled once set

    Returns:
        SweepReport with rows in spec order
    """
    cells = spec.cells()
    gan = None
    if spec.needs_gan():
        if gan_path is None:
            raise SweepSpecError("proposed methods need a GAN checkpoint")
        gan = load_gan(gan_path)
    print(f"🚀 Starting sweep: {len(cells)} cells on {spec.workers} worker(s)")

    def job(cell):
        if stop_event is not None and stop_event.is_set():
            return _cancelled_row(cell)
        row = run_cell(cell, spec, gan, out_dir)
        if on_cell is not None:
            on_cell(dict(row, index=cell.index))
        return row

    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(job, cells))
    else:
        rows = [job(cell) for cell in cells]

    report = SweepReport(rows, cancelled=any(row['status'] == 'cancelled' for row in rows))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        report.csv_path = os.path.join(out_dir, 'results.csv')
        atomic_write_bytes(report.csv_path, results_csv(rows).encode('utf-8'))
        print(f"💾 Wrote {len(rows)} rows to {report.csv_path}")
    failed = sum(1 for row in rows if row['status'] != 'ok')
    print(f"✅ Sweep finished: {len(rows) - failed} ok, {failed} failed or cancelled")
    return report


def summarize(rows):
    """Median SSIM over seeds for every (overlap, sigma, method, lambda1, lambda2) group"""
    groups = {}
    for row in rows:
        key = (row['overlap'], row['sigma'], row['method'], row['lambda1'], row['lambda2'])
        groups.setdefault(key, []).append(row)
    summary = []
    for (overlap, sigma, method, lambda1, lambda2), members in groups.items():
        scores = [r['ssim'] for r in members if r['status'] == 'ok' and not math.isnan(r['ssim'])]
        summary.append({
            'overlap': overlap, 'sigma': sigma, 'method': method,
            'lambda1': lambda1, 'lambda2': lambda2,
            'median_ssim': float(np.median(scores)) if scores else math.nan,
            'runs': len(scores), 'failed': len(members) - len(scores),
        })
    return summary


def format_summary(summary):
    header = f"{'overlap':>8} {'sigma':>6} {'method':<13} {'lambda1':>8} {'lambda2':>8} {'ssim':>7} {'runs':>5}"
    lines = [header, '-' * len(header)]
    for item in summary:
        lines.append(f"{item['overlap']:>8g} {item['sigma']:>6g} {item['method']:<13} {item['lambda1']:>8g} "
                     f"{item['lambda2']:>8g} {item['median_ssim']:>7.4f} {item['runs']:>5d}")
    return '\n'.join(lines)


# ---------------------------------------------------------------- background job

def start_sweep_job(spec, gan_path=None, out_dir=None, socketio=None):
    """
    Start a sweep on a daemon thread

    Returns:
        (success, message)
    """
    with state.sweep_lock:
        if state.sweep_active:
            return False, 'A sweep is already running'
        if spec.needs_gan() and (gan_path is None or not os.path.exists(gan_path)):
            return False, f"GAN checkpoint not found: {gan_path}"

        state.reset_sweep_state()
        state.sweep_active = True
        state.sweep_spec = spec
        state.sweep_out_dir = out_dir
        state.sweep_total = len(spec.cells())
        state.sweep_started_at = datetime.now().isoformat()
        state.sweep_stop_event = threading.Event()
    stop_event = state.sweep_stop_event

    def on_cell(row):
        state.record_cell(row)
        if socketio is not None:
            socketio.emit('sweep_cell_done', jsonable_row(row))

    def worker():
        error, csv_path = None, None
        try:
            report = run_sweep(spec, gan_path, out_dir, on_cell=on_cell, stop_event=stop_event)
            csv_path = report.csv_path
        except Exception as e:
            error = str(e)
            print(f"❌ Sweep job failed: {e}")
        finally:
            state.mark_finished(error, csv_path)
            if socketio is not None:
                socketio.emit('sweep_finished', state.get_sweep_status())

    state.sweep_thread = threading.Thread(target=worker, daemon=True)
    state.sweep_thread.start()
    return True, f"Sweep started with {state.sweep_total} cells"


def stop_sweep_job():
    """Ask the running sweep to skip cells that have not started yet"""
    if not state.sweep_active or state.sweep_stop_event is None:
        return False, 'No sweep is running'
    state.sweep_stop_event.set()
    print("🛑 Sweep stop requested")
    return True, 'Stop requested; running cells will finish'


def spec_with_overrides(spec, overrides):
    """Apply JSON-style overrides (lists or scalars) to a spec"""
    values = {}
    for key, value in overrides.items():
        if key in _LIST_KEYS:
            value = value if isinstance(value, (list, tuple)) else [value]
            values[key] = tuple(_LIST_KEYS[key](item) for item in value)
        else:
            values[key] = value
    try:
        return replace(spec, **values)
    except TypeError as e:
        raise SweepSpecError(str(e)) from None


def jsonable_row(row):
    return {key: (None if isinstance(value, float) and math.isnan(value) else value)
            for key, value in row.items()}
