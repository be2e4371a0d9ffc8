"""
Sweep Watcher - Connects to the sweep monitor and prints cell results as they land
"""
import argparse
import time

import requests
import socketio

from monitor_config import MonitorConfig


def format_cell(row):
    score = row.get('ssim')
    score_text = 'nan' if score is None else f"{score:.4f}"
    return (f"#{row.get('index', '?'):>4} {row.get('method', ''):<13} overlap={row.get('overlap')} "
            f"sigma={row.get('sigma')} seed={row.get('seed')} ssim={score_text} [{row.get('status')}]")


class SweepWatcher:
    def __init__(self, monitor_url=None):
        self.monitor_url = (monitor_url or MonitorConfig.MONITOR_URL).rstrip('/')
        self.sio = socketio.Client(reconnection=True,
                                   reconnection_attempts=MonitorConfig.MAX_RECONNECT_ATTEMPTS,
                                   reconnection_delay=MonitorConfig.RECONNECT_DELAY)
        self.cells_seen = 0
        self.finished = False
        self.setup_events()

    def setup_events(self):
        @self.sio.event
        def connect():
            print("✅ Connected to sweep monitor")
            self.sio.emit('request_status', {})

        @self.sio.event
        def disconnect():
            print("❌ Disconnected from sweep monitor")

        @self.sio.event
        def connect_error(data):
            print(f"❌ Connection error: {data}")

        @self.sio.on('sweep_status')
        def handle_status(data):
            state = 'running' if data.get('active') else 'idle'
            print(f"📊 Sweep {state}: {data.get('completed_cells', 0)}/{data.get('total_cells', 0)} cells")

        @self.sio.on('sweep_cell_done')
        def handle_cell(data):
            self.cells_seen += 1
            print(f"🔄 {format_cell(data)}")

        @self.sio.on('sweep_finished')
        def handle_finished(data):
            self.finished = True
            if data.get('error'):
                print(f"❌ Sweep failed: {data['error']}")
            else:
                print(f"✅ Sweep finished: {data.get('completed_cells')} cells, "
                      f"{data.get('failed_cells')} failed, CSV at {data.get('csv_path')}")

    def fetch_snapshot(self):
        """Print the rows finished before the watcher connected"""
        try:
            response = requests.get(f"{self.monitor_url}/api/sweep/results", timeout=MonitorConfig.STATUS_TIMEOUT)
            response.raise_for_status()
        except requests.RequestException as e:
            print(f"⚠️ Could not fetch results snapshot: {e}")
            return None
        data = response.json()
        for row in data.get('rows', []):
            print(f"📋 {format_cell(row)}")
        return data

    def connect(self):
        for attempt in range(1, MonitorConfig.MAX_RECONNECT_ATTEMPTS + 1):
            try:
                print(f"🔄 Attempting to connect to {self.monitor_url}...")
                self.sio.connect(self.monitor_url)
                return True
            except Exception as e:
                print(f"❌ Failed to connect (attempt {attempt}): {e}")
                time.sleep(MonitorConfig.RECONNECT_DELAY)
        return False

    def run(self, exit_on_finish=False):
        self.fetch_snapshot()
        if not self.connect():
            print("❌ Failed to start sweep watcher")
            return
        print("🎯 Watching sweep. Press Ctrl+C to stop.")
        try:
            while self.sio.connected and not (exit_on_finish and self.finished):
                time.sleep(0.5)
        except KeyboardInterrupt:
            print("\n🛑 Shutting down...")
        finally:
            if self.sio.connected:
                self.sio.disconnect()


if __name__ == '__main__':
    parser = argparse.ArgumentParser(description='Follow a running sweep on the monitor server')
    parser.add_argument('--url', default=None)
    parser.add_argument('--exit-on-finish', action='store_true')
    args = parser.parse_args()
    print("🚀 Starting Sweep Watcher...")
    SweepWatcher(args.url).run(args.exit_on_finish)
