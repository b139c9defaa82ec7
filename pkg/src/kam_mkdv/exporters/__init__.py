"""
Run artifact exporters

Write run results in machine-readable formats:
- JSON (solutions, stage reports, summaries)
- CSV (histories, spectra, trajectories, sweeps)
- Manifest (config hash, versions and every file a run wrote)
"""

from .json_exporter import JSONExporter
from .csv_exporter import CSVExporter
from .manifest import ManifestWriter

__all__ = [
    'JSONExporter',
    'CSVExporter',
    'ManifestWriter'
]
