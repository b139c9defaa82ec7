"""
CSV export of numeric tables (histories, spectra, sweeps, trajectories).
"""

import csv
import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class CSVExporter:
    """Export lists of row dictionaries to CSV."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def export_rows(self, rows: List[Dict[str, Any]], output_path: Optional[str] = None,
                    fieldnames: Optional[List[str]] = None) -> str:
        """
        Write rows with a header.

        Args:
            rows: One dictionary per row
            output_path: File path to save the CSV (None = only return it)
            fieldnames: Column order (None = first-seen order over all rows)

        Returns:
            CSV content

        Raises:
            ValueError: If rows is empty
        """
        if not rows:
            raise ValueError("rows cannot be empty")
        fieldnames = fieldnames or self._fieldnames(rows)
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=fieldnames, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: self._cell(row.get(key, "")) for key in fieldnames})
        content = buffer.getvalue()
        if output_path:
            try:
                path = Path(output_path)
                path.parent.mkdir(parents=True, exist_ok=True)
                with open(path, "w", newline="") as fh:
                    fh.write(content)
            except IOError as e:
                self.logger.error(f"Failed to write CSV file: {e}")
                raise
            self.logger.info(f"CSV written: {output_path}")
        return content

    def _fieldnames(self, rows: List[Dict[str, Any]]) -> List[str]:
        names: List[str] = []
        for row in rows:
            for key in row:
                if key not in names:
                    names.append(key)
        return names

    def _cell(self, value: Any) -> Any:
        if isinstance(value, complex):
            return f"{value.real:.17g}{value.imag:+.17g}j"
        if isinstance(value, float):
            return f"{value:.17g}"
        if isinstance(value, (list, tuple)):
            return " ".join(str(self._cell(v)) for v in value)
        return value
