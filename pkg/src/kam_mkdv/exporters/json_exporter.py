"""
JSON export of run results.

Numpy scalars and arrays are converted to plain Python values; complex
numbers become [re, im] pairs.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np

logger = logging.getLogger(__name__)


class JSONExporter:
    """Export run results to JSON files."""

    def __init__(self):
        self.logger = logging.getLogger(__name__)

    def export(self, data: Dict[str, Any], output_path: Optional[str] = None, pretty: bool = True) -> str:
        """
        Serialize `data` and optionally write it.

        Args:
            data: Dictionary with the result
            output_path: File path to save the JSON (None = only return it)
            pretty: Indent the output

        Returns:
            The JSON string

        Raises:
            ValueError: If data is empty or cannot be serialized
        """
        if not data:
            raise ValueError("data cannot be empty")
        try:
            text = json.dumps(self._prepare(data), indent=2 if pretty else None, default=str)
        except (TypeError, ValueError) as e:
            self.logger.error(f"Failed to serialize to JSON: {e}")
            raise ValueError(f"Failed to serialize: {e}")
        if output_path:
            path = Path(output_path)
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text)
            self.logger.info(f"JSON written: {output_path}")
        return text

    def load(self, input_path: str) -> Dict[str, Any]:
        with open(input_path) as fh:
            return json.load(fh)

    def _prepare(self, value: Any) -> Any:
        if isinstance(value, dict):
            return {str(k): self._prepare(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [self._prepare(v) for v in value]
        if isinstance(value, np.ndarray):
            return self._prepare(value.tolist())
        if isinstance(value, (complex, np.complexfloating)):
            return [float(value.real), float(value.imag)]
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, np.floating):
            return float(value)
        if isinstance(value, np.bool_):
            return bool(value)
        if hasattr(value, "value") and hasattr(value, "name"):
            return value.value
        return value
