import io
import os
import sys
import json
import math
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from bfbm import __version__

# Settings that never change the numbers and therefore stay out of headers
_VOLATILE_KEYS = {"workers", "log_level", "out", "config"}


class ReportFactory:
    """Factory for the CSV and JSON artifacts every subcommand emits"""

    @staticmethod
    def format_value(value: Any) -> str:
        """Shortest round-trip text of a scalar; floats keep every significant digit"""
        if value is None:
            return ""
        if isinstance(value, (bool, np.bool_)):
            return "true" if value else "false"
        if isinstance(value, (int, np.integer)):
            return str(int(value))
        if isinstance(value, (float, np.floating)):
            return repr(float(value))
        return str(value)

    @staticmethod
    def canonical_config(config: Dict[str, Any]) -> Dict[str, Any]:
        """Config restricted to the keys that determine the output, JSON-ready"""
        out = {}
        for key in sorted(config):
            if key in _VOLATILE_KEYS:
                continue
            out[key] = ReportFactory._jsonable(config[key])
        return out

    @staticmethod
    def create_header(command: str, config: Dict[str, Any], seed: Optional[int]) -> List[str]:
        """Comment lines opening every CSV file"""
        canonical = json.dumps(ReportFactory.canonical_config(config), sort_keys=True,
                               separators=(",", ":"))
        return [
            f"# bfbm-lab {__version__}",
            f"# command: {command}",
            f"# config: {canonical}",
            f"# seed: {'' if seed is None else seed}",
        ]

    @staticmethod
    def render_csv(header: Sequence[str], columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        buffer = io.StringIO()
        for line in header:
            buffer.write(line + "\n")
        buffer.write(",".join(columns) + "\n")
        fmt = ReportFactory.format_value
        for row in rows:
            buffer.write(",".join(fmt(v) for v in row) + "\n")
        return buffer.getvalue()

    @staticmethod
    def write_csv(path: Optional[str], header: Sequence[str], columns: Sequence[str],
                  rows: Iterable[Sequence[Any]]) -> str:
        """Write a CSV artifact to path, or stdout when path is None or '-'"""
        text = ReportFactory.render_csv(header, columns, rows)
        ReportFactory._emit(path, text)
        return text

    @staticmethod
    def create_json_document(command: str, config: Dict[str, Any], seed: Optional[int],
                             payload: Any) -> Dict[str, Any]:
        """JSON document whose first key carries the header data"""
        return {
            "meta": {
                "version": __version__,
                "command": command,
                "config": ReportFactory.canonical_config(config),
                "seed": seed,
            },
            "result": ReportFactory._jsonable(payload),
        }

    @staticmethod
    def render_json(document: Dict[str, Any]) -> str:
        return json.dumps(document, indent=2) + "\n"

    @staticmethod
    def write_json(path: Optional[str], document: Dict[str, Any]) -> str:
        text = ReportFactory.render_json(document)
        ReportFactory._emit(path, text)
        return text

    @staticmethod
    def sidecar_path(path: Optional[str]) -> Optional[str]:
        """JSON companion of a CSV artifact; None when the CSV goes to stdout"""
        if path is None or path == "-":
            return None
        sidecar = os.path.splitext(path)[0] + ".json"
        return sidecar if sidecar != path else path + ".json"

    @staticmethod
    def emit_table(config, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
        """CSV artifact of a RunConfig, header included"""
        header = ReportFactory.create_header(config.command, config.header_config(), config.seed)
        return ReportFactory.write_csv(config.out, header, columns, rows)

    @staticmethod
    def emit_document(config, payload: Any, path: Optional[str] = None) -> str:
        """JSON artifact of a RunConfig, written to path or to config.out"""
        document = ReportFactory.create_json_document(config.command, config.header_config(), config.seed, payload)
        return ReportFactory.write_json(config.out if path is None else path, document)

    @staticmethod
    def format_duration(seconds: float) -> str:
        """Format a duration in seconds to h:mm:ss or m:ss"""
        if seconds is None or not math.isfinite(seconds):
            return "Unknown"
        seconds = int(seconds)
        minutes, seconds = divmod(seconds, 60)
        hours, minutes = divmod(minutes, 60)
        if hours > 0:
            return f"{hours}:{minutes:02d}:{seconds:02d}"
        return f"{minutes}:{seconds:02d}"

    @staticmethod
    def _jsonable(value: Any) -> Any:
        if isinstance(value, dict):
            return {str(k): ReportFactory._jsonable(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [ReportFactory._jsonable(v) for v in value]
        if isinstance(value, np.ndarray):
            return [ReportFactory._jsonable(v) for v in value.tolist()]
        if isinstance(value, (bool, np.bool_)):
            return bool(value)
        if isinstance(value, np.integer):
            return int(value)
        if isinstance(value, (float, np.floating)):
            value = float(value)
            # JSON has no infinities; keep them readable
            if math.isinf(value):
                return "inf" if value > 0 else "-inf"
            if math.isnan(value):
                return "nan"
            return value
        if hasattr(value, "to_dict"):
            return ReportFactory._jsonable(value.to_dict())
        return value

    @staticmethod
    def _emit(path: Optional[str], text: str) -> None:
        if path is None or path == "-":
            sys.stdout.write(text)
            sys.stdout.flush()
            return
        with open(path, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
