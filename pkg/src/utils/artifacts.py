"""
CSV and JSON writers. CSV files start with a '# ' comment block holding the
header; the body is written with a fixed float format so identical inputs give
byte-identical bodies.
"""

import json
import os
from typing import Any, Dict, Optional

import pandas as pd
from dotenv import load_dotenv

from .provenance import header_lines

load_dotenv()

FLOAT_FORMAT = "%.17g"


def output_dir(explicit: Optional[str] = None) -> str:
    """Explicit directory, else COARSENING_OUTPUT_DIR, else ./output; created on demand"""
    path = explicit or os.getenv("COARSENING_OUTPUT_DIR", "output")
    os.makedirs(path, exist_ok=True)
    return path


def write_frame_csv(path: str, frame: pd.DataFrame, header: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in header_lines(header):
            f.write(f"# {line}\n")
        frame.to_csv(f, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def write_json(path: str, payload: Any, header: Optional[Dict[str, Any]] = None) -> str:
    if hasattr(payload, "model_dump"):
        payload = payload.model_dump(mode="json", by_alias=True)
    document = {"header": header, **payload} if header is not None else payload
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2, sort_keys=False, default=str)
        f.write("\n")
    return path


def read_csv_body(path: str) -> pd.DataFrame:
    """Inverse of write_frame_csv, skipping the header block"""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Artifact not found at {path}")
    return pd.read_csv(path, comment="#", float_precision="round_trip")
