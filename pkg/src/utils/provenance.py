"""
Reproducibility record written at the top of every artifact: tool version,
commit, the parsed configuration, kernel constants, grid and seed.
"""

import json
import subprocess
from typing import Any, Dict, List, Optional

from src import __version__


def get_git_commit_hash() -> str:
    """Get current git commit hash"""
    try:
        commit_hash = subprocess.check_output(
            ['git', 'rev-parse', '--short', 'HEAD'], stderr=subprocess.DEVNULL
        ).decode('ascii').strip()
        return commit_hash
    except (OSError, subprocess.CalledProcessError):
        return "unknown"


def build_header(config: Dict[str, Any], kernel: Optional[Dict[str, Any]] = None,
                 grid: Optional[Dict[str, Any]] = None, seed: Optional[int] = None,
                 extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    header = {
        "tool": "coarsening-lab",
        "version": __version__,
        "commit": get_git_commit_hash(),
        "config": config,
        "kernel": kernel,
        "grid": grid,
        "seed": seed,
    }
    if extra:
        header.update(extra)
    return header


def header_lines(header: Dict[str, Any]) -> List[str]:
    """One 'key: json' line per header entry, in insertion order"""
    return [f"{key}: {json.dumps(value, sort_keys=True, default=str)}" for key, value in header.items()]
