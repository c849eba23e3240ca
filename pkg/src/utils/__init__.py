"""Provenance headers and artifact writers shared by the command-line front end"""

from .artifacts import output_dir, write_frame_csv, write_json
from .provenance import build_header, get_git_commit_hash, header_lines

__all__ = [
    "build_header", "get_git_commit_hash", "header_lines",
    "output_dir", "write_frame_csv", "write_json",
]
