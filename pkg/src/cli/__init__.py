"""Command-line front end"""

from .main import COMMANDS, build_parser, main, parse_config
from .models import CriterionResult, ErrorResponse, KernelRecord, RunConfig, VerifyReport

__all__ = [
    "COMMANDS", "build_parser", "main", "parse_config",
    "CriterionResult", "ErrorResponse", "KernelRecord", "RunConfig", "VerifyReport",
]
