"""
Pydantic models for run configuration and report schemas
"""

from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, field_validator

from src.core.evolve import DEFAULT_DTAU
from src.core.kernel import parse_weights


class RunConfig(BaseModel):
    """Parsed command line or config file; echoed into every artifact header"""
    command: Literal["steady", "evolve", "transform", "mc", "verify"] = Field(..., description="Subcommand to run")
    kernel: List[float] = Field(default_factory=lambda: [0.0, 1.0], description="Merge weights p_1..p_N")
    h: float = Field(1.0 / 64.0, gt=0.0, description="Grid step; must divide 1")
    y_max: float = Field(64.0, gt=1.0, description="Right end of the stored grid")
    pad: int = Field(4, ge=2, description="Zero padding factor for spectral transforms")
    seed: int = Field(0, ge=0, description="Seed of the Monte Carlo generator")
    output_dir: Optional[str] = Field(None, description="Artifact directory (default: COARSENING_OUTPUT_DIR)")

    theta: List[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0, 3.5], description="Profile exponents")

    init: str = Field("uniform", description="uniform | steady:THETA | path to a y,value CSV")
    tau_end: float = Field(3.0, ge=0.0, description="Final rescaled time")
    dtau: float = Field(DEFAULT_DTAU, gt=0.0, description="Time step")
    gamma: float = Field(3.0, ge=0.0, description="Weight exponent of the extra traced norm")
    emit: Literal["csv", "binary"] = Field("csv", description="Snapshot format")
    snapshots: int = Field(8, ge=1, description="Snapshot thinning stride")

    count: int = Field(200000, ge=1, description="Initial number of intervals")
    sampler: str = Field("uniform:1,2", description="Initial length distribution")
    variant: Literal["mean-field", "ring"] = Field("mean-field", description="Partner selection rule")
    grow: float = Field(8.0, gt=1.0, description="Target cutoff as a multiple of the initial cutoff")
    replicas: int = Field(1, ge=1, description="Independent ensembles with consecutive seeds")
    emit_cdf: Optional[str] = Field(None, description="CSV path for the rescaled empirical CDF")

    criteria: Optional[List[int]] = Field(None, description="Acceptance criteria to run (default: all)")

    @field_validator("kernel", mode="before")
    @classmethod
    def _parse_kernel(cls, v):
        return parse_weights(v) if isinstance(v, str) else v

    @field_validator("theta", "criteria", mode="before")
    @classmethod
    def _parse_list(cls, v):
        if isinstance(v, str):
            return [x for x in v.replace(";", ",").split(",") if x.strip()]
        return v

    def as_record(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class KernelRecord(BaseModel):
    """Kernel constants as serialized in reports"""
    weights: List[float]
    q: float
    kappa: float
    R: Any = Field(..., description="Radius of convergence of Psi, or 'inf'")
    n_min: int
    # "lambda" is a Python keyword
    lambda_: Any = Field(..., alias="lambda", description="Decay rate of the finite-mean profile, or 'inf'")
    psi_coeffs: List[float] = Field(default_factory=list)

    model_config = {"populate_by_name": True}


class CriterionResult(BaseModel):
    """Outcome of one acceptance criterion"""
    id: int = Field(..., description="Criterion number")
    name: str = Field(..., description="Short description")
    passed: bool = Field(..., description="Whether the measured values meet the tolerance")
    measured: Dict[str, Any] = Field(default_factory=dict, description="Measured quantities")
    seconds: float = Field(0.0, description="Wall time")
    error: Optional[str] = Field(None, description="Error raised while measuring, if any")


class VerifyReport(BaseModel):
    """Machine-readable acceptance report"""
    status: str = Field(..., description="pass or fail")
    kernel: KernelRecord
    results: List[CriterionResult] = Field(default_factory=list)
    total_seconds: float = 0.0

    @property
    def failed(self) -> List[int]:
        return [r.id for r in self.results if not r.passed]


class ErrorResponse(BaseModel):
    """Error report written to stderr"""
    status: str = Field("error", description="Response status")
    error: str = Field(..., description="Error message")
    error_type: str = Field(..., description="Exception class")
    exit_code: int = Field(..., description="Process exit code")
