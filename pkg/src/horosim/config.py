"""Run configuration: a TOML document validated into a ``RunConfig``.

Grammar: flat top-level keys for the lattice, model and seed, and one
table per subcommand for its own settings::

    d = 3
    sides = [4, 4, 4]
    beta = 2.0
    h_rule = "inverse_volume"   # or give h = 0.015625
    seed = 1

    [chain]
    num_sweeps = 20000
    burn_in = 2000

Unknown keys are errors.  Every violation found is reported at once.
"""

from __future__ import annotations

import sys
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUBCOMMANDS = ("simulate", "certify", "ward", "study", "rmt", "pushforward")


class ConfigError(ValueError):
    """Raised with the full list of violations in ``.problems``."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid config:\n  " + "\n  ".join(self.problems))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ChainSection(_Strict):
    num_sweeps: int = Field(20000, gt=0)
    burn_in: int = Field(2000, ge=0)
    step_size: float = Field(0.5, gt=0)
    shift_step: float = Field(0.5, gt=0)
    kernel: Literal["gibbs", "langevin"] = "gibbs"
    thin: int = Field(1, ge=1)
    num_chains: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)
    write_traces: bool = False

    @model_validator(mode="after")
    def _burn(self):
        if self.burn_in >= self.num_sweeps:
            raise ValueError(f"burn_in ({self.burn_in}) must be below num_sweeps ({self.num_sweeps})")
        return self


class SimulateSection(_Strict):
    observables: list[str] = ["t0", "sinh_t0", "ward", "theorem1"]


class CertifySection(_Strict):
    num_configs: int = Field(100, gt=0)
    betas: list[float] | None = None


class WardSection(_Strict):
    alphas: list[float] = [0.5, 1.0, 2.0]
    rhos: list[float] = [1.0, 2.0, 3.0]


class StudySection(_Strict):
    sizes: list[int] = [4, 6]
    reweight: bool = False
    reweight_samples: int = Field(400, gt=0)


class RmtSection(_Strict):
    N: int = Field(1, ge=1)
    profile: Literal["exponential_w", "cubes", "custom"] = "cubes"
    W: float | None = None
    J0: float | None = 1.0
    J1: float = 0.0
    cube_side: int | None = 1
    matrix: list[list[float]] | None = None
    energy: float = 0.0
    epsilon: float = Field(0.5, gt=0)
    site: int = Field(0, ge=0)
    mc_draws: int = Field(2000, gt=0)


class PushforwardSection(_Strict):
    n: int = Field(1, ge=1, le=2)
    N: int = Field(1, ge=1)
    mc_draws: int = Field(200_000, gt=0)
    lebesgue: bool = False


class RunConfig(_Strict):
    subcommand: Literal["simulate", "certify", "ward", "study", "rmt", "pushforward"] | None = None
    d: int = Field(gt=0)
    sides: list[int]
    beta: float = Field(gt=0)
    h: float | None = Field(None, ge=0)
    h_rule: Literal["inverse_volume", "fixed"] | None = None
    ensemble: Literal["delta", "hmass"] = "delta"
    seed: int = Field(0, ge=0, lt=2**64)
    out_dir: str | None = None
    chain: ChainSection = ChainSection()
    simulate: SimulateSection = SimulateSection()
    certify: CertifySection = CertifySection()
    ward: WardSection = WardSection()
    study: StudySection = StudySection()
    rmt: RmtSection = RmtSection()
    pushforward: PushforwardSection = PushforwardSection()

    @model_validator(mode="after")
    def _cross(self):
        problems = []
        if len(self.sides) != self.d:
            problems.append(f"sides has {len(self.sides)} entries but d = {self.d}")
        if any(L < 2 for L in self.sides):
            problems.append(f"side lengths must be >= 2, got {self.sides}")
        if self.h is not None and self.h_rule == "inverse_volume":
            problems.append("give either h or h_rule = 'inverse_volume', not both")
        if self.h is None and self.h_rule != "inverse_volume":
            problems.append("h is required unless h_rule = 'inverse_volume'")
        if self.ensemble == "hmass" and self.h == 0:
            problems.append("the hmass ensemble needs h > 0")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def num_sites(self) -> int:
        out = 1
        for L in self.sides:
            out *= L
        return out

    @property
    def resolved_h(self) -> float:
        return 1.0 / self.num_sites if self.h_rule == "inverse_volume" else float(self.h)


def _format_errors(exc: ValidationError) -> list[str]:
    out = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        msg = err["msg"].removeprefix("Value error, ")
        if err["type"] == "extra_forbidden":
            msg = "unknown key"
        out.append(f"{loc}: {msg}")
    return out


def parse_config(text: str, subcommand: str | None = None) -> tuple[RunConfig, list[str]]:
    """Parse and validate a TOML config; returns ``(config, warnings)``.

    ``subcommand`` (from the command line) fills in or must match the
    document's own ``subcommand`` key.
    """
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax: {exc}"]) from None
    problems = []
    if subcommand is not None:
        if subcommand not in SUBCOMMANDS:
            problems.append(f"subcommand: unknown subcommand {subcommand!r}")
        elif raw.get("subcommand", subcommand) != subcommand:
            problems.append(f"subcommand: config says {raw['subcommand']!r}, command line says {subcommand!r}")
        else:
            raw["subcommand"] = subcommand
    try:
        cfg = RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(problems + _format_errors(exc)) from None
    if problems:
        raise ConfigError(problems)
    warnings = []
    if cfg.subcommand == "certify":
        betas = cfg.certify.betas or [cfg.beta]
        low = [b for b in betas if b < 1.5]
        if low:
            warnings.append(f"beta {low} below 3/2: convexity is not guaranteed there, certificates are reported only")
    if cfg.subcommand in ("ward", "study", "certify") and cfg.ensemble != "delta":
        warnings.append("the Ward identity and Hessian identity checks refer to the delta-constrained ensemble")
    return cfg, warnings
