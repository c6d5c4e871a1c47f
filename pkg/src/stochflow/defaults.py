"""Default parameters for every experiment, one dataclass per CLI subcommand.

Field values here are the single source of defaults: the CLI fills any key
a config omits from these, and the acceptance suite runs them unchanged
unless a criterion fixes a value explicitly.

Drift and diffusion entries use the preset syntax of ``presets``: a name
or ``{"kind": name, **kwargs}``.
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field

SEED = 20240601
WORKERS = 1
FD_STEP = 1e-5            # coefficient gradients
MC_FD_STEP = 1e-3         # common-noise finite-difference gradients
BLOW_UP_RADIUS = 1e6
LQ_NODES = 64             # L^q_p quadrature nodes per axis
MOLLIFIER_NODES = 32      # mollifier quadrature nodes per axis
PICARD_TOL = 1e-8
PICARD_MAX_ITER = 50
NSE_TOL = 1e-4
NSE_MAX_ITER = 20
BLOB_SPACINGS = 2.0       # free-space desingularization radius in grid spacings


@dataclass
class SimulateConfig:
    drift: typing.Union[str, dict] = "ou"
    diffusion: typing.Union[str, dict] = field(default_factory=lambda: {"kind": "scalar", "dim": 1,
                                                                         "scale": 2.0**0.5})
    x0: list = field(default_factory=lambda: [1.0])
    t_start: float = 0.0
    horizon: float = 1.0
    dt: float = 1e-3
    n_paths: int = 100_000
    functions: list = field(default_factory=list)
    name: str = "simulate"


@dataclass
class StabilityConfig:
    drift: typing.Union[str, dict] = field(default_factory=lambda: {"kind": "gaussian_bump", "dim": 2})
    perturbation: typing.Union[str, dict] = field(default_factory=lambda: {"kind": "indicator_ball", "dim": 2})
    diffusion: typing.Union[str, dict] = field(default_factory=lambda: {"kind": "scalar", "dim": 2})
    epsilons: list = field(default_factory=lambda: [0.4, 0.2, 0.1, 0.05])
    x0: list = field(default_factory=lambda: [0.0, 0.0])
    box: list = field(default_factory=lambda: [[-3.0, 3.0], [-3.0, 3.0]])
    horizon: float = 1.0
    dt: float = 5e-3
    n_paths: int = 20_000
    nodes: int = LQ_NODES
    name: str = "stability"


@dataclass
class GradientConfig:
    drift: typing.Union[str, dict] = "zero"
    diffusion: typing.Union[str, dict] = "scalar"
    function: str = "sin"
    x0: list = field(default_factory=lambda: [0.0])
    horizon: float = 1.0
    dt: float = 5e-2
    n_paths: int = 100_000
    method: str = "bel"
    fd_step: float = MC_FD_STEP
    name: str = "gradient"


@dataclass
class JacobianConfig:
    drift: typing.Union[str, dict] = "rotation"
    diffusion: typing.Union[str, dict] = field(default_factory=lambda: {"kind": "scalar", "dim": 2})
    x0: list = field(default_factory=lambda: [0.5, -0.5])
    horizon: float = 1.0
    dt: float = 1e-3
    n_paths: int = 1_000
    powers: list = field(default_factory=lambda: [2.0, 4.0])
    name: str = "jacobian"


@dataclass
class ZvonkinConfig:
    dim: int = 1
    amplitude: float = 0.5
    width: float = 1.0
    sigma: float = 2.0**0.5
    t0: float = 0.0
    s0: float = 0.1
    half_width: float = 10.0
    nodes: int = 512
    n_times: int = 100
    n_paths: int = 100_000
    start_region: list = field(default_factory=lambda: [-2.0, 2.0])
    bins: int = 16
    adaptive: bool = False
    name: str = "zvonkin"


@dataclass
class NseConfig:
    initial: str = "taylor_green"
    nu: float = 0.1
    horizon: float = 0.25
    grid: int = 32
    n_paths: int = 2_000
    dt: float = 5e-3
    stride: int = 5
    tol: float = NSE_TOL
    max_iter: int = NSE_MAX_ITER
    vorticity_check: bool = False
    name: str = "nse"


@dataclass
class KernelTestConfig:
    grid: int = 32
    circulation: float = 1.0
    radii_in_delta: list = field(default_factory=lambda: [3.0, 4.0, 6.0])
    name: str = "kernels"


CONFIGS = {
    "simulate": SimulateConfig,
    "stability": StabilityConfig,
    "gradient": GradientConfig,
    "jacobian": JacobianConfig,
    "zvonkin": ZvonkinConfig,
    "nse-solve": NseConfig,
    "nse-kernel-test": KernelTestConfig,
}


def _schema_for(tp) -> dict:
    if tp is bool:
        return {"type": "boolean"}
    if tp is int:
        return {"type": "integer"}
    if tp is float:
        return {"type": "number"}
    if tp is str:
        return {"type": "string"}
    if tp is list:
        return {"type": "array"}
    if typing.get_origin(tp) is typing.Union:
        return {"type": ["string", "object"]}
    raise TypeError(f"no schema for {tp!r}")


def schema(subcommand: str) -> dict:
    """JSON schema of a config file for ``subcommand``."""
    cls = CONFIGS[subcommand]
    hints = typing.get_type_hints(cls)
    props = {f.name: _schema_for(hints[f.name]) for f in dataclasses.fields(cls)}
    props["seed"] = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
    return {
        "type": "object",
        "properties": {"experiments": {"type": "array", "items": {
            "type": "object", "properties": props, "additionalProperties": False}}},
        "required": ["experiments"],
        "additionalProperties": False,
    }
