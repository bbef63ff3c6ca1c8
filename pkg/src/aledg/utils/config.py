"""Run configuration assembled from defaults, files, environment and flags."""

import argparse
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

from src.aledg.numerics.mesh_motion import RelaxationMode
from src.aledg.numerics.predictor import MotionMode
from src.aledg.utils.common import get_env_var

DEFAULT_RESULTS_DB_URL = "sqlite:///aledg_results.db"

_FLOAT_FIELDS = ("cfl", "final_time", "relaxation_omega", "prandtl")
_OPTIONAL_FLOAT_FIELDS = ("gamma", "mu")
_INT_FIELDS = ("order", "output_every", "max_steps", "seed")
_BOOL_FIELDS = ("walls", "persist")


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one simulation run.

    Attributes:
        case (str): Registered case name.
        order (int): Polynomial degree N in {1, 2, 3}.
        cfl (float): CFL number in (0, 0.5].
        final_time (float): t_f > 0.
        mesh (Optional[str]): Mesh file replacing the case generator.
        resolution (Tuple[int, ...]): Generator resolution, e.g. (nx, ny).
        motion (MotionMode): Mesh motion mode.
        relaxation (RelaxationMode): Blend of Lagrangian and rezoned nodes.
        relaxation_omega (float): Constant omega for ``constant`` relaxation.
        gamma (Optional[float]): Override of the case's adiabatic index.
        mu (Optional[float]): Override of the case's viscosity.
        prandtl (float): Prandtl number.
        walls (bool): Close the domain with slip walls where supported.
        output_dir (str): Directory for VTK and CSV output.
        output_every (int): Output cadence in steps, 0 for final only.
        max_steps (int): Safety bound on the number of steps.
        seed (int): Seed for randomized mesh generation.
        persist (bool): Store run records in the results database.
        results_db_url (str): SQLAlchemy URL of the results database.
    """

    case: str = "vortex"
    order: int = 1
    cfl: float = 0.5
    final_time: float = 0.1
    mesh: Optional[str] = None
    resolution: Tuple[int, ...] = ()
    motion: MotionMode = MotionMode.LAGRANGIAN
    relaxation: RelaxationMode = RelaxationMode.DEFORMATION
    relaxation_omega: float = 0.7
    gamma: Optional[float] = None
    mu: Optional[float] = None
    prandtl: float = 0.75
    walls: bool = False
    output_dir: str = "output"
    output_every: int = 0
    max_steps: int = 1_000_000
    seed: int = 0
    persist: bool = False
    results_db_url: str = DEFAULT_RESULTS_DB_URL
    extra: Dict[str, str] = field(default_factory=dict)

    def validate(self) -> "SimulationConfig":
        """Check parameter ranges and return ``self``.

        Raises:
            ValueError: If a parameter is out of range.
        """
        if self.order not in (1, 2, 3):
            raise ValueError(f"order must be 1, 2 or 3, got {self.order}")
        if not 0.0 < self.cfl <= 0.5:
            raise ValueError(f"cfl must lie in (0, 0.5], got {self.cfl}")
        if not self.final_time > 0.0:
            raise ValueError(f"final time must be positive: {self.final_time}")
        if not 0.0 <= self.relaxation_omega <= 1.0:
            raise ValueError("relaxation omega must lie in [0, 1]")
        if self.output_every < 0 or self.max_steps <= 0:
            raise ValueError("output cadence and step bound must be valid")
        return self

    def with_overrides(self, values: Mapping[str, Any]) -> "SimulationConfig":
        """Return a copy with string or typed values applied."""
        known = {f.name for f in dataclasses.fields(self)}
        typed: Dict[str, Any] = {}
        extra = dict(self.extra)
        for key, raw in values.items():
            if raw is None:
                continue
            if key not in known:
                extra[key] = str(raw)
                continue
            typed[key] = _coerce(key, raw)
        return dataclasses.replace(self, extra=extra, **typed)


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"Not a boolean: {value!r}")


def _coerce(key: str, raw: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    value = raw.strip()
    if key in _FLOAT_FIELDS:
        return float(value)
    if key in _OPTIONAL_FLOAT_FIELDS:
        return None if value.lower() == "none" else float(value)
    if key in _INT_FIELDS:
        return int(value)
    if key in _BOOL_FIELDS:
        return _parse_bool(value)
    if key == "resolution":
        return tuple(int(v) for v in value.replace("x", ",").split(",") if v)
    if key == "motion":
        return MotionMode(value)
    if key == "relaxation":
        return RelaxationMode(value)
    if key == "mesh":
        return value or None
    return value


def read_key_value_file(path: Path) -> Dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment.

    Raises:
        ValueError: If a non-empty line has no ``=``.
    """
    values: Dict[str, str] = {}
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ValueError(f"{path}:{number}: expected 'key = value'")
        key, value = content.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def build_parser() -> argparse.ArgumentParser:
    """Command-line flags shared by the entry points."""
    parser = argparse.ArgumentParser(
        description="Direct ALE ADER-DG solver on moving triangle meshes"
    )
    parser.add_argument("--config", help="key-value configuration file")
    parser.add_argument("--case")
    parser.add_argument("--order", type=int)
    parser.add_argument("--cfl", type=float)
    parser.add_argument("--tf", dest="final_time", type=float)
    parser.add_argument("--mesh")
    parser.add_argument("--resolution")
    parser.add_argument("--out", dest="output_dir")
    parser.add_argument(
        "--motion", choices=[m.value for m in MotionMode]
    )
    parser.add_argument(
        "--relax",
        dest="relaxation",
        choices=[m.value for m in RelaxationMode],
    )
    parser.add_argument("--omega", dest="relaxation_omega", type=float)
    parser.add_argument("--mu", type=float)
    parser.add_argument("--output-every", dest="output_every", type=int)
    parser.add_argument("--persist", action="store_true", default=None)
    return parser


def load_config(
    argv: Optional[Sequence[str]] = None,
    case_defaults: Optional[Mapping[str, Mapping[str, Any]]] = None,
) -> SimulationConfig:
    """Assemble a validated configuration.

    Values are applied in the order case defaults, key-value file,
    environment (``ALEDG_RESULTS_DB_URL``) and finally CLI flags.

    Args:
        argv (Optional[Sequence[str]]): Command-line arguments.
        case_defaults (Optional[Mapping[str, Mapping[str, Any]]]): Default
            parameters per case name.

    Returns:
        SimulationConfig: Validated configuration.

    Raises:
        ValueError: If a value is invalid.
    """
    args = build_parser().parse_args(list(argv) if argv is not None else [])
    flags = {k: v for k, v in vars(args).items() if k != "config"}
    file_values: Dict[str, str] = (
        read_key_value_file(Path(args.config)) if args.config else {}
    )
    case = flags.get("case") or file_values.get("case") or "vortex"

    config = SimulationConfig(case=case)
    layers: List[Mapping[str, Any]] = []
    if case_defaults is not None:
        layers.append(case_defaults.get(case, {}))
    layers.append(file_values)
    env_url = get_env_var("ALEDG_RESULTS_DB_URL", "")
    if env_url:
        layers.append({"results_db_url": env_url})
    layers.append(flags)
    for layer in layers:
        config = config.with_overrides(layer)
    return config.validate()
