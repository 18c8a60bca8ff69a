"""Line-oriented experiment configuration: key/value sections plus tables.

Format, by example::

    [system]
    kappa = 80
    sigma = 1.0

    [species]
    # z   c_left   c_right
    1     1.0      0.5
    -1    1.0      0.5

    [fixed_charge]
    # length   rho
    0.5        1
    0.5        -10
    0.5        20
    0.5        -60

    [command]
    type = trace
    family = I2V
    i_min = 0.5
    i_max = 100

    [solver]
    abs_tol = 1e-6

    [output]
    prefix = two_ion

Blank lines and ``#`` comments are ignored.  ``[species]`` and
``[fixed_charge]`` hold whitespace-separated numeric rows; every other
section holds ``key = value`` lines.  Parse and validation errors carry the
offending line number.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .bvp import SolverSettings
from .errors import ConfigError, NeutralityViolated, SspnpError
from .model import ChannelSystem, FixedChargeProfile, Species

__all__ = ["ExperimentConfig", "parse_config", "load_config"]

_KV_SECTIONS = {"system", "command", "solver", "output"}
_TABLE_SECTIONS = {"species", "fixed_charge"}
_COMMAND_TYPES = {"solve", "sweep", "trace", "turning-points", "phase-diagram"}


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    system: ChannelSystem
    command: dict
    solver: SolverSettings
    output: dict
    command_line: int  # line number of the [command] section, for errors

    @property
    def command_type(self) -> str:
        return self.command["type"]

    @property
    def prefix(self) -> str:
        return self.output.get("prefix", "run")


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_config(handle.read())


def parse_config(text: str) -> ExperimentConfig:
    sections, table_rows, section_lines = _split_sections(text)

    system = _build_system(sections, table_rows, section_lines)
    command = _build_command(sections, section_lines)
    solver = _build_solver(sections, section_lines)
    output = sections.get("output", {})
    out = dict(output)
    if "svg" in out:
        out["svg"] = _parse_bool(out["svg"], section_lines.get("output", 0))
    return ExperimentConfig(
        system=system,
        command=command,
        solver=solver,
        output=out,
        command_line=section_lines.get("command", 0),
    )


def _split_sections(text: str):
    sections: dict = {}
    table_rows: dict = {}
    section_lines: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
            if current not in _KV_SECTIONS | _TABLE_SECTIONS:
                raise ConfigError(f"line {lineno}: unknown section [{current}]")
            if current in sections or current in table_rows:
                raise ConfigError(f"line {lineno}: duplicate section [{current}]")
            if current in _TABLE_SECTIONS:
                table_rows[current] = []
            else:
                sections[current] = {}
            section_lines[current] = lineno
            continue
        if current is None:
            raise ConfigError(f"line {lineno}: content before any [section]")
        if current in _TABLE_SECTIONS:
            try:
                table_rows[current].append(
                    ([float(tok) for tok in line.split()], lineno)
                )
            except ValueError:
                raise ConfigError(
                    f"line {lineno}: expected numeric columns in [{current}]"
                ) from None
        else:
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip().lower()
            if key in sections[current]:
                raise ConfigError(f"line {lineno}: duplicate key '{key}'")
            sections[current][key] = value.strip()
    return sections, table_rows, section_lines


def _require(sections, name, lineno_map):
    if name not in sections:
        raise ConfigError(f"missing required section [{name}]")
    return sections[name]


def _parse_float(value, lineno, key):
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: '{key}' is not a number: {value!r}") from None


def _parse_bool(value, lineno):
    lowered = value.lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"line {lineno}: expected a boolean, got {value!r}")


def _build_system(sections, table_rows, section_lines) -> ChannelSystem:
    sys_kv = _require(sections, "system", section_lines)
    sys_line = section_lines["system"]
    if "kappa" not in sys_kv:
        raise ConfigError(f"line {sys_line}: [system] needs 'kappa'")
    kappa = _parse_float(sys_kv["kappa"], sys_line, "kappa")
    sigma = _parse_float(sys_kv.get("sigma", "1.0"), sys_line, "sigma")

    if "species" not in table_rows:
        raise ConfigError("missing required section [species]")
    species = []
    for row, lineno in table_rows["species"]:
        if len(row) != 3:
            raise ConfigError(
                f"line {lineno}: species rows need 3 columns (z, c_left, c_right)"
            )
        z, c_left, c_right = row
        if z != int(z):
            raise ConfigError(f"line {lineno}: valence must be an integer, got {z}")
        try:
            species.append(Species(int(z), c_left, c_right))
        except SspnpError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from exc

    if "fixed_charge" not in table_rows:
        raise ConfigError("missing required section [fixed_charge]")
    lengths, plateaus = [], []
    first_fc_line = None
    for row, lineno in table_rows["fixed_charge"]:
        if first_fc_line is None:
            first_fc_line = lineno
        if len(row) != 2:
            raise ConfigError(
                f"line {lineno}: fixed_charge rows need 2 columns (length, rho)"
            )
        lengths.append(row[0])
        plateaus.append(row[1])
    try:
        profile = FixedChargeProfile(tuple(lengths), tuple(plateaus), sigma)
    except SspnpError as exc:
        raise ConfigError(f"line {first_fc_line}: {exc}") from exc

    try:
        return ChannelSystem(kappa=kappa, species=tuple(species), profile=profile)
    except NeutralityViolated as exc:
        raise ConfigError(f"line {section_lines['species']}: {exc}") from exc
    except SspnpError as exc:
        raise ConfigError(f"line {sys_line}: {exc}") from exc


_COMMAND_FLOAT_KEYS = {
    "v", "i", "c_b", "v_start", "v_end", "cb_start", "cb_end", "i_min", "i_max",
    "dv_target", "v_stop", "initial_step", "min_step", "max_step",
}
_COMMAND_LIST_KEYS = {"sigmas", "kappas"}
_COMMAND_STR_KEYS = {"type", "family", "direction"}
_COMMAND_INT_KEYS = {"pair_first", "pair_second"}


def _build_command(sections, section_lines) -> dict:
    kv = _require(sections, "command", section_lines)
    lineno = section_lines["command"]
    if "type" not in kv:
        raise ConfigError(f"line {lineno}: [command] needs 'type'")
    ctype = kv["type"].lower()
    if ctype not in _COMMAND_TYPES:
        raise ConfigError(
            f"line {lineno}: unknown command type {ctype!r} "
            f"(one of {sorted(_COMMAND_TYPES)})"
        )
    out = {"type": ctype}
    for key, value in kv.items():
        if key == "type":
            continue
        if key in _COMMAND_FLOAT_KEYS:
            out[key] = _parse_float(value, lineno, key)
        elif key in _COMMAND_LIST_KEYS:
            try:
                out[key] = [float(tok) for tok in value.split()]
            except ValueError:
                raise ConfigError(
                    f"line {lineno}: '{key}' must be a space-separated number list"
                ) from None
        elif key in _COMMAND_INT_KEYS:
            out[key] = int(_parse_float(value, lineno, key))
        elif key in _COMMAND_STR_KEYS:
            out[key] = value
        else:
            raise ConfigError(f"line {lineno}: unknown [command] key '{key}'")
    return out


def _build_solver(sections, section_lines) -> SolverSettings:
    kv = sections.get("solver", {})
    lineno = section_lines.get("solver", 0)
    kwargs = {}
    for key, value in kv.items():
        if key == "abs_tol":
            kwargs["abs_tol"] = _parse_float(value, lineno, key)
        elif key == "max_newton_iters":
            kwargs["max_newton_iters"] = int(_parse_float(value, lineno, key))
        elif key == "max_mesh_points":
            kwargs["max_mesh_points"] = int(_parse_float(value, lineno, key))
        elif key == "damping_min":
            kwargs["damping_min"] = _parse_float(value, lineno, key)
        else:
            raise ConfigError(f"line {lineno}: unknown [solver] key '{key}'")
    try:
        return SolverSettings(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"line {lineno}: {exc}") from exc
