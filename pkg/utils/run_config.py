import configparser
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

from bfbm.errors import UsageError
from bfbm.constants import HurstParams, make_hurst_params, params_from_alpha


def float_list(text) -> List[float]:
    """Parse '4,6,8' into [4.0, 6.0, 8.0]"""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected a comma-separated list of numbers, got {text!r}")


@dataclass(frozen=True)
class Option:
    """One command-line option of a subcommand

    Parameters:
    -----------
    name: long flag without dashes, e.g. 'steps-per-unit'
    type: converter applied to flag and config-file text
    default: value when neither flag nor config file sets it
    choices: allowed values, or None
    """
    name: str
    type: Callable[[Any], Any] = str
    default: Any = None
    help: str = ""
    choices: Optional[Sequence[Any]] = None
    flag: bool = False

    @property
    def dest(self) -> str:
        return self.name.replace("-", "_")


# Options shared by several subcommands
HURST_OPTIONS = [
    Option("H", float, None, "Hurst parameter in (1/2, 1)"),
    Option("alpha", float, None, "urn exponent alpha = H - 1/2 in (0, 1/2)"),
]
SEED_OPTION = Option("seed", int, None, "master seed (mandatory for stochastic subcommands)")

OUTPUT_FORMATS = ("csv", "json")


@dataclass
class RunConfig:
    """Resolved configuration of one subcommand invocation"""
    command: str
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    out: Optional[str] = None
    fmt: str = "csv"

    def __getitem__(self, key: str) -> Any:
        return self.params[key.replace("-", "_")]

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key.replace("-", "_"), default)

    def hurst(self) -> HurstParams:
        """HurstParams from exactly one of H / alpha"""
        H = self.params.get("H")
        alpha = self.params.get("alpha")
        if (H is None) == (alpha is None):
            raise UsageError("give exactly one of --H and --alpha")
        try:
            return make_hurst_params(H) if H is not None else params_from_alpha(alpha)
        except ValueError as e:
            raise UsageError(str(e))

    def header_config(self) -> Dict[str, Any]:
        """Everything that determines the output, including the format"""
        data = dict(self.params)
        data["format"] = self.fmt
        return data


def load_config_file(path: str) -> Dict[str, str]:
    """Read 'key = value' lines; keys may use '-' or '_'"""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as handle:
            parser.read_string("[lab]\n" + handle.read())
    except (OSError, configparser.Error) as e:
        raise UsageError(f"cannot read config file {path}: {e}")
    return {key.replace("-", "_"): value for key, value in parser["lab"].items()}


def _convert(option: Option, value: Any) -> Any:
    if value is None:
        return None
    if option.flag:
        if isinstance(value, bool):
            return value
        return str(value).strip().lower() in ("1", "true", "yes", "on")
    try:
        converted = option.type(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid value for --{option.name}: {value!r} ({e})")
    if option.choices is not None and converted not in option.choices:
        raise UsageError(f"--{option.name} must be one of {list(option.choices)}, got {converted!r}")
    return converted


def resolve_config(command: str, options: Sequence[Option], flags: Dict[str, Any],
                   file_values: Optional[Dict[str, str]] = None,
                   stochastic: Union[bool, Callable[[Dict[str, Any]], bool]] = False,
                   fmt: str = "csv", out: Optional[str] = None) -> RunConfig:
    """
    Merge defaults, config-file values and explicit flags (in increasing priority)

    Raises UsageError on unknown config keys, bad values, or a missing seed.
    """
    file_values = dict(file_values or {})
    known = {opt.dest for opt in options} | {"out", "format"}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")

    params: Dict[str, Any] = {}
    for opt in options:
        value = flags.get(opt.dest)
        if value is None or (opt.flag and value is False and opt.dest in file_values):
            value = file_values.get(opt.dest)
        if value is None:
            value = opt.default
        params[opt.dest] = _convert(opt, value)

    if out is None:
        out = file_values.get("out")
    fmt = file_values.get("format", fmt) if flags.get("format") is None else flags["format"]
    if fmt not in OUTPUT_FORMATS:
        raise UsageError(f"--format must be one of {list(OUTPUT_FORMATS)}, got {fmt!r}")

    seed = params.pop("seed", None)
    if callable(stochastic):
        stochastic = stochastic(params)
    if stochastic and seed is None:
        raise UsageError(f"{command} is stochastic and needs --seed")
    return RunConfig(command=command, params=params, seed=seed, out=out, fmt=fmt)


@dataclass(frozen=True)
class CommandSpec:
    """A subcommand as registered with the lab

    Parameters:
    -----------
    name: subcommand name on the command line
    description: one-line help text
    options: options beyond the global ones
    stochastic: whether a seed is mandatory, or a predicate on the resolved parameters
    default_format: csv or json
    callback: bound method taking a RunConfig and returning the exit code
    """
    name: str
    description: str
    options: Sequence[Option]
    stochastic: Union[bool, Callable[[Dict[str, Any]], bool]]
    default_format: str
    callback: Callable[[RunConfig], int]


def lab_command(name: str, description: str, options: Sequence[Option] = (),
                stochastic: Union[bool, Callable[[Dict[str, Any]], bool]] = False,
                default_format: str = "csv"):
    """Mark a cog method as a subcommand"""
    def decorator(func):
        func.__lab_command__ = dict(name=name, description=description, options=list(options),
                                    stochastic=stochastic, default_format=default_format)
        return func
    return decorator


class Cog:
    """Group of related subcommands; every module in commands/ registers one through setup(lab)"""

    def get_commands(self) -> List[CommandSpec]:
        specs = []
        for attr in sorted(dir(type(self))):
            meta = getattr(getattr(type(self), attr), "__lab_command__", None)
            if meta is not None:
                specs.append(CommandSpec(callback=getattr(self, attr), **meta))
        return specs
