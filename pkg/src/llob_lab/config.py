"""Flat key=value experiment configuration.

One experiment per file, no sections, no nesting: a manifest written
back in the same format diffs cleanly against the input.  Values are
typed by shape (int, float, bool, string) so numeric comparisons in
the runners never operate on text.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import ConfigError

_INT_RE = re.compile(r"[+-]?\d+$")
_BOOL = {"true": True, "false": False, "yes": True, "no": False}


def parse_value(text: str):
    s = text.strip()
    if _INT_RE.match(s):
        return int(s)
    low = s.lower()
    if low in _BOOL:
        return _BOOL[low]
    try:
        return float(s)
    except ValueError:
        return s


def format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def load_config(path) -> dict:
    """Read key = value lines; '#' starts a comment, blanks ignored."""
    out: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"{path}:{lineno}: expected key = value, got {raw!r}"
                )
            key, _, val = line.partition("=")
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{lineno}: empty key")
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = parse_value(val)
    return out


def parse_override(text: str):
    """Split one --set argument of the form key=value."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, _, val = text.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {text!r} has an empty key")
    return key, parse_value(val)


@dataclass
class ExperimentConfig:
    experiment: str
    params: dict
    seed: int = 0
    out_dir: str = "."
    unsafe: bool = False

    def manifest_lines(self):
        yield f"experiment = {self.experiment}"
        yield f"seed = {self.seed}"
        yield f"out_dir = {self.out_dir}"
        yield f"unsafe = {format_value(self.unsafe)}"
        for key in sorted(self.params):
            yield f"{key} = {format_value(self.params[key])}"


def resolve_config(experiment: str, defaults: dict, file_params: dict,
                   overrides: dict, seed: int | None, out_dir: str,
                   unsafe: bool) -> ExperimentConfig:
    """Layer defaults < file < command line; reject unknown keys."""
    params = dict(defaults)
    for source_name, source in (("config file", file_params),
                                ("command line", overrides)):
        for key, val in source.items():
            if key == "seed":
                if seed is None:
                    seed = int(val)
                continue
            if key not in params:
                known = ", ".join(sorted(params))
                raise ConfigError(
                    f"unknown key {key!r} from {source_name} for "
                    f"experiment {experiment!r}; known keys: {known}, seed"
                )
            params[key] = val
    return ExperimentConfig(experiment=experiment, params=params,
                            seed=0 if seed is None else int(seed),
                            out_dir=out_dir, unsafe=unsafe)
