"""Configuration: plain `key = value` files, presets, flag overrides.

Precedence, lowest to highest: built-in defaults, preset expansion,
config file keys, command-line flags. The preset itself is chosen
flags-over-file, then expanded before any explicit key is applied, so
an explicit `gossip_probability` always beats what the preset says.

Every key is validated on its own with a diagnostic naming the key and
the accepted range; cross-field rules (for example the forwarding ring
sitting inside the interaction range) are enforced by the parameter
dataclasses they feed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .territory import DisseminationParams

# Named tunings. "good" is the reference configuration; "bad" is the
# aggressive-flooding variant used to demonstrate traffic blowup.
PRESETS = {
    "good": {},
    "bad": {"gossip_probability": 0.6, "forwarding_threshold": 100.0},
}

_DISSEMINATION_KEYS = (
    "interaction_range",
    "forwarding_threshold",
    "gossip_probability",
    "geofilter_distance",
    "generation_probability",
    "ttl",
    "cache_capacity",
    "max_relays_per_step",
)


class ConfigError(ValueError):
    pass


def _parse_int(text: str) -> int:
    return int(text.strip(), 10)


def _parse_float(text: str) -> float:
    return float(text.strip())


def _parse_str(text: str) -> str:
    return text.strip()


def _parse_int_list(text: str) -> tuple:
    items = [p.strip() for p in text.split(",") if p.strip()]
    return tuple(int(p, 10) for p in items)


def _parse_str_list(text: str) -> tuple:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _prob(v):
    return 0.0 <= v <= 1.0


def _all_positive(vs):
    return len(vs) > 0 and all(v >= 1 for v in vs)


def _all_nonneg(vs):
    return all(v >= 0 for v in vs)


def _presets_known(vs):
    return len(vs) > 0 and all(v in PRESETS for v in vs)


def _mode_known(v):
    return v in ("auto", "inprocess", "process")


def _endpoint_ok(v):
    if v == "":
        return True
    host, sep, port = v.rpartition(":")
    return bool(sep and host) and port.isdigit()


# key -> (parser, validator, accepted-range text, default)
SCHEMA = {
    "ses": (_parse_int_list, _all_positive,
            "one or more integers >= 1, comma separated", (4000,)),
    "lps": (_parse_int_list, _all_positive,
            "one or more integers >= 1, comma separated", (1,)),
    "steps": (_parse_int, _positive, "integer >= 1", 900),
    "seed": (_parse_int, _nonneg, "integer >= 0", 1),
    "mode": (_parse_str, _mode_known, "auto, inprocess or process", "auto"),
    "preset": (_parse_str_list, _presets_known,
               "one or more of: " + ", ".join(sorted(PRESETS)), ("good",)),
    "interaction_range": (_parse_float, _positive, "number > 0", 250.0),
    "forwarding_threshold": (_parse_float, _nonneg,
                             "number >= 0, below interaction_range", 225.0),
    "gossip_probability": (_parse_float, _prob, "number in [0, 1]", 0.2),
    "geofilter_distance": (_parse_float, _positive, "number > 0", 1000.0),
    "generation_probability": (_parse_float, _prob, "number in [0, 1]",
                               0.001),
    "ttl": (_parse_int, _nonneg, "integer >= 0", 6),
    "cache_capacity": (_parse_int, _positive, "integer >= 1", 128),
    "max_relays_per_step": (_parse_int, _nonneg, "integer >= 0", 10),
    "spawn_at": (_parse_int_list, _all_nonneg,
                 "coarse steps, integers >= 0, comma separated", ()),
    "transfer_count": (_parse_int, _positive, "integer >= 1", 1),
    "substeps": (_parse_int, _positive, "integer >= 1", 3),
    "duration": (_parse_int, _positive, "integer >= 1", 3),
    "endpoint": (_parse_str, _endpoint_ok, "HOST:PORT, or empty for local",
                 ""),
    "repetitions": (_parse_int, _positive, "integer >= 1", 5),
    "out": (_parse_str, lambda v: True, "directory path", "results"),
    "barrier_timeout": (_parse_float, _positive, "number > 0 (seconds)",
                        60.0),
}


def parse_config_file(path: str) -> dict:
    """Read `key = value` lines into raw strings; `#` starts a comment."""
    raw = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ConfigError(
                    f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key = key.strip()
            if key not in SCHEMA:
                raise ConfigError(
                    f"{path}:{lineno}: unknown config key {key!r};"
                    f" known keys: {', '.join(sorted(SCHEMA))}")
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            raw[key] = value.strip()
    return raw


def _convert(key: str, text: str):
    parser, validator, accepted, _ = SCHEMA[key]
    try:
        value = parser(text)
    except (ValueError, TypeError):
        raise ConfigError(
            f"config key {key!r}: cannot parse {text!r};"
            f" accepted: {accepted}") from None
    if not validator(value):
        raise ConfigError(
            f"config key {key!r}: value {text!r} out of range;"
            f" accepted: {accepted}")
    return value


@dataclass(frozen=True)
class RunSettings:
    """Everything the front-end resolved, in typed form.

    ses, lps and preset stay lists so one settings object can describe
    either a single run (each must then have exactly one element) or a
    campaign sweep.
    """

    ses: tuple = SCHEMA["ses"][3]
    lps: tuple = SCHEMA["lps"][3]
    steps: int = SCHEMA["steps"][3]
    seed: int = SCHEMA["seed"][3]
    mode: str = SCHEMA["mode"][3]
    preset: tuple = SCHEMA["preset"][3]
    spawn_at: tuple = SCHEMA["spawn_at"][3]
    transfer_count: int = SCHEMA["transfer_count"][3]
    substeps: int = SCHEMA["substeps"][3]
    duration: int = SCHEMA["duration"][3]
    endpoint: str = SCHEMA["endpoint"][3]
    repetitions: int = SCHEMA["repetitions"][3]
    out: str = SCHEMA["out"][3]
    barrier_timeout: float = SCHEMA["barrier_timeout"][3]
    param_overrides: tuple = ()  # ((field, value), ...) beating the preset

    def single_run(self) -> tuple:
        """The (ses, lps, preset) of a non-campaign run."""
        for name in ("ses", "lps", "preset"):
            values = getattr(self, name)
            if len(values) != 1:
                raise ConfigError(
                    f"a single run needs exactly one {name!r} value,"
                    f" got {list(values)}")
        return self.ses[0], self.lps[0], self.preset[0]


def make_params(preset: str, overrides: Optional[dict] = None) -> DisseminationParams:
    """Defaults, then the preset's deltas, then explicit overrides."""
    if preset not in PRESETS:
        raise ConfigError(
            f"config key 'preset': value {preset!r} out of range; accepted:"
            f" one or more of: {', '.join(sorted(PRESETS))}")
    values = {key: SCHEMA[key][3] for key in _DISSEMINATION_KEYS}
    values.update(PRESETS[preset])
    for key, value in (overrides or {}).items():
        if key not in _DISSEMINATION_KEYS:
            raise ConfigError(f"not a dissemination parameter: {key!r}")
        values[key] = value
    try:
        return DisseminationParams(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def resolve_settings(file_values: Optional[dict] = None,
                     flag_values: Optional[dict] = None) -> RunSettings:
    """Merge config file values with flag overrides.

    Both mappings hold raw strings keyed by schema name (flags as the
    user typed them; None entries ignored); flags win on overlap.
    """
    file_values = dict(file_values or {})
    flags = {k: v for k, v in (flag_values or {}).items() if v is not None}
    for key in flags:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")

    typed = {key: _convert(key, text) for key, text in file_values.items()}
    typed.update({key: _convert(key, str(text)) for key, text in flags.items()})

    overrides = tuple(sorted(
        (key, typed.pop(key))
        for key in list(typed)
        if key in _DISSEMINATION_KEYS
    ))
    # validate the override set against every preset in play now, so a
    # bad combination fails at parse time rather than mid-campaign
    for preset in typed.get("preset", SCHEMA["preset"][3]):
        make_params(preset, dict(overrides))
    return RunSettings(param_overrides=overrides, **typed)


def load_settings(config_path: Optional[str] = None,
                  flag_values: Optional[dict] = None) -> RunSettings:
    file_values = parse_config_file(config_path) if config_path else {}
    return resolve_settings(file_values, flag_values)
