"""Line-oriented run configuration.

One ``key = value`` per line, ``#`` starts a comment, keys are dotted
(``net.d``, ``opt.alpha``). A bare key such as ``d`` is accepted when it names
exactly one dotted key. Unknown keys are errors.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def _int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _str_list(text: str) -> list[str]:
    return [t for t in text.replace(",", " ").split()]


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _optional_int(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


# key -> (parser, default)
SCHEMA: dict[str, tuple] = {
    "net.variant": (str, "frg"),
    "net.d": (int, 4),
    "net.w": (int, 100),
    "net.sigma": (_optional_float, None),
    "net.beta": (float, 4.0),
    "net.epsilon": (float, 0.0),
    "net.mu": (float, 0.5),
    "data.kind": (str, "experiment1"),
    "data.n": (int, 50),
    "data.d_in": (int, 10),
    "data.path": (str, ""),
    "data.images": (str, ""),
    "data.labels": (str, ""),
    "data.class_a": (int, 4),
    "data.class_b": (int, 7),
    "data.limit": (int, 100),
    "data.test_fraction": (float, 0.25),
    "data.separation": (float, 2.0),
    "opt.kind": (str, "sgd"),
    "opt.alpha": (_optional_float, None),
    "opt.alpha_factor": (float, 0.1),
    "opt.steps": (int, 100),
    "opt.snapshot_every": (int, 10),
    "opt.batch_size": (_optional_int, None),
    "opt.decay": (float, 0.9),
    "sweep.depths": (_int_list, [2, 4, 8]),
    "sweep.widths": (_int_list, [25, 500]),
    "nu.kinds": (_str_list, ["K", "M"]),
    "gates.tau_active": (_optional_float, None),
    "gates.tau_sensitive": (_optional_float, None),
    "conv.d_in": (int, 3),
    "conv.kernel": (int, 2),
    "conv.layers": (int, 2),
    "conv.gating": (str, "galu"),
    "conv.draws": (int, 500),
    "conv.sigma": (float, 1.0),
    "mc.entry_i": (int, 0),
    "mc.entry_j": (int, 1),
    "check.grid": (str, "tiny"),
    "train.mode": (str, "single"),
}


def _resolve_key(key: str) -> str:
    key = key.strip()
    if key in SCHEMA:
        return key
    matches = [k for k in SCHEMA if k.split(".")[-1] == key]
    if len(matches) == 1:
        return matches[0]
    if matches:
        raise ConfigError(f"key {key!r} is ambiguous; use one of {matches}")
    raise ConfigError(f"unknown config key {key!r}")


def parse_assignment(line: str, where: str = "") -> tuple[str, object]:
    if "=" not in line:
        raise ConfigError(f"{where}expected 'key = value', got {line.strip()!r}")
    key, value = line.split("=", 1)
    key = _resolve_key(key)
    parser = SCHEMA[key][0]
    try:
        return key, parser(value.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}bad value for {key}: {exc}") from None


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, value = parse_assignment(line, f"{source}:{lineno}: ")
        out[key] = value
    return out


def load_settings(path=None, overrides: list[str] = ()) -> dict:
    """Defaults, then the file, then ``--set`` overrides (last one wins)."""
    settings = {k: default for k, (_, default) in SCHEMA.items()}
    if path:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} does not exist")
        settings.update(parse_config_text(p.read_text(), str(p)))
    for item in overrides:
        key, value = parse_assignment(item, "--set: ")
        settings[key] = value
    return settings


def format_settings(settings: dict) -> str:
    """Inverse of :func:`parse_config_text` for the keys in ``settings``."""
    lines = []
    for key in sorted(settings):
        value = settings[key]
        if isinstance(value, list):
            text = " ".join(str(v) for v in value)
        elif value is None:
            text = "auto"
        else:
            text = str(value)
        lines.append(f"{key} = {text}")
    return "\n".join(lines) + "\n"
