"""Flat key-value configuration files.

One `key = value` pair per line, `#` starts a comment, blank lines are
skipped. Nested structure is spelled with dotted keys (`movement.speed`);
there are no sections, quoting rules, or escapes, so any language can
parse these files with a line split. Values stay strings; callers coerce
with the typed getters, which name the key and the offending text in
every error.
"""

from __future__ import annotations

from pathlib import Path
from typing import Iterator, TextIO

from .errors import ConfigError

__all__ = ["parse_config", "read_config", "ConfigView"]

_TRUE_TOKENS = ("1", "true", "yes", "on")
_FALSE_TOKENS = ("0", "false", "no", "off")


def parse_config(lines: Iterator[str] | TextIO, source: str = "<config>",
                 ) -> dict[str, str]:
    """Parse `key = value` lines into an ordered mapping.

    Duplicate keys are rejected rather than last-one-wins so a typo that
    shadows an earlier setting cannot pass silently.
    """
    out: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(
                f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if any(part == "" for part in key.split(".")):
            raise ConfigError(
                f"{source}:{lineno}: malformed dotted key {key!r}")
        if " " in key or "\t" in key:
            raise ConfigError(
                f"{source}:{lineno}: key {key!r} contains whitespace")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_config(path: str | Path) -> "ConfigView":
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    return ConfigView(parse_config(iter(text.splitlines()), str(path)),
                      source=str(path))


class ConfigView:
    """Typed, tracked access to a parsed config mapping.

    Every getter records the key it served so `unused_keys` can flag
    misspelled settings that would otherwise be ignored silently.
    """

    def __init__(self, mapping: dict[str, str], source: str = "<config>",
                 _on_use=None):
        self._mapping = dict(mapping)
        self._source = source
        self._used: set[str] = set()
        self._on_use = _on_use

    def __contains__(self, key: str) -> bool:
        return key in self._mapping

    def keys(self) -> list[str]:
        return list(self._mapping)

    def as_dict(self) -> dict[str, str]:
        return dict(self._mapping)

    def unused_keys(self) -> list[str]:
        return [k for k in self._mapping if k not in self._used]

    def _raw(self, key: str, default):
        if key in self._mapping:
            self._used.add(key)
            if self._on_use is not None:
                self._on_use(key)
            return self._mapping[key]
        if default is not _REQUIRED:
            return default
        raise ConfigError(f"{self._source}: missing required key {key!r}")

    def get_str(self, key: str, default=None) -> str | None:
        value = self._raw(key, default)
        return value if value is None else str(value)

    def require_str(self, key: str) -> str:
        return str(self._raw(key, _REQUIRED))

    def get_float(self, key: str, default=None) -> float | None:
        value = self._raw(key, default)
        if value is None or isinstance(value, float):
            return value
        try:
            return float(value)
        except ValueError as e:
            raise ConfigError(
                f"{self._source}: key {key!r} must be a number, "
                f"got {value!r}") from e

    def require_float(self, key: str) -> float:
        self._raw(key, _REQUIRED)
        return float(self.get_float(key))

    def get_int(self, key: str, default=None) -> int | None:
        value = self._raw(key, default)
        if value is None or isinstance(value, int):
            return value
        try:
            return int(value)
        except ValueError as e:
            raise ConfigError(
                f"{self._source}: key {key!r} must be an integer, "
                f"got {value!r}") from e

    def require_int(self, key: str) -> int:
        self._raw(key, _REQUIRED)
        return int(self.get_int(key))

    def get_bool(self, key: str, default=None) -> bool | None:
        value = self._raw(key, default)
        if value is None or isinstance(value, bool):
            return value
        token = str(value).strip().lower()
        if token in _TRUE_TOKENS:
            return True
        if token in _FALSE_TOKENS:
            return False
        raise ConfigError(
            f"{self._source}: key {key!r} must be one of "
            f"{_TRUE_TOKENS + _FALSE_TOKENS}, got {value!r}")

    def subview(self, prefix: str) -> "ConfigView":
        """Keys under `prefix.` with the prefix stripped.

        Reads through the child count as usage of the parent key, so a
        parent's unused_keys stays accurate after delegating a section.
        """
        dot = prefix.rstrip(".") + "."

        def mark(child_key: str) -> None:
            self._used.add(dot + child_key)
            if self._on_use is not None:
                self._on_use(dot + child_key)

        return ConfigView({k[len(dot):]: v for k, v in self._mapping.items()
                           if k.startswith(dot)},
                          source=f"{self._source}[{prefix}]", _on_use=mark)


_REQUIRED = object()
