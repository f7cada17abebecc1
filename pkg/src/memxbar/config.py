"""Layered key-value configuration files.

Format: one `name = value` per line, `#` starts a comment, blank lines ignored.
Later layers override earlier ones; `--set key=value` overrides everything.
Every key must be claimed by some consumer; leftovers are reported with the
file and line they came from.
"""
from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

_REQUIRED = object()


@dataclass
class Entry:
    value: str
    path: str | None
    line: int | None


def parse_kv_file(path) -> dict[str, Entry]:
    entries: dict[str, Entry] = {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(str(exc), path=str(path)) from exc
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError("expected `name = value`", path=str(path), line=lineno)
        key, _, value = text.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError("empty key", path=str(path), line=lineno)
        if not value:
            raise ConfigError(f"empty value for key {key!r}", path=str(path), line=lineno)
        entries[key] = Entry(value, str(path), lineno)
    return entries


class Config:
    """Merged view over layered entries with claim tracking."""

    def __init__(self, entries: dict[str, Entry] | None = None):
        self.entries: dict[str, Entry] = dict(entries or {})
        self._claimed: set[str] = set()

    @classmethod
    def from_files(cls, *paths) -> "Config":
        cfg = cls()
        for p in paths:
            cfg.entries.update(parse_kv_file(p))
        return cfg

    def overlay(self, pairs) -> None:
        """Apply `key=value` override strings (highest precedence)."""
        for pair in pairs:
            if "=" not in pair:
                raise ConfigError(f"override {pair!r} is not of the form key=value")
            key, _, value = pair.partition("=")
            key = key.strip()
            value = value.strip()
            if not key or not value:
                raise ConfigError(f"override {pair!r} has an empty key or value")
            self.entries[key] = Entry(value, "<--set>", None)

    def _raw(self, key, default):
        if key in self.entries:
            self._claimed.add(key)
            return self.entries[key]
        if default is _REQUIRED:
            raise ConfigError(f"missing required key {key!r}")
        return None

    def get_str(self, key, default=_REQUIRED):
        e = self._raw(key, default)
        return default if e is None else e.value

    def get_float(self, key, default=_REQUIRED):
        e = self._raw(key, default)
        if e is None:
            return default
        try:
            return float(e.value)
        except ValueError:
            raise ConfigError(f"key {key!r}: {e.value!r} is not a number",
                              path=e.path, line=e.line) from None

    def get_int(self, key, default=_REQUIRED):
        e = self._raw(key, default)
        if e is None:
            return default
        try:
            return int(e.value)
        except ValueError:
            raise ConfigError(f"key {key!r}: {e.value!r} is not an integer",
                              path=e.path, line=e.line) from None

    def get_bool(self, key, default=_REQUIRED):
        e = self._raw(key, default)
        if e is None:
            return default
        v = e.value.lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"key {key!r}: {e.value!r} is not a boolean",
                          path=e.path, line=e.line)

    def keys_with_prefix(self, prefix: str):
        return [k for k in self.entries if k.startswith(prefix)]

    def unclaimed(self) -> list[tuple[str, Entry]]:
        return [(k, e) for k, e in self.entries.items() if k not in self._claimed]

    def reject_unclaimed(self) -> None:
        left = self.unclaimed()
        if left:
            key, e = left[0]
            raise ConfigError(f"unknown key {key!r}", path=e.path, line=e.line)

    def fingerprint(self) -> str:
        """Stable hash of the merged key-value content (layering already applied)."""
        import hashlib

        blob = "\n".join(f"{k}={self.entries[k].value}" for k in sorted(self.entries))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]
