"""
Config Manager
==============

Reads plain-text `section.field = value` files into a RunConfig.
Follows SRP: Only handles configuration parsing, typing and precedence.

Precedence: dataclass defaults < config file < CLI overrides. The master
seed additionally falls back to the DSA_SEED environment variable when no
--seed flag is given.
"""

import logging
import os
import re
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union, get_args, get_origin, get_type_hints

from core.exceptions import ConfigError
from core.run_config import SECTION_TYPES, RunConfig
from core.settings import SEED_ENV_VAR

logger = logging.getLogger(__name__)

_TRUE = {"true", "1", "yes", "on"}
_FALSE = {"false", "0", "no", "off"}
_NONE = {"none", "null", ""}


class ConfigManager:
    """
    Manager responsible for building a RunConfig.

    Follows SRP: Only handles configuration loading and validation.
    """

    def __init__(self):
        self._hints = {name: get_type_hints(cls) for name, cls in SECTION_TYPES.items()}
        self._settable = RunConfig().settable_keys()

    # ------------------------------------------------------------------
    # Parsing
    # ------------------------------------------------------------------

    def parse_lines(self, lines: Iterable[str], source: str = "<config>") -> Dict[str, str]:
        """
        Parse key=value lines.

        Args:
            lines: Raw text lines
            source: Name used in error messages

        Returns:
            Ordered mapping of `section.field` to raw value text
        """
        values: Dict[str, str] = {}
        for line_num, raw in enumerate(lines, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{line_num}: expected 'section.field = value', got {raw.strip()!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            self._check_key(key, f"{source}:{line_num}")
            values[key] = value
        return values

    def parse_file(self, path: Union[str, Path]) -> Dict[str, str]:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        return self.parse_lines(path.read_text(encoding="utf-8").splitlines(), str(path))

    def parse_overrides(self, overrides: Iterable[str]) -> Dict[str, str]:
        """Parse `--set section.field=value` items."""
        return self.parse_lines(list(overrides), "--set")

    def _check_key(self, key: str, where: str) -> None:
        section, _, name = key.partition(".")
        if section not in self._settable:
            raise ConfigError(f"{where}: unknown section '{section}' in key '{key}'")
        if name not in self._settable[section]:
            raise ConfigError(f"{where}: unknown key '{key}'")

    # ------------------------------------------------------------------
    # Typing
    # ------------------------------------------------------------------

    def coerce(self, key: str, raw: str) -> Any:
        """
        Convert a raw value to the annotated type of its field.

        Args:
            key: `section.field`
            raw: Raw text

        Returns:
            Typed value
        """
        section, _, name = key.partition(".")
        hint = self._hints[section][name]
        try:
            return _coerce(hint, raw.strip())
        except (ValueError, TypeError) as e:
            raise ConfigError(f"bad value for {key}: {raw!r} ({e})") from None

    # ------------------------------------------------------------------
    # Building
    # ------------------------------------------------------------------

    def build(self, values: Dict[str, str]) -> RunConfig:
        """Build and validate a resolved RunConfig from raw values."""
        by_section: Dict[str, Dict[str, Any]] = {name: {} for name in SECTION_TYPES}
        for key, raw in values.items():
            self._check_key(key, "config")
            section, _, name = key.partition(".")
            by_section[section][name] = self.coerce(key, raw)
        sections = {name: SECTION_TYPES[name](**kwargs) for name, kwargs in by_section.items()}
        return RunConfig(**sections).resolved()

    def load(
        self,
        path: Optional[Union[str, Path]] = None,
        overrides: Optional[Dict[str, str]] = None,
        env: Optional[Dict[str, str]] = None,
    ) -> RunConfig:
        """
        Load configuration with full precedence.

        Args:
            path: Optional config file
            overrides: CLI-level `section.field` -> raw value mapping
            env: Environment (default: os.environ)

        Returns:
            Validated, resolved RunConfig
        """
        env = os.environ if env is None else env
        values: Dict[str, str] = {}
        if path is not None:
            values.update(self.parse_file(path))
            logger.debug("Loaded %d config keys from %s", len(values), path)
        overrides = dict(overrides or {})
        if "run.seed" not in overrides and env.get(SEED_ENV_VAR):
            values["run.seed"] = env[SEED_ENV_VAR]
        values.update(overrides)
        return self.build(values)

    def dump(self, cfg: RunConfig) -> str:
        """Serialize every settable key of a RunConfig as key=value text."""
        lines: List[str] = []
        for section, names in self._settable.items():
            obj = getattr(cfg, section)
            for name in names:
                lines.append(f"{section}.{name} = {_format(getattr(obj, name))}")
        return "\n".join(lines) + "\n"


def _coerce(hint: Any, raw: str) -> Any:
    origin = get_origin(hint)
    if origin is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        if raw.lower() in _NONE:
            return None
        return _coerce(args[0], raw)
    if origin in (tuple, Tuple):
        args = get_args(hint)
        if len(args) == 2 and args[1] is Ellipsis:
            items = [item.strip() for item in raw.split(",") if item.strip()]
            return tuple(_coerce_item(args[0], item) for item in items)
        items = [item.strip() for item in raw.split(",")]
        if len(items) != len(args):
            raise ValueError(f"expected {len(args)} comma-separated values")
        return tuple(_coerce(a, item) for a, item in zip(args, items))
    if hint is bool:
        lowered = raw.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ValueError("expected a boolean")
    if hint is int:
        return int(raw)
    if hint is float:
        return float(raw)
    if hint is str:
        return raw
    raise TypeError(f"unsupported config type {hint}")


def _coerce_item(hint: Any, item: str) -> Any:
    """One element of a variable-length tuple; nested pairs use ':' '>' or '@'."""
    if get_origin(hint) in (tuple, Tuple):
        parts = [p.strip() for p in re.split(r"[:>@]", item)]
        args = get_args(hint)
        if len(parts) != len(args):
            raise ValueError(f"'{item}' does not have {len(args)} parts")
        return tuple(_coerce(a, p) for a, p in zip(args, parts))
    return _coerce(hint, item)


def _format(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        if value and isinstance(value[0], tuple):
            return ", ".join(_format_pair(v) for v in value)
        return ", ".join(str(v) for v in value)
    return str(value)


def _format_pair(pair: Tuple) -> str:
    if len(pair) == 3:
        return f"{pair[0]}>{pair[1]}@{pair[2]}"
    return f"{pair[0]}>{pair[1]}"
