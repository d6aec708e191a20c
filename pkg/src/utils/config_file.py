"""Flat ``key=value`` config files.

One entry per line, ``#`` starts a comment, blank lines are ignored. Dotted
keys (``model.d=5``) address a section or a nested field. List values are
comma separated and split by the ``CommaList`` annotation on the model side.
"""

import logging
from pathlib import Path
from typing import Annotated, Any, TypeVar

from pydantic import BaseModel, BeforeValidator, ValidationError

from src.errors import ConfigError

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def split_commas(value: Any) -> Any:
    if isinstance(value, str):
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


CommaList = Annotated[list, BeforeValidator(split_commas)]
IntList = Annotated[list[int], BeforeValidator(split_commas)]
FloatList = Annotated[list[float], BeforeValidator(split_commas)]
StrList = Annotated[list[str], BeforeValidator(split_commas)]


def parse_lines(lines: list[str]) -> tuple[dict[str, str], dict[str, int]]:
    """Parse config lines into ``{key: raw value}`` plus each key's line number."""
    values: dict[str, str] = {}
    line_of: dict[str, int] = {}
    for number, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"expected 'key=value', got '{text}'", line=number)
        key, value = (part.strip() for part in text.split("=", 1))
        if not key:
            raise ConfigError("empty key", line=number)
        if key in values:
            raise ConfigError(f"duplicate key (first set on line {line_of[key]})", line=number, key=key)
        values[key] = value
        line_of[key] = number
    return values, line_of


def read_config_file(path: str | Path) -> tuple[dict[str, str], dict[str, int]]:
    """Read a config file from disk."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    logger.debug(f"Reading config file {path}")
    return parse_lines(path.read_text(encoding="utf-8").splitlines())


def nest(flat: dict[str, str]) -> dict[str, Any]:
    """Turn dotted keys into nested dictionaries."""
    tree: dict[str, Any] = {}
    for key, value in flat.items():
        node = tree
        parts = key.split(".")
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError("key is both a value and a section", key=key)
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError("key is both a value and a section", key=key)
        node[parts[-1]] = value
    return tree


def build_model(model_cls: type[ModelT], values: dict[str, Any], line_of: dict[str, int] | None = None,
                prefix: str = "") -> ModelT:
    """Validate ``values`` against ``model_cls`` and report the first bad key."""
    try:
        return model_cls.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        key = f"{prefix}{loc}" if loc else prefix.rstrip(".") or None
        line = (line_of or {}).get(key) if key else None
        if first["type"] == "missing":
            message = "required key is missing"
        elif first["type"] == "extra_forbidden":
            message = "unknown key"
        else:
            message = first["msg"]
        raise ConfigError(message, line=line, key=key) from e


def route_sections(flat: dict[str, str], sections: dict[str, type[BaseModel]],
                   passthrough: set[str] | None = None) -> dict[str, dict[str, str]]:
    """Distribute flat keys over named sections.

    ``section.key`` goes to that section. An unprefixed key goes to the only
    section declaring it; keys declared by several sections must be prefixed.
    Keys in ``passthrough`` are returned under the empty section name.
    """
    routed: dict[str, dict[str, str]] = {name: {} for name in sections}
    routed[""] = {}
    passthrough = passthrough or set()
    for key, value in flat.items():
        head, _, rest = key.partition(".")
        if rest and head in sections:
            routed[head][rest] = value
            continue
        if key in passthrough or head in passthrough:
            routed[""][key] = value
            continue
        owners = [name for name, cls in sections.items() if head in cls.model_fields]
        if not owners:
            raise ConfigError("unknown key", key=key)
        if len(owners) > 1:
            raise ConfigError(f"ambiguous key, prefix it with one of {owners}", key=key)
        routed[owners[0]][key] = value
    return routed
