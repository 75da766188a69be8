######
# Project       : nmpec
# File          : config.py
# license       : Apache 2.0
# Description   :
# Dictionary backed configuration objects with YAML / JSON persistence and
# template based type and range checking.
######
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml
from ascii_colors import ASCIIColors

from nmpec.errors import ConfigError

_CASTS = {
    "int": int,
    "float": float,
    "str": str,
    "bool": bool,
    "list": list,
    "dict": dict,
    "any": lambda value: value,
}


class ConfigTemplate:
    """Typed entries of one configuration block, checked by `validate`.

    Entries are usually declared with chained `add_entry` calls; a list of entry
    dictionaries with at least name, value and type is accepted as well.
    """

    def __init__(self, entries: Optional[List[Dict[str, Any]]] = None) -> None:
        self.template: List[Dict[str, Any]] = []
        for i, entry in enumerate(entries or []):
            missing = [key for key in ("name", "value", "type") if not isinstance(entry, dict) or key not in entry]
            if missing:
                raise ConfigError(f"template entry lacks {', '.join(missing)}", f"template[{i}]")
            if entry["type"] not in _CASTS:
                raise ConfigError(f"unknown entry type {entry['type']!r}", f"template[{i}]")
            self.add_entry(entry["name"], entry["value"], entry["type"], entry.get("min"), entry.get("max"),
                           entry.get("help", ""), entry.get("nullable", False), entry.get("choices"))

    def add_entry(self, entry_name, entry_value, entry_type, entry_min=None, entry_max=None, entry_help="",
                  nullable=False, choices=None):
        """Declares an entry; returns the template so declarations chain.

        entry_type is one of int, float, str, bool, list, dict, any. entry_min and
        entry_max bound numbers inclusively, choices restricts to a fixed set and
        nullable lets null through unchecked.
        """
        self.template.append({
            "name": entry_name,
            "value": entry_value,
            "type": entry_type,
            "min": entry_min,
            "max": entry_max,
            "help": entry_help,
            "nullable": nullable,
            "choices": choices,
        })
        return self

    def __getitem__(self, key):
        for entry in self.template:
            if entry["name"] == key:
                return entry
        return None

    def __contains__(self, item):
        return any(entry["name"] == item for entry in self.template)

    @property
    def names(self) -> List[str]:
        return [entry["name"] for entry in self.template]

    def defaults(self) -> Dict[str, Any]:
        return {entry["name"]: entry["value"] for entry in self.template}

    def _cast(self, entry: dict, value: Any, pointer: str) -> Any:
        entry_type = entry["type"]
        if entry_type not in _CASTS:
            raise ConfigError(f"unknown entry type {entry_type!r}", pointer)
        if entry_type == "bool":
            if not isinstance(value, bool):
                raise ConfigError(f"expected a boolean, got {value!r}", pointer)
            return value
        if entry_type in ("int", "float") and isinstance(value, bool):
            raise ConfigError(f"expected a number, got {value!r}", pointer)
        if entry_type == "int" and isinstance(value, float):
            if not value.is_integer():
                raise ConfigError(f"expected an integer, got {value!r}", pointer)
        if entry_type in ("list", "dict") and not isinstance(value, _CASTS[entry_type]):
            raise ConfigError(f"expected a {entry_type}, got {type(value).__name__}", pointer)
        try:
            return _CASTS[entry_type](value)
        except (TypeError, ValueError):
            raise ConfigError(f"expected {entry_type}, got {value!r}", pointer)

    def validate(self, block: Optional[dict], prefix: str = "") -> Dict[str, Any]:
        """
        Type-checks and range-checks a configuration block.

        Missing entries take the template default; out-of-range values are rejected.

        Args:
            block (dict): the raw block as loaded from the file.
            prefix (str): dotted path of the block, used in error pointers.

        Returns:
            dict: the typed block, including defaults.

        Raises:
            ConfigError: unknown keys, wrong types, values out of range or not in choices.
        """
        block = {} if block is None else block
        if not isinstance(block, dict):
            raise ConfigError("expected a mapping", prefix or None)
        unknown = sorted(set(block) - set(self.names))
        if unknown:
            raise ConfigError(f"unknown entries {', '.join(unknown)}", prefix or None)
        out = {}
        for entry in self.template:
            name = entry["name"]
            pointer = f"{prefix}.{name}" if prefix else name
            value = block.get(name, entry["value"])
            if value is None:
                if not entry.get("nullable") and entry["value"] is not None:
                    raise ConfigError("must not be null", pointer)
                out[name] = None
                continue
            value = self._cast(entry, value, pointer)
            entry_min, entry_max = entry.get("min"), entry.get("max")
            if entry_min is not None and value < entry_min:
                raise ConfigError(f"{value} is below the minimum {entry_min}", pointer)
            if entry_max is not None and value > entry_max:
                raise ConfigError(f"{value} is above the maximum {entry_max}", pointer)
            choices = entry.get("choices")
            if choices is not None and value not in choices:
                raise ConfigError(f"{value!r} is not one of {', '.join(map(str, choices))}", pointer)
            out[name] = value
        return out


class BaseConfig:
    """Dictionary document with attribute access, read from and written to disk.

    Files ending in ``.json`` are JSON, everything else YAML. Names listed in
    exceptional_keys are real attributes of the object instead of document keys.
    """

    def __init__(self, exceptional_keys: list = None, config: dict = None, file_path: Union[Path, str] = None):
        self.exceptional_keys   = list(exceptional_keys or [])
        self.config             = config
        self.file_path          = Path(file_path) if file_path is not None else None

    def to_dict(self):
        return self.config

    def __getitem__(self, key):
        if self.config is None:
            raise ValueError("No configuration loaded.")
        return self.config[key]

    def __getattr__(self, key):
        if key == "exceptional_keys":
            return super().__getattribute__(key)
        if key in self.exceptional_keys + ["config", "file_path"] or key.startswith("__"):
            return super().__getattribute__(key)
        if self.config is None:
            raise ValueError("No configuration loaded.")
        try:
            return self.config[key]
        except KeyError:
            raise AttributeError(key)

    def __setattr__(self, key, value):
        if key == "exceptional_keys":
            return super().__setattr__(key, value)
        if key in self.exceptional_keys + ["config", "file_path"] or key.startswith("__"):
            super().__setattr__(key, value)
        else:
            if self.config is None:
                raise ValueError("No configuration loaded.")
            self.config[key] = value

    def __setitem__(self, key, value):
        if self.config is None:
            raise ValueError("No configuration loaded.")
        self.config[key] = value

    def __contains__(self, item):
        if self.config is None:
            raise ValueError("No configuration loaded.")
        return item in self.config

    def load_config(self, file_path: Union[Path, str] = None):
        """
        Loads the configuration from a YAML or JSON file.

        Args:
            file_path (str or Path, optional): The path to the file. If not provided, uses the previously set file path.

        Raises:
            ValueError: If no configuration file path is specified.
            FileNotFoundError: If the specified file path does not exist.
            ConfigError: If the file cannot be parsed; the message carries the line and column.
        """
        if file_path is None:
            if self.file_path is None:
                raise ValueError("No configuration file path specified.")
            file_path = self.file_path

        file_path = Path(file_path)
        if not file_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {file_path}")

        with open(file_path, "r", encoding="utf-8") as stream:
            text = stream.read()
        try:
            if file_path.suffix.lower() == ".json":
                data = json.loads(text)
            else:
                data = yaml.safe_load(text)
        except json.JSONDecodeError as ex:
            raise ConfigError(f"invalid JSON: {ex.msg}", f"{file_path.name}:{ex.lineno}:{ex.colno}")
        except yaml.YAMLError as ex:
            mark = getattr(ex, "problem_mark", None)
            where = f"{file_path.name}:{mark.line + 1}:{mark.column + 1}" if mark else file_path.name
            raise ConfigError(f"invalid YAML: {getattr(ex, 'problem', ex)}", where)
        if not isinstance(data, dict):
            raise ConfigError("the document must be a mapping", file_path.name)
        self.config = data
        self.file_path = file_path

    def save_config(self, file_path=None):
        """
        Saves the configuration to a YAML or JSON file.

        Args:
            file_path (str or Path, optional): The path to the file. If not provided, uses the previously set file path.

        Raises:
            ValueError: If no configuration is loaded or no file path is specified.
        """
        if file_path is None:
            if self.file_path is None:
                raise ValueError("No configuration file path specified.")
            file_path = self.file_path

        if self.config is None:
            raise ValueError("No configuration loaded.")

        file_path = Path(file_path)
        file_path.parent.mkdir(parents=True, exist_ok=True)
        with open(file_path, "w", encoding="utf-8", newline="\n") as f:
            if file_path.suffix.lower() == ".json":
                json.dump(self.config, f, indent=2)
                f.write("\n")
            else:
                yaml.safe_dump(self.config, f, sort_keys=False)
        ASCIIColors.info(f"Configuration saved to {file_path}")
