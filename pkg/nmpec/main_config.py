__author__ = "nmpec developers"
__license__ = "Apache 2.0"

import copy
import hashlib
import json
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from ascii_colors import ASCIIColors

from nmpec.bath import BathSpec, single_pole_family
from nmpec.config import BaseConfig, ConfigTemplate
from nmpec.errors import BathError, ConfigError, DimensionError, NmpecError
from nmpec.generator import SystemModel
from nmpec.helpers import complex_from_config
from nmpec.operators import MAX_QUBITS, parse_pauli_sum, pauli_operator, product_state
from nmpec.paths import nmpec_default_cfg_path
from nmpec.qem import RunConfig
from nmpec.types import HistoryMode, RunMode

CONFIG_VERSION = 1

MODEL_TEMPLATE = (ConfigTemplate()
    .add_entry("n", 1, "int", 1, MAX_QUBITS, "qubit count")
    .add_entry("hamiltonian", 0.0, "any", entry_help="Pauli sum such as '-1.0 Z', or {dense: [[...]]}")
    .add_entry("couplings", ["Z"], "list", entry_help="coupling operators S_j as Pauli strings or {dense: ...}")
    .add_entry("coupling_strength", 0.1, "float", 0.0, entry_help="lambda"))

RUN_TEMPLATE = (ConfigTemplate()
    .add_entry("T", 5.0, "float", 0.0, entry_help="total evolution time")
    .add_entry("dt", 0.1, "float", 0.0, entry_help="recovery step")
    .add_entry("dt_f", None, "float", 0.0, nullable=True, entry_help="fine stochastic step, default dt/4")
    .add_entry("noise_dt", None, "float", 0.0, nullable=True, entry_help="noise grid step, default dt_f")
    .add_entry("quad_step", None, "float", 0.0, nullable=True, entry_help="quadrature step of A(t), null for closed form")
    .add_entry("dt_ode", None, "float", 0.0, nullable=True, entry_help="reference RK4 step, at most dt/4; default min(dt_f, dt/4)")
    .add_entry("N_r", 10000, "int", 1, entry_help="mitigated trajectories")
    .add_entry("N_noisy", None, "int", 1, nullable=True, entry_help="noisy trajectories, default N_r")
    .add_entry("seed", 0, "int", 0)
    .add_entry("mode", RunMode.BOTH.value, "str", choices=[m.value for m in RunMode])
    .add_entry("observables", ["X", "Y", "Z"], "list")
    .add_entry("initial_state", "+", "any", entry_help="product state label such as '+0' or a vector")
    .add_entry("gamma_cap", 10.0, "float", 1.0, nullable=True)
    .add_entry("batch_size", 256, "int", 1)
    .add_entry("threads", None, "int", 1, nullable=True)
    .add_entry("history_mode", HistoryMode.POST.value, "str", choices=[m.value for m in HistoryMode])
    .add_entry("abort_fraction", 0.01, "float", 0.0, 1.0)
    .add_entry("progress", True, "bool"))

OUTPUT_TEMPLATE = (ConfigTemplate()
    .add_entry("directory", "results", "str")
    .add_entry("formats", ["csv", "json"], "list"))

SWEEP_TEMPLATE = (ConfigTemplate()
    .add_entry("cutoffs", [], "list")
    .add_entry("tables", [], "list", entry_help="[{omega_c, convention, poles}]")
    .add_entry("family", None, "dict", nullable=True, entry_help="{amplitude}: single-pole family instead of tables"))

TOP_LEVEL = ["version", "name", "model", "bath", "run", "output", "sweep"]


def _dense(value, pointer: str) -> np.ndarray:
    try:
        matrix = np.array([[complex_from_config(x) for x in row] for row in value], dtype=complex)
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"invalid dense matrix: {ex}", pointer)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ConfigError(f"dense matrix must be square, got shape {matrix.shape}", pointer)
    return matrix


def parse_operator(value, n: int, pointer: str) -> np.ndarray:
    """Pauli string, Pauli sum or ``{dense: [[...]]}`` to a 2^n x 2^n matrix."""
    try:
        if isinstance(value, str):
            if len(value.strip()) == n and value.strip().isalpha():
                return pauli_operator(value)
            return parse_pauli_sum(value, n)
        if isinstance(value, (int, float)):
            return float(value) * np.eye(2 ** n, dtype=complex)
    except DimensionError as ex:
        raise ConfigError(str(ex), pointer)
    if isinstance(value, dict) and "dense" in value:
        matrix = _dense(value["dense"], f"{pointer}.dense")
    elif isinstance(value, list):
        matrix = _dense(value, pointer)
    else:
        raise ConfigError(f"expected a Pauli expression or {{dense: ...}}, got {value!r}", pointer)
    if matrix.shape != (2 ** n, 2 ** n):
        raise ConfigError(f"operator of shape {matrix.shape} on {n} qubit(s)", pointer)
    return matrix


def parse_observables(entries: List, n: int) -> Tuple[Tuple[np.ndarray, ...], Tuple[str, ...]]:
    ops, labels = [], []
    for i, entry in enumerate(entries):
        pointer = f"run.observables[{i}]"
        if isinstance(entry, dict):
            name = entry.get("name")
            body = {"dense": entry["dense"]} if "dense" in entry else entry.get("pauli")
            if name is None or body is None:
                raise ConfigError("observable mappings need a name and a pauli or dense entry", pointer)
        else:
            name, body = str(entry), entry
        ops.append(parse_operator(body, n, pointer))
        labels.append(str(name))
    return tuple(ops), tuple(labels)


def parse_state(value, n: int) -> np.ndarray:
    pointer = "run.initial_state"
    if isinstance(value, str):
        if len(value) != n:
            raise ConfigError(f"product state {value!r} does not describe {n} qubit(s)", pointer)
        try:
            return product_state(value)
        except DimensionError as ex:
            raise ConfigError(str(ex), pointer)
    try:
        psi = np.array([complex_from_config(x) for x in value], dtype=complex)
    except (TypeError, ValueError) as ex:
        raise ConfigError(f"invalid state vector: {ex}", pointer)
    if psi.shape != (2 ** n,):
        raise ConfigError(f"state vector of length {len(psi)} on {n} qubit(s)", pointer)
    return psi


def _bath(block, pointer: str) -> BathSpec:
    try:
        return BathSpec.from_config(block, pointer)
    except BathError as ex:
        message = str(ex)
        if message.startswith(pointer) and ": " in message:
            field, message = message.split(": ", 1)
            raise ConfigError(message, field)
        raise ConfigError(message, pointer)


class ExperimentConfig(BaseConfig):
    """Experiment description: model, bath, run, output and optional sweep blocks.

    normalized() is the canonical form: every default filled in and the pole table
    rewritten with the decaying sign convention. dump() writes it, so load -> dump ->
    load is a fixed point.
    """

    def __init__(self, file_path: Union[str, Path] = None, config: dict = None):
        super().__init__(["file_path", "config"])
        self.file_path = Path(file_path) if file_path else None
        if file_path is not None:
            self.load_config(file_path)
        elif config is not None:
            self.config = copy.deepcopy(config)
        else:
            self.config = ExperimentConfig.default().config

    def copy(self):
        cfg = ExperimentConfig(config=self.config)
        cfg.file_path = self.file_path
        return cfg

    @staticmethod
    def default() -> "ExperimentConfig":
        return ExperimentConfig(nmpec_default_cfg_path)

    @staticmethod
    def from_file(path: Union[str, Path]) -> "ExperimentConfig":
        return ExperimentConfig(path)

    @staticmethod
    def autoload(path: Union[str, Path]) -> "ExperimentConfig":
        """Loads a file and upgrades it to the current version when it is older."""
        config = ExperimentConfig(path)
        if "version" not in config or int(config["version"]) < CONFIG_VERSION:
            ASCIIColors.warning(f"Configuration {path} is older than version {CONFIG_VERSION}, syncing with defaults")
            _, added, removed = config.sync_cfg(ExperimentConfig.default())
            ASCIIColors.info(f"Added entries : {added}, removed entries:{removed}")
        return config

    def sync_cfg(self, default_config: "ExperimentConfig"):
        """Syncs a configuration with the default configuration.

        Missing blocks and missing keys inside the run and output blocks are copied from
        the default; unknown top-level entries are removed.

        Returns:
            (self, added entries, removed entries)
        """
        added_entries = []
        removed_entries = []
        for key, value in default_config.config.items():
            if key not in self:
                self[key] = copy.deepcopy(value)
                added_entries.append(key)
            elif key in ("run", "output") and isinstance(self[key], dict):
                for sub, sub_value in value.items():
                    if sub not in self[key]:
                        self[key][sub] = copy.deepcopy(sub_value)
                        added_entries.append(f"{key}.{sub}")
        for key in list(self.config.keys()):
            if key not in TOP_LEVEL:
                del self.config[key]
                removed_entries.append(key)
        self["version"] = default_config["version"]
        return self, added_entries, removed_entries

    def _block(self, name: str, template: ConfigTemplate) -> Dict:
        return template.validate(self.config.get(name), name)

    def normalized(self) -> Dict:
        """Validated canonical dictionary.

        Raises:
            ConfigError: any invalid entry, with its dotted pointer.
        """
        unknown = sorted(set(self.config) - set(TOP_LEVEL))
        if unknown:
            raise ConfigError(f"unknown entries {', '.join(unknown)}")
        model = self._block("model", MODEL_TEMPLATE)
        run = self._block("run", RUN_TEMPLATE)
        if run["dt_f"] is None:
            run["dt_f"] = run["dt"] / 4
        out = {
            "version": int(self.config.get("version", CONFIG_VERSION)),
            "name": str(self.config.get("name", "experiment")),
            "model": model,
            "bath": _bath(self.config.get("bath", {}), "bath").to_config(),
            "run": run,
            "output": self._block("output", OUTPUT_TEMPLATE),
        }
        if "sweep" in self.config:
            sweep = self._block("sweep", SWEEP_TEMPLATE)
            sweep["cutoffs"] = [float(c) for c in sweep["cutoffs"]]
            tables = []
            for i, table in enumerate(sweep["tables"]):
                if not isinstance(table, dict) or "omega_c" not in table:
                    raise ConfigError("each table needs an omega_c entry", f"sweep.tables[{i}]")
                body = {k: v for k, v in table.items() if k != "omega_c"}
                tables.append({"omega_c": float(table["omega_c"]), **_bath(body, f"sweep.tables[{i}]").to_config()})
            sweep["tables"] = tables
            out["sweep"] = sweep
        return out

    def to_dict(self):
        return self.normalized()

    def dump(self, file_path: Union[str, Path]) -> Path:
        BaseConfig(config=self.normalized(), file_path=file_path).save_config()
        return Path(file_path)

    def config_hash(self) -> str:
        text = json.dumps(self.normalized(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def model(self, normalized: Optional[Dict] = None) -> SystemModel:
        block = (normalized or self.normalized())["model"]
        n = block["n"]
        hamiltonian = parse_operator(block["hamiltonian"], n, "model.hamiltonian")
        couplings = tuple(parse_operator(c, n, f"model.couplings[{i}]") for i, c in enumerate(block["couplings"]))
        try:
            return SystemModel(hamiltonian, couplings, block["coupling_strength"])
        except DimensionError as ex:
            raise ConfigError(str(ex), "model")

    def bath(self, normalized: Optional[Dict] = None) -> BathSpec:
        return BathSpec.from_config((normalized or self.normalized())["bath"])

    def build(self) -> RunConfig:
        """Typed run configuration with every cross-field invariant checked.

        Raises:
            ConfigError: invalid entries, channel mismatch, T not a multiple of dt, ...
        """
        normalized = self.normalized()
        model = self.model(normalized)
        bath = self.bath(normalized)
        if bath.channels != model.channels:
            raise ConfigError(f"{bath.channels} bath channels for {model.channels} coupling operators", "bath.channels")
        run = normalized["run"]
        observables, labels = parse_observables(run["observables"], model.n)
        return RunConfig(
            model=model,
            bath=bath,
            T=run["T"],
            dt=run["dt"],
            dt_f=run["dt_f"],
            N_r=run["N_r"],
            seed=run["seed"],
            observables=observables,
            initial_state=parse_state(run["initial_state"], model.n),
            mode=RunMode(run["mode"]),
            observable_labels=labels,
            N_noisy=run["N_noisy"],
            noise_dt=run["noise_dt"],
            quad_step=run["quad_step"],
            dt_ode=run["dt_ode"],
            gamma_cap=run["gamma_cap"],
            batch_size=run["batch_size"],
            threads=run["threads"],
            history_mode=HistoryMode(run["history_mode"]),
            abort_fraction=run["abort_fraction"],
            progress=run["progress"],
        )

    def sweep_tables(self) -> Tuple[List[float], Dict[float, BathSpec]]:
        """Requested cutoffs and the pole table of each.

        Tables come from ``sweep.tables``, or from ``sweep.family`` (the single-pole
        family with the given amplitude) for every requested cutoff.
        """
        normalized = self.normalized()
        if "sweep" not in normalized:
            raise ConfigError("no sweep block", "sweep")
        sweep = normalized["sweep"]
        tables = {t["omega_c"]: BathSpec.from_config({k: v for k, v in t.items() if k != "omega_c"}) for t in sweep["tables"]}
        family = sweep["family"]
        if family is not None:
            channels = normalized["bath"]["channels"]
            try:
                amplitude = float(family.get("amplitude", 0.5))
                for c in sweep["cutoffs"]:
                    tables.setdefault(c, single_pole_family(c, channels, amplitude))
            except (NmpecError, TypeError, ValueError) as ex:
                raise ConfigError(str(ex), "sweep.family")
        return sweep["cutoffs"], tables
