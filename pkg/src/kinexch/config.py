"""Configuration, run manifests, and deterministic result emission.

Configs are INI-style ``key = value`` sections. Every field has a default;
parsing resolves all of them explicitly, rejects unknown keys, and computes
a content hash, so a manifest alone reproduces a run bit-exactly.
"""

from __future__ import annotations

import configparser
import hashlib
import io
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .core import ExchangeTopology, RetentionRule
from .experiments import Protocol
from .rng import GENERATOR_NAME


class ConfigError(ValueError):
    """A configuration problem; the message names the offending field."""


def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_float_list(xs) -> str:
    return ",".join(_fmt_float(x) for x in xs)


_DEFAULT_SCAN_C1 = tuple(np.round(np.arange(0.05, 0.951, 0.05), 2))
_DEFAULT_SCAN_C2 = tuple(np.geomspace(0.1, 100.0, 20))

# (section, key) -> (parser, canonical default string)
_SCHEMA: dict[tuple[str, str], tuple] = {
    ("run", "n_agents"): ("int", "1000"),
    ("run", "seed"): ("int", "0"),
    ("run", "init"): ("choice:delta,uniform", "delta"),
    ("rule", "kind"): ("choice:constant,exp_saturating,sigmoid,quenched_exp_saturating", "exp_saturating"),
    ("rule", "c1"): ("float", _fmt_float(0.95)),
    ("rule", "c2"): ("float", _fmt_float(3.0)),
    ("topology", "kind"): ("choice:binary,nary,global", "global"),
    ("topology", "n"): ("int", "2"),
    ("protocol", "relax"): ("int", "1000"),
    ("protocol", "samples"): ("int", "100"),
    ("protocol", "gap"): ("int", "10"),
    ("dip", "null_reps"): ("int", "2000"),
    ("scan", "c1_values"): ("floatlist", _fmt_float_list(_DEFAULT_SCAN_C1)),
    ("scan", "c2_values"): ("floatlist", _fmt_float_list(_DEFAULT_SCAN_C2)),
    ("scan", "replicas"): ("int", "3"),
    ("scan", "sigmoid_c1_values"): ("floatlist", _fmt_float_list((0.1, 0.2, 0.3, 0.4, 0.45))),
    ("scan", "sigmoid_c2_values"): ("floatlist", _fmt_float_list((0.01, 0.1, 1.0, 10.0, 100.0, 1e6))),
    ("scan", "sigmoid_row_c1"): ("float", _fmt_float(0.3)),
    ("emergence", "c2_values"): ("floatlist", _fmt_float_list((0.5, 1.0, 3.0, 10.0))),
    ("trajectory", "sweeps"): ("int", "10000"),
    ("trajectory", "tracked"): ("int", "0"),
    ("transition", "c2_values"): ("floatlist", _fmt_float_list((0.0, 1.0, 10.0, 20.0, 30.0, 40.0, 50.0))),
    ("transition", "topology"): ("choice:binary,nary,global", "binary"),
    ("compare", "c2_values"): ("floatlist", _fmt_float_list((1.0, 3.0, 10.0))),
    ("compare", "window"): ("int", "20"),
    ("compare", "threshold"): ("float", _fmt_float(0.01)),
    ("compare", "max_sweeps"): ("int", "4000"),
    ("zipf", "growth_pairs"): ("int", "500"),
    ("output", "dir"): ("str", "out"),
}

_SECTIONS = tuple(dict.fromkeys(section for section, _ in _SCHEMA))


def _parse_value(field: str, spec: str, raw: str):
    raw = raw.strip()
    try:
        if spec == "int":
            return int(raw)
        if spec == "float":
            return float(raw)
        if spec == "floatlist":
            return tuple(float(part) for part in raw.split(",") if part.strip() != "")
        if spec.startswith("choice:"):
            choices = spec.split(":", 1)[1].split(",")
            if raw not in choices:
                raise ValueError(f"must be one of {choices}")
            return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"{field}: cannot parse {raw!r} ({exc})") from None


def _canonical(spec: str, value) -> str:
    if spec == "float":
        return _fmt_float(value)
    if spec == "floatlist":
        return _fmt_float_list(value)
    return str(value)


@dataclass
class Config:
    """A fully resolved configuration: every schema field made explicit."""

    values: dict[tuple[str, str], object]

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    # -- canonical text and hashing -------------------------------------

    def canonical_lines(self) -> list[str]:
        lines = []
        for section in _SECTIONS:
            lines.append(f"[{section}]")
            for (sec, key), (spec, _) in _SCHEMA.items():
                if sec == section:
                    lines.append(f"{key} = {_canonical(spec, self.values[(sec, key)])}")
        return lines

    def canonical_text(self) -> str:
        return "\n".join(self.canonical_lines()) + "\n"

    @property
    def content_hash(self) -> str:
        return hashlib.sha256(self.canonical_text().encode()).hexdigest()

    # -- domain object builders ------------------------------------------

    @property
    def seed(self) -> int:
        return int(self.values[("run", "seed")])

    @property
    def n_agents(self) -> int:
        return int(self.values[("run", "n_agents")])

    def rule(self, quenched_c1=None) -> RetentionRule:
        kind = self.values[("rule", "kind")]
        c1 = float(self.values[("rule", "c1")])
        c2 = float(self.values[("rule", "c2")])
        try:
            if kind == "constant":
                return RetentionRule.constant(c1)
            if kind == "exp_saturating":
                return RetentionRule.exp_saturating(c1, c2)
            if kind == "sigmoid":
                return RetentionRule.sigmoid(c1, c2)
            if quenched_c1 is None:
                raise ConfigError("rule.kind: quenched rule needs a drawn c1 vector")
            return RetentionRule.quenched(quenched_c1, c2)
        except ValueError as exc:
            raise ConfigError(f"rule: {exc}") from None

    def topology(self) -> ExchangeTopology:
        kind = self.values[("topology", "kind")]
        try:
            if kind == "binary":
                return ExchangeTopology.binary()
            if kind == "global":
                return ExchangeTopology.global_()
            return ExchangeTopology.nary(int(self.values[("topology", "n")]))
        except ValueError as exc:
            raise ConfigError(f"topology: {exc}") from None

    def protocol(self) -> Protocol:
        try:
            return Protocol(
                relax_sweeps=int(self.values[("protocol", "relax")]),
                sample_count=int(self.values[("protocol", "samples")]),
                sample_gap=int(self.values[("protocol", "gap")]),
            )
        except ValueError as exc:
            raise ConfigError(f"protocol: {exc}") from None

    def validate(self) -> None:
        if self.n_agents < 1:
            raise ConfigError("run.n_agents: must be >= 1")
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("run.seed: must fit in 64 bits")
        if int(self.values[("dip", "null_reps")]) < 1:
            raise ConfigError("dip.null_reps: must be >= 1")
        kind = self.values[("rule", "kind")]
        c1 = float(self.values[("rule", "c1")])
        if kind == "sigmoid" and not 0.0 <= c1 < 0.5:
            raise ConfigError(f"rule.c1: sigmoid retention requires c1 < 1/2, got {c1}")
        if kind != "quenched_exp_saturating":
            self.rule()  # surface the remaining range errors with field context
        self.topology()
        self.protocol()
        if any(v >= 0.5 for v in self.values[("scan", "sigmoid_c1_values")]):
            raise ConfigError("scan.sigmoid_c1_values: sigmoid retention requires c1 < 1/2")


def parse_config(path: str | Path | None = None, overrides: dict[str, str] | None = None) -> Config:
    """Resolve a config file plus ``section.key=value`` overrides to a Config.

    Missing file (path None) means pure defaults. Unknown sections or keys
    are errors, never silently ignored.
    """
    values = {field: _parse_value(".".join(field), spec, default) for field, (spec, default) in _SCHEMA.items()}
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        for section in parser.sections():
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if (section, key) not in _SCHEMA:
                    raise ConfigError(f"unknown config key {section}.{key}")
                values[(section, key)] = _parse_value(f"{section}.{key}", _SCHEMA[(section, key)][0], raw)
    for dotted, raw in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"override {dotted!r}: expected section.key=value")
        section, key = dotted.split(".", 1)
        if (section, key) not in _SCHEMA:
            raise ConfigError(f"unknown config key {section}.{key}")
        values[(section, key)] = _parse_value(dotted, _SCHEMA[(section, key)][0], raw)
    config = Config(values)
    config.validate()
    return config


@dataclass
class RunManifest:
    """Everything needed to reproduce a run bit-exactly plus provenance."""

    artifact_version: str
    generator: str
    seed: int
    config_text: str
    config_hash: str
    timestamp: str
    subcommand: str

    @classmethod
    def for_run(cls, config: Config, subcommand: str, timestamp: str | None = None) -> "RunManifest":
        return cls(
            artifact_version=__version__,
            generator=GENERATOR_NAME,
            seed=config.seed,
            config_text=config.canonical_text(),
            config_hash=config.content_hash,
            timestamp=timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
            subcommand=subcommand,
        )

    def to_json(self) -> str:
        payload = {
            "artifact_version": self.artifact_version,
            "generator": self.generator,
            "seed": self.seed,
            "subcommand": self.subcommand,
            "timestamp": self.timestamp,
            "config_hash": self.config_hash,
            "config": self.config_text.splitlines(),
        }
        return json.dumps(payload, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        payload = json.loads(text)
        return cls(
            artifact_version=payload["artifact_version"],
            generator=payload["generator"],
            seed=payload["seed"],
            config_text="\n".join(payload["config"]) + "\n",
            config_hash=payload["config_hash"],
            timestamp=payload["timestamp"],
            subcommand=payload["subcommand"],
        )

    def config(self) -> Config:
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_file(io.StringIO(self.config_text))
        values = {}
        for (section, key), (spec, default) in _SCHEMA.items():
            raw = parser.get(section, key, fallback=default)
            values[(section, key)] = _parse_value(f"{section}.{key}", spec, raw)
        config = Config(values)
        config.validate()
        if config.content_hash != self.config_hash:
            raise ConfigError("manifest config hash mismatch; manifest was edited")
        return config


@dataclass
class Table:
    """One tabular output: named columns (units in the names) plus rows."""

    name: str
    columns: tuple[str, ...]
    rows: list[tuple]


@dataclass
class ResultBundle:
    manifest: RunManifest
    tables: list[Table]
    summary: dict


SENTINEL_NAME = "COMPLETE"


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def _json_safe(value):
    if isinstance(value, dict):
        return {str(k): _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value)
    return value


def emit(bundle: ResultBundle, out_dir: str | Path) -> list[Path]:
    """Write manifest, one CSV per table, a summary, then the sentinel.

    CSV numbers use 17 significant digits with '.' decimal separator and
    LF line endings regardless of platform or locale. The sentinel file is
    written last; its absence marks partial output.
    """
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []
        manifest_path = out / "manifest.json"
        manifest_path.write_text(bundle.manifest.to_json(), encoding="utf-8", newline="\n")
        written.append(manifest_path)
        for table in bundle.tables:
            path = out / f"{table.name}.csv"
            lines = [",".join(table.columns)]
            for row in table.rows:
                if len(row) != len(table.columns):
                    raise ValueError(f"table {table.name}: row width {len(row)} != {len(table.columns)} columns")
                lines.append(",".join(_format_cell(v) for v in row))
            path.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
            written.append(path)
        summary_path = out / "summary.json"
        summary_payload = dict(_json_safe(bundle.summary))
        summary_payload["config_hash"] = bundle.manifest.config_hash
        summary_path.write_text(json.dumps(summary_payload, indent=2, sort_keys=True) + "\n",
                                encoding="utf-8", newline="\n")
        written.append(summary_path)
        sentinel = out / SENTINEL_NAME
        sentinel.write_text("", encoding="utf-8")
        written.append(sentinel)
        return written
    except OSError as exc:
        raise OSError(f"while writing results under {out}: {exc}") from exc


def output_dir(config: Config, flag_value: str | None, env: dict | None = None) -> Path:
    """Output directory precedence: CLI flag, then env override, then config."""
    env = os.environ if env is None else env
    if flag_value:
        return Path(flag_value)
    if env.get("KINEXCH_OUT"):
        return Path(env["KINEXCH_OUT"])
    return Path(str(config.get("output", "dir")))
