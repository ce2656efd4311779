"""Run configuration: an INI file with one section per stage.

Example::

    [synth]          ; or: [input] data = path/to/train.csv
    n = 4000
    dim = 12
    rho = 0.9
    bias_scale = 3

    [transform]
    lambda = 1e-4
    steps = 2000
    loss_form = squared

    [classifier]
    steps = 1000
    batch_size = 128

    [run]
    seeds = 0,1,2
    output = runs/synthetic

Values are typed per key; command-line flags override file values.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .classifier import SAMPLER_REFERENCES, ClassifierTrainConfig
from .datasets import FORMATS
from .errors import ConfigError
from .synthgen import SyntheticConfig
from .transform import TransformTrainConfig


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text):
    return [int(v) for v in str(text).replace(" ", "").split(",") if v]


def _float_list(text):
    return [float(v) for v in str(text).replace(" ", "").split(",") if v]


SCHEMA = {
    "input": {"data": str, "eval_data": str, "format": str},
    "synth": {"n": int, "dim": int, "rho": float, "bias_scale": float, "n_test": int},
    "transform": {"lambda": float, "learning_rate": float, "steps": int, "loss_form": str},
    "classifier": {
        "learning_rate": float, "steps": int, "batch_size": int,
        "weight_decay": float, "init_scale": float,
    },
    "run": {
        "seeds": _int_list, "output": str, "random_group_ablation": _bool,
        "discard_fractions": _float_list, "sampler_reference": str,
    },
}
ALIASES = {"B": "bias_scale", "lam": "lambda", "lr": "learning_rate"}


@dataclass
class RunConfig:
    output: Path
    synth: SyntheticConfig | None = None
    n_test: int | None = None
    data: Path | None = None
    eval_data: Path | None = None
    data_format: str | None = None
    transform: TransformTrainConfig = field(default_factory=TransformTrainConfig)
    classifier: ClassifierTrainConfig = field(default_factory=ClassifierTrainConfig)
    seeds: list = field(default_factory=lambda: [0])
    random_group_ablation: bool = True
    discard_fractions: list = field(default_factory=lambda: [0.1, 0.25, 0.5])
    sampler_reference: str = "invariant"

    def describe(self):
        return {
            "output": str(self.output),
            "synth": None if self.synth is None else vars(self.synth),
            "n_test": self.n_test,
            "data": None if self.data is None else str(self.data),
            "eval_data": None if self.eval_data is None else str(self.eval_data),
            "data_format": self.data_format,
            "transform": vars(self.transform),
            "classifier": vars(self.classifier),
            "seeds": list(self.seeds),
            "random_group_ablation": self.random_group_ablation,
            "discard_fractions": list(self.discard_fractions),
            "sampler_reference": self.sampler_reference,
        }


def read_sections(path):
    """Raw ``{section: {key: text}}`` from an INI file; parse errors carry line numbers."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except configparser.ParsingError as exc:
        where = "; ".join(f"line {lineno}: cannot parse {line.strip()!r}" for lineno, line in exc.errors)
        raise ConfigError(None, f"{path}: {where}") from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        prefix = f"line {lineno}: " if lineno else ""
        raise ConfigError(None, f"{path}: {prefix}{exc.message}") from exc
    return {s: dict(parser[s]) for s in parser.sections()}


def merge(base, overrides):
    out = {s: dict(v) for s, v in base.items()}
    for section, values in (overrides or {}).items():
        out.setdefault(section, {}).update(values)
    return out


def _typed(sections, problems):
    typed = {}
    for section, values in sections.items():
        if section not in SCHEMA:
            problems.append(f"unknown section [{section}]")
            continue
        typed[section] = {}
        for key, raw in values.items():
            name = ALIASES.get(key, key)
            parse = SCHEMA[section].get(name)
            if parse is None:
                problems.append(f"{section}.{key}: unknown key")
                continue
            try:
                typed[section][name] = parse(raw) if isinstance(raw, str) else raw
            except ValueError:
                problems.append(f"{section}.{key}: cannot parse {raw!r} as {getattr(parse, '__name__', parse)}")
    return typed


def check_output_dir(path, create=False):
    path = Path(path)
    if path.is_dir():
        return None
    if path.exists():
        return f"run.output: {path} exists and is not a directory"
    if not path.parent.is_dir():
        return f"run.output: parent directory {path.parent} does not exist"
    if create:
        path.mkdir()
    return None


def build_config(sections) -> tuple[RunConfig | None, list[str]]:
    """Typed RunConfig plus every violated constraint (config is None when any exist)."""
    problems: list[str] = []
    typed = _typed(sections, problems)
    inp, syn = typed.get("input", {}), typed.get("synth")
    tr, cl, run = typed.get("transform", {}), typed.get("classifier", {}), typed.get("run", {})

    synth = None
    if syn is not None and "data" in inp:
        problems.append("input: give either [synth] or input.data, not both")
    elif syn is None and "data" not in inp:
        problems.append("input: need a [synth] section or input.data")
    if syn is not None:
        vals = {k: v for k, v in syn.items() if k != "n_test"}
        defaults = vars(SyntheticConfig())
        full = {**defaults, **vals}
        bad = SyntheticConfig.check(full["n"], full["dim"], full["rho"], full["bias_scale"])
        problems += [f"synth.{f}: {m}" for f, m in bad]
        if not bad:
            synth = SyntheticConfig(**full)
        if "n_test" in syn and syn["n_test"] < 1:
            problems.append("synth.n_test: n_test must be a positive integer")
    for key in ("data", "eval_data"):
        if key in inp and not Path(inp[key]).is_file():
            problems.append(f"input.{key}: file not found: {inp[key]}")
    if "format" in inp and inp["format"] not in FORMATS:
        problems.append(f"input.format: must be one of {FORMATS}")

    tvals = {**vars(TransformTrainConfig()), **{("lam" if k == "lambda" else k): v for k, v in tr.items()}}
    bad = TransformTrainConfig.check(**tvals)
    problems += [f"transform.{f}: {m}" for f, m in bad]
    cvals = {**vars(ClassifierTrainConfig()), **cl}
    bad = ClassifierTrainConfig.check(**cvals)
    problems += [f"classifier.{f}: {m}" for f, m in bad]

    seeds = run.get("seeds", [0])
    if not seeds:
        problems.append("run.seeds: seed list must be non-empty")
    if any(s < 0 for s in seeds):
        problems.append("run.seeds: seeds must be non-negative")
    if "output" not in run:
        problems.append("run.output: output directory is required")
    else:
        msg = check_output_dir(run["output"])
        if msg:
            problems.append(msg)
    fractions = run.get("discard_fractions", [0.1, 0.25, 0.5])
    if any(not 0 <= f < 1 for f in fractions):
        problems.append("run.discard_fractions: every fraction must be in [0, 1)")
    ref = run.get("sampler_reference", "invariant")
    if ref not in SAMPLER_REFERENCES:
        problems.append(f"run.sampler_reference: must be one of {SAMPLER_REFERENCES}")

    if problems:
        return None, problems
    cfg = RunConfig(
        output=Path(run["output"]),
        synth=synth,
        n_test=syn.get("n_test") if syn else None,
        data=Path(inp["data"]) if "data" in inp else None,
        eval_data=Path(inp["eval_data"]) if "eval_data" in inp else None,
        data_format=inp.get("format"),
        transform=TransformTrainConfig(**tvals),
        classifier=ClassifierTrainConfig(**cvals),
        seeds=list(seeds),
        random_group_ablation=run.get("random_group_ablation", True),
        discard_fractions=list(fractions),
        sampler_reference=ref,
    )
    return cfg, []


def load_config(path=None, overrides=None) -> RunConfig:
    sections = read_sections(path) if path is not None else {}
    cfg, problems = build_config(merge(sections, overrides))
    if problems:
        raise ConfigError(None, "invalid configuration:\n  " + "\n  ".join(problems))
    return cfg


def validate_config(path, overrides=None) -> list[str]:
    """Every violated constraint in the file (empty list means valid)."""
    try:
        sections = read_sections(path)
    except ConfigError as exc:
        return [str(exc)]
    except OSError as exc:
        return [f"{path}: {exc}"]
    return build_config(merge(sections, overrides))[1]
