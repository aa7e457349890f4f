"""Experiment configuration: JSON ingestion, schema validation and
construction of the model/grid objects the experiments run on."""

from __future__ import annotations

import hashlib
import importlib.resources
import json
from dataclasses import dataclass, field

import jsonschema
import numpy as np

from .grids import Grid1D
from .models import (ConstantPotential, DiracPairKernel, ModelSpec,
                     QuadraticPotential, TabulatedConvolutionKernel,
                     TabulatedPotential, TruncatedGaussianKernel,
                     UniformBandKernel)


class ConfigError(ValueError):
    """Invalid configuration; `path` names the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _schema() -> dict:
    text = importlib.resources.files("perron").joinpath("schema.json").read_text()
    return json.loads(text)


RANDOMIZED_EXPERIMENTS = {"sigma_audit", "full_theorem2_pipeline"}


@dataclass
class ExperimentConfig:
    experiment: str
    raw: dict
    model: dict = field(default_factory=dict)
    chain: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    time: dict = field(default_factory=dict)
    numerics: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)

    # -- typed accessors with defaults ---------------------------------------

    @property
    def tau(self) -> float:
        return float(self.time.get("tau", 0.4))

    @property
    def horizon(self) -> float:
        return float(self.time.get("horizon", 30.0))

    @property
    def sample_dt(self) -> float:
        return float(self.time.get("sample_dt", 0.2))

    @property
    def seed(self) -> int:
        return int(self.numerics.get("seed", 0))

    def numeric(self, key, default):
        return self.numerics.get(key, default)

    def build_grid(self) -> Grid1D:
        L = float(self.grid.get("L", 8.0))
        n_cells = int(self.grid.get("n_cells", 2000))
        return Grid1D(-L, L, n_cells)

    def build_model(self) -> ModelSpec:
        pot_cfg = self.model.get("potential", {"kind": "quadratic",
                                               "peak": 1.0, "slope": 1.0})
        kind = pot_cfg["kind"]
        if kind == "quadratic":
            potential = QuadraticPotential(peak=pot_cfg.get("peak", 1.0),
                                           slope=pot_cfg.get("slope", 1.0))
        elif kind == "constant":
            potential = ConstantPotential(level=pot_cfg.get("level", 0.0))
        elif kind == "table":
            data = np.loadtxt(pot_cfg["path"], delimiter=",", ndmin=2)
            potential = TabulatedPotential(data[:, 0], data[:, 1])
        else:  # pragma: no cover - schema forbids
            raise ConfigError("model.potential.kind", f"unknown kind {kind}")

        ker_cfg = self.model.get("kernel", {"kind": "uniform_band",
                                            "kappa0": 1.0, "eps": 1.0})
        kind = ker_cfg["kind"]
        if kind == "uniform_band":
            kernel = UniformBandKernel(kappa0=ker_cfg.get("kappa0", 1.0),
                                       eps=ker_cfg.get("eps", 1.0))
        elif kind == "gaussian":
            kernel = TruncatedGaussianKernel(
                amplitude=ker_cfg.get("amplitude", 1.0),
                width=ker_cfg.get("width", 0.5),
                cutoff=ker_cfg.get("cutoff", 1.0))
        elif kind == "dirac_pair":
            kernel = DiracPairKernel(offset=ker_cfg.get("offset", 1.0))
        elif kind == "table":
            data = np.loadtxt(ker_cfg["path"], delimiter=",", ndmin=2)
            kernel = TabulatedConvolutionKernel(data[:, 0], data[:, 1],
                                                kappa0=ker_cfg.get("kappa0", 0.0),
                                                eps=ker_cfg.get("eps", 0.0))
        else:  # pragma: no cover - schema forbids
            raise ConfigError("model.kernel.kind", f"unknown kind {kind}")
        return ModelSpec(potential=potential, kernel=kernel)

    def config_hash(self) -> str:
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]


def validate_dict(data: dict) -> list[str]:
    """Schema + cross-field validation; returns diagnostics (empty = valid)."""
    validator = jsonschema.Draft202012Validator(_schema())
    diags = []
    for err in sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path)):
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        diags.append(f"{path}: {err.message}")
    if diags:
        return diags

    experiment = data.get("experiment", "")
    kernel_kind = data.get("model", {}).get("kernel", {}).get("kind", "uniform_band")
    needs_floor = experiment in ("sigma_audit", "full_theorem2_pipeline")
    if needs_floor and kernel_kind == "dirac_pair":
        diags.append("model.kernel.kind: dirac_pair has no uniform density "
                     "floor; the crossing-law construction requires one")
    if needs_floor:
        eps = data.get("model", {}).get("kernel", {}).get("eps",
                                                          1.0 if kernel_kind != "dirac_pair" else 0.0)
        if not eps > 0:
            diags.append("model.kernel.eps: must be > 0 for crossing-law "
                         "experiments")
    if experiment in RANDOMIZED_EXPERIMENTS and "seed" not in data.get("numerics", {}):
        diags.append("numerics.seed: required for experiments with randomized "
                     "trials (reproducibility)")
    if experiment == "finite_h1h2":
        chain = data.get("chain", {})
        if "generator" not in chain and "cycle_states" not in chain:
            diags.append("chain: finite_h1h2 needs chain.generator or "
                         "chain.cycle_states")
        gen = chain.get("generator")
        if gen is not None:
            n = len(gen)
            if any(len(row) != n for row in gen):
                diags.append("chain.generator: must be a square matrix")
    return diags


def load_config(path: str) -> ExperimentConfig:
    """Load + validate; raises ConfigError naming the first offending field."""
    with open(path) as fh:
        data = json.load(fh)
    diags = validate_dict(data)
    if diags:
        first = diags[0]
        field_path = first.split(":", 1)[0]
        raise ConfigError(field_path, "; ".join(diags))
    return ExperimentConfig(experiment=data["experiment"], raw=data,
                            model=data.get("model", {}),
                            chain=data.get("chain", {}),
                            grid=data.get("grid", {}),
                            time=data.get("time", {}),
                            numerics=data.get("numerics", {}),
                            output=data.get("output", {}))
