"""JSON run configurations."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .levy import CEV, LocalLevyModel, Merton, NoJumps, TaylorVol, VarianceGamma
from .pricing import (
    ArithmeticAsianCall,
    BSModelSpec,
    EuropeanCall,
    EuropeanPut,
    GeometricAsianCall,
    UpOutCall,
)

CONFIG_VERSION = 1
EXPERIMENTS = ("qv", "greeks", "hedge", "price-expansion", "price-mc", "reproduce-table", "error-curves")
STOCHASTIC = ("hedge", "price-mc", "reproduce-table", "error-curves")


class SchemaError(ValueError):
    pass


@dataclass
class RunConfig:
    experiment: str
    model: dict = field(default_factory=dict)
    payoff: dict = field(default_factory=dict)
    partition: dict = field(default_factory=dict)
    mc: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int | None = None
    version: int = CONFIG_VERSION

    def validate(self) -> "RunConfig":
        if self.version != CONFIG_VERSION:
            raise SchemaError(f"unsupported config version {self.version}")
        if self.experiment not in EXPERIMENTS:
            raise SchemaError(f"unknown experiment {self.experiment!r}")
        for name in ("model", "payoff", "partition", "mc", "output", "params"):
            if not isinstance(getattr(self, name), dict):
                raise SchemaError(f"{name} must be an object")
        if self.experiment in STOCHASTIC and not isinstance(self.seed, int):
            raise SchemaError(f"{self.experiment} needs an integer seed")
        for key in ("input",):
            p = self.params.get(key)
            if p is not None and not Path(p).exists():
                raise SchemaError(f"input file {p} does not exist")
        if self.model:
            build_model(self.model)
        if self.payoff:
            build_payoff(self.payoff)
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        if not isinstance(d, dict):
            raise SchemaError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        extra = set(d) - known
        if extra:
            raise SchemaError(f"unknown config keys {sorted(extra)}")
        if "experiment" not in d:
            raise SchemaError("config needs an experiment")
        return cls(**d).validate()

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise SchemaError(f"invalid JSON: {e}") from e
        return cls.from_dict(d)


def _get(block: dict, key: str, default=None, required=False):
    if key not in block:
        if required:
            raise SchemaError(f"missing {key!r}")
        return default
    v = block[key]
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        raise SchemaError(f"{key!r} must be a number")
    return float(v)


def build_model(block: dict):
    """kind: bs | cev-merton | cev-vg | cev | taylor."""
    kind = block.get("kind")
    try:
        if kind == "bs":
            sig = block.get("sigma", 0.2)
            breaks = block.get("breaks", [0.0])
            return BSModelSpec(tuple(sig if isinstance(sig, list) else [sig]), _get(block, "T", 1.0), tuple(breaks))
        if kind in ("cev-merton", "cev-vg", "cev", "taylor"):
            if kind == "taylor":
                lv = TaylorVol(tuple(block["coeffs"]), _get(block, "xbar", 0.0))
            else:
                lv = CEV(_get(block, "sigma0", 0.2), _get(block, "beta", 0.5))
            if kind == "cev-merton":
                j = Merton(_get(block, "lam", 0.3), _get(block, "m", -0.1), _get(block, "delta", 0.4))
            elif kind == "cev-vg":
                j = VarianceGamma(_get(block, "kappa", 0.15), _get(block, "theta", -0.1), _get(block, "rho", 0.2))
            else:
                j = NoJumps()
            return LocalLevyModel(lv, j, _get(block, "r", 0.05))
    except (TypeError, ValueError, KeyError) as e:
        if isinstance(e, SchemaError):
            raise
        raise SchemaError(f"invalid model block: {e}") from e
    raise SchemaError(f"unknown model kind {kind!r}")


def build_payoff(block: dict):
    kind = block.get("kind")
    K = _get(block, "K", 1.0)
    if kind == "european":
        return EuropeanCall(K)
    if kind == "european-put":
        return EuropeanPut(K)
    if kind == "geom-asian":
        return GeometricAsianCall(K)
    if kind == "arith-asian":
        return ArithmeticAsianCall(K)
    if kind == "barrier":
        return UpOutCall(K, _get(block, "U", required=True))
    raise SchemaError(f"unknown payoff kind {kind!r}")
