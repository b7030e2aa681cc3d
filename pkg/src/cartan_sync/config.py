"""Experiment configuration for generate/sweep runs."""
from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Union

from .errors import ConfigInvalid
from .sync import METHODS, GroupSpec

LambdaSpec = Union[str, float]


def _as_list(v, name: str) -> list:
    out = list(v) if isinstance(v, (list, tuple)) else [v]
    if not out:
        raise ConfigInvalid(f"sweep list {name!r} is empty")
    return out


@dataclass(frozen=True)
class Cell:
    """One grid point. ``snr_db`` set means the sigmas are calibrated per trial."""

    index: int
    p: float
    outlier_rate: float
    sigma_rot: float
    sigma_trans: float
    snr_db: Optional[float]
    lam: LambdaSpec


@dataclass
class NoiseSweep:
    sigma_rot: List[float] = field(default_factory=lambda: [0.0])
    sigma_trans: List[float] = field(default_factory=lambda: [0.0])
    outlier_rate: List[float] = field(default_factory=lambda: [0.0])
    p: List[float] = field(default_factory=lambda: [1.0])
    # optional SNR targets; each replaces the sigma lists by a calibrated level
    snr_db: Optional[List[float]] = None
    sigma_ratio: float = 1.0  # sigma_trans / sigma_rot used by calibration

    @classmethod
    def from_dict(cls, obj: dict) -> "NoiseSweep":
        known = {"sigma_rot", "sigma_trans", "outlier_rate", "p", "snr_db", "sigma_ratio"}
        extra = set(obj) - known
        if extra:
            raise ConfigInvalid(f"unknown noise fields {sorted(extra)}")
        kw = {k: _as_list(obj[k], k) for k in ("sigma_rot", "sigma_trans", "outlier_rate", "p") if k in obj}
        if obj.get("snr_db") is not None:
            kw["snr_db"] = [float(x) for x in _as_list(obj["snr_db"], "snr_db")]
        if "sigma_ratio" in obj:
            kw["sigma_ratio"] = float(obj["sigma_ratio"])
        return cls(**kw)


@dataclass
class ExperimentConfig:
    group: GroupSpec
    n: int
    methods: List[str]
    noise: NoiseSweep = field(default_factory=NoiseSweep)
    lam: List[LambdaSpec] = field(default_factory=lambda: ["auto"])
    trials_per_cell: int = 1
    seed: int = 0
    output_path: str = "results"
    align_budget: Optional[int] = None

    def __post_init__(self):
        if self.n < 2:
            raise ConfigInvalid("n must be at least 2")
        if not self.methods:
            raise ConfigInvalid("at least one method is required")
        for m in self.methods:
            if m not in METHODS and not m.startswith("plugin:"):
                raise ConfigInvalid(f"unknown method {m!r}")
            if not _method_fits(m, self.group):
                raise ConfigInvalid(f"method {m!r} does not apply to {self.group.label()}")
        if self.trials_per_cell < 1:
            raise ConfigInvalid("trials_per_cell must be positive")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigInvalid("seed must be a 64-bit unsigned integer")
        for lam in self.lam:
            if isinstance(lam, str):
                if lam.lower() != "auto":
                    raise ConfigInvalid(f"lambda must be a number or 'auto', got {lam!r}")
            elif not lam >= 1:
                raise ConfigInvalid(f"lambda must be >= 1, got {lam}")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        try:
            g = obj["group"]
            group = GroupSpec(g["kind"], int(g["d"]), int(g.get("l", 1)))
            if group.compact:
                raise ConfigInvalid("experiments need a motion group (SE or MMG)")
            lam = obj.get("lambda", "auto")
            return cls(
                group=group,
                n=int(obj["n"]),
                methods=[str(m) for m in _as_list(obj["methods"], "methods")],
                noise=NoiseSweep.from_dict(obj.get("noise", {})),
                lam=[x if isinstance(x, str) else float(x) for x in _as_list(lam, "lambda")],
                trials_per_cell=int(obj.get("trials_per_cell", 1)),
                seed=int(obj.get("seed", 0)),
                output_path=str(obj.get("output_path", "results")),
                align_budget=None if obj.get("align_budget") is None else int(obj["align_budget"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"bad config: {exc!r}") from exc

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigInvalid(f"cannot read config {path}: {exc}") from exc
        if not isinstance(obj, dict):
            raise ConfigInvalid("config must be a JSON object")
        return cls.from_dict(obj)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group"] = {"kind": self.group.kind, "d": self.group.d, "l": self.group.l}
        d["lambda"] = d.pop("lam")
        return d

    def cells(self) -> List[Cell]:
        """Cartesian product in a fixed order: p, outlier rate, noise level, lambda."""
        nz = self.noise
        if nz.snr_db is not None:
            levels = [(float("nan"), float("nan"), s) for s in nz.snr_db]
        else:
            levels = [(float(a), float(b), None) for a, b in itertools.product(nz.sigma_rot, nz.sigma_trans)]
        out = []
        for k, (p, o, (sr, st, snr), lam) in enumerate(itertools.product(nz.p, nz.outlier_rate, levels, self.lam)):
            out.append(Cell(k, float(p), float(o), sr, st, snr, lam))
        return out


def _method_fits(method: str, group: GroupSpec) -> bool:
    if method in ("separation", "se-spectral", "pd-spectral"):
        return group.kind == "SE"
    if method == "separation-mmg":
        return group.kind == "MMG"
    return True
