"""Run configuration: dataset presets, JSON config files and CLI overrides."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .fusion import FusionConfig, SsimParams
from .patches import load_dictionary
from .qfed import QfedConfig

# (alpha, beta, lambda) per dataset
PRESETS = {
    "lytro": (1.5, 0.5, 0.05),
    "mfi-whu": (1.5, 0.5, 0.05),
    "mffw": (1.5, 2.0, 0.05),
}

_ALIASES = {"lambda": "lam"}


@dataclass
class RunConfig:
    preset: str = "lytro"
    alpha: Optional[float] = None
    beta: Optional[float] = None
    lam: Optional[float] = None
    mu0: float = QfedConfig.mu0
    tol: float = QfedConfig.tol
    max_iter: int = QfedConfig.max_iter
    patch_size: int = QfedConfig.patch_size
    detail_patch: Optional[int] = None
    n_groups: Optional[int] = None
    n_atoms: int = QfedConfig.n_atoms
    shrink_mode: str = QfedConfig.shrink_mode
    radius: int = 3
    theta: float = 1.0
    gamma: float = 0.2
    C1: float = 1e-6
    C2: float = 1e-6
    epsilon: float = 1e-10
    seed: int = 0
    dictionary: Optional[str] = None
    inputs: list = field(default_factory=list)
    output: Optional[str] = None
    trace: Optional[str] = None

    def __post_init__(self):
        if self.preset != "custom" and self.preset not in PRESETS:
            raise ValueError(f"unknown preset {self.preset!r}; choose from {sorted(PRESETS) + ['custom']}")

    def weights(self) -> tuple[float, float, float]:
        base = PRESETS.get(self.preset, PRESETS["lytro"])
        vals = [self.alpha, self.beta, self.lam]
        return tuple(v if v is not None else b for v, b in zip(vals, base))

    def qfed_config(self) -> QfedConfig:
        alpha, beta, lam = self.weights()
        return QfedConfig(alpha=alpha, beta=beta, lam=lam, mu0=self.mu0, tol=self.tol,
                          max_iter=self.max_iter, patch_size=self.patch_size,
                          n_groups=self.n_groups, n_atoms=self.n_atoms,
                          shrink_mode=self.shrink_mode, seed=self.seed)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(qfed=self.qfed_config(), radius=self.radius, theta=self.theta,
                            gamma=self.gamma, detail_patch=self.detail_patch,
                            ssim=SsimParams(self.C1, self.C2, self.epsilon))

    def load_dictionary(self):
        return load_dictionary(self.dictionary) if self.dictionary else None

    def updated(self, **overrides) -> "RunConfig":
        """Copy with every non-None override applied."""
        data = asdict(self)
        data.update({k: v for k, v in overrides.items() if v is not None})
        return RunConfig(**data)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        clean = {}
        for key, value in data.items():
            key = _ALIASES.get(key, key.replace("-", "_"))
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            clean[key] = value
        return cls(**clean)

    @classmethod
    def from_json(cls, path) -> "RunConfig":
        data = json.loads(Path(path).read_text())
        if not isinstance(data, dict):
            raise ValueError(f"{path}: config must be a JSON object")
        return cls.from_dict(data)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)
