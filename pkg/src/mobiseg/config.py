"""Runtime configuration: a key=value file overridden by MOBISEG_* env vars."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields


@dataclass
class ServiceConfig:
    port: int = 8040
    data_dir: str = "./mobiseg-data"
    k_dest: int = 30
    k_bridge: int = 20
    latency_budget_s: float = 2.0
    whatif_shap_samples: int = 16
    whatif_shap_max_origins: int = 16
    feature_impact_samples: int = 64
    feature_impact_max_origins: int = 24
    background_k: int = 50

    @classmethod
    def load(cls, path: str | None = None, env: dict | None = None) -> "ServiceConfig":
        env = os.environ if env is None else env
        values = {}
        if path and os.path.exists(path):
            with open(path) as f:
                for line in f:
                    line = line.strip()
                    if not line or line.startswith("#") or "=" not in line:
                        continue
                    key, _, raw = line.partition("=")
                    values[key.strip()] = raw.strip()
        for f_ in fields(cls):
            env_key = f"MOBISEG_{f_.name.upper()}"
            if env_key in env:
                values[f_.name] = env[env_key]
        from typing import get_type_hints

        hints = get_type_hints(cls)
        kwargs = {}
        for f_ in fields(cls):
            if f_.name in values:
                kwargs[f_.name] = hints[f_.name](values[f_.name])
        return cls(**kwargs)

    def to_json_dict(self):
        return {f_.name: getattr(self, f_.name) for f_ in fields(self)}
