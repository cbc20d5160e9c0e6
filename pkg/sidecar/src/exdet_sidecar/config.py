"""Sidecar configuration: listen address, role models, device, timeout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

ROLES = ("features", "match", "detect")


@dataclass
class SidecarConfig:
    """Parsed service configuration.

    Each role maps to a model spec dict ({"type": ..., **params}) or None,
    in which case the corresponding endpoint answers 501.
    """

    host: str = "127.0.0.1"
    port: int = 8765
    features: dict | None = field(
        default_factory=lambda: {"type": "block-projection", "stride": 16, "dim": 32, "seed": 0}
    )
    match: dict | None = field(default_factory=lambda: {"type": "orb", "max_features": 1000})
    detect: dict | None = field(default_factory=lambda: {"type": "color-blob"})
    device: str = "cpu"
    timeout_s: float = 30.0

    @classmethod
    def from_file(cls, path: "str | Path") -> "SidecarConfig":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise ValueError("sidecar config must be a JSON object")
        cfg = cls()
        if "listen" in doc:
            host, _, port = str(doc["listen"]).rpartition(":")
            cfg.host = host or "127.0.0.1"
            cfg.port = int(port)
        for role in ROLES:
            if role in doc:
                value = doc[role]
                if value is not None and not isinstance(value, dict):
                    raise ValueError(f"role {role!r} must be an object or null")
                setattr(cfg, role, value)
        cfg.device = str(doc.get("device", cfg.device))
        cfg.timeout_s = float(doc.get("timeout_s", cfg.timeout_s))
        return cfg
