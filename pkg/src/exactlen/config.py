"""YAML run configuration: backends, decoding parameters, worker count.

See ``docs/config.example.yaml`` in the repository for a commented example.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError
from .gateway import BackendCaps, DecodingParams, HttpChatBackend, ModelBackend, RetryPolicy, caps_for_model
from .mocks import load_script
from .tokenizer import CjkPolicy

__all__ = ["RunConfig", "load_config", "build_backend"]

_BACKEND_KEYS = {"id", "kind", "endpoint", "model", "secret_env", "timeout", "max_tokens_field", "headers",
                 "max_concurrency", "requests_per_second", "max_attempts", "system_prompt",
                 "max_completion_tokens", "script", "seed"}
_PARAM_KEYS = {"temperature", "top_p", "max_completion_tokens", "seed", "extra"}


@dataclass
class RunConfig:
    backends: dict[str, dict] = field(default_factory=dict)
    params: DecodingParams = field(default_factory=DecodingParams)
    workers: int = 4
    cjk_policy: CjkPolicy = CjkPolicy.INCLUDE_PUNCTUATION
    judge: str | None = None

    def backend(self, backend_id: str) -> ModelBackend:
        if backend_id not in self.backends:
            known = ", ".join(sorted(self.backends)) or "none"
            raise ConfigError(f"unknown backend {backend_id!r} (configured: {known})")
        return build_backend(self.backends[backend_id])


def build_backend(spec: dict) -> ModelBackend:
    unknown = set(spec) - _BACKEND_KEYS
    if unknown:
        raise ConfigError(f"backend {spec.get('id')!r}: unknown keys {sorted(unknown)}")
    if "id" not in spec:
        raise ConfigError("every backend needs an id")
    kind = spec.get("kind", "http")
    common = {"max_concurrency": spec.get("max_concurrency", 8),
              "requests_per_second": spec.get("requests_per_second"),
              "retry": RetryPolicy(max_attempts=spec.get("max_attempts", 5)),
              "system_prompt": spec.get("system_prompt")}
    if "max_completion_tokens" in spec:
        common["caps"] = BackendCaps(max_completion_tokens=int(spec["max_completion_tokens"]))
    elif spec.get("model"):
        common["caps"] = caps_for_model(spec["model"])
    if kind == "mock":
        if "script" not in spec:
            raise ConfigError(f"mock backend {spec['id']!r} needs a script")
        return load_script(spec["script"], id=spec["id"], seed=spec.get("seed", 0), **common)
    if kind != "http":
        raise ConfigError(f"backend {spec['id']!r}: kind must be 'http' or 'mock', got {kind!r}")
    return HttpChatBackend(
        spec["id"], spec.get("endpoint", ""), model=spec.get("model"), secret_env=spec.get("secret_env"),
        timeout=float(spec.get("timeout", 600)), max_tokens_field=spec.get("max_tokens_field", "max_tokens"),
        headers=spec.get("headers"), **common,
    )


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")

    backends = {}
    for spec in data.get("backends") or []:
        if not isinstance(spec, dict) or "id" not in spec:
            raise ConfigError(f"{path}: every backend entry needs an id")
        if spec["id"] in backends:
            raise ConfigError(f"{path}: duplicate backend id {spec['id']!r}")
        backends[spec["id"]] = spec

    raw_params = data.get("params") or {}
    unknown = set(raw_params) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown params {sorted(unknown)}")
    try:
        params = DecodingParams(**raw_params)
        policy = CjkPolicy(data.get("cjk_policy", CjkPolicy.INCLUDE_PUNCTUATION.value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return RunConfig(backends, params, int(data.get("workers", 4)), policy, data.get("judge"))
