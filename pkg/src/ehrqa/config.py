"""Service configuration: YAML file + environment overrides + defaults.

Precedence is env > file > defaults. Secrets never live in the file; the
config names the environment variable holding the credential.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from .llm import PROFILES
from .notes import ChunkingConfig


@dataclass
class DatabaseConfig:
    path: Path
    profile: str = "fixture"
    notes: Optional[Path] = None


@dataclass
class BackendConfig:
    kind: str = "scripted"  # scripted | remote
    script: Optional[Path] = None
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "EHRQA_API_KEY"
    cost_per_1k_tokens: float = 0.0
    transport_retries: int = 0


@dataclass
class EmbeddingConfig:
    kind: str = "hash"  # hash | remote
    dimension: int = 64
    endpoint: str = ""
    model: str = ""
    api_key_env: str = "EHRQA_API_KEY"


@dataclass
class ServiceConfig:
    databases: dict[str, DatabaseConfig] = field(default_factory=dict)
    backend: BackendConfig = field(default_factory=BackendConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    k_tables: int = 10
    k_chunks: int = 10
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    max_attempts: int = 3
    timeout_s: float = 120.0
    bind_host: str = "127.0.0.1"
    bind_port: int = 8080
    trace_store_path: Optional[Path] = None
    description_cache_path: Optional[Path] = None
    index_store_dir: Optional[Path] = None
    static_dir: Optional[Path] = None

    def validate(self) -> None:
        if self.k_tables < 1 or self.k_chunks < 1:
            raise ValueError("retrieval k values must be >= 1")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        for db_id, db in self.databases.items():
            if db.profile not in PROFILES:
                raise ValueError(f"database {db_id!r}: unknown profile {db.profile!r}")
            if not db.path.exists():
                raise ValueError(f"database {db_id!r}: path does not exist: {db.path}")
            if db.notes is not None and not db.notes.exists():
                raise ValueError(f"database {db_id!r}: notes file does not exist: {db.notes}")
        if self.backend.kind == "scripted" and self.backend.script is not None and not self.backend.script.exists():
            raise ValueError(f"script file does not exist: {self.backend.script}")


# env var -> (section, key); values parse as their target type
_ENV_OVERRIDES = {
    "EHRQA_BACKEND_KIND": ("backend", "kind"),
    "EHRQA_BACKEND_SCRIPT": ("backend", "script"),
    "EHRQA_BACKEND_ENDPOINT": ("backend", "endpoint"),
    "EHRQA_BACKEND_MODEL": ("backend", "model"),
    "EHRQA_EMBEDDING_KIND": ("embedding", "kind"),
    "EHRQA_K_TABLES": (None, "k_tables"),
    "EHRQA_K_CHUNKS": (None, "k_chunks"),
    "EHRQA_MAX_ATTEMPTS": (None, "max_attempts"),
    "EHRQA_TIMEOUT_S": (None, "timeout_s"),
}


def load_config(path: Optional[str | Path] = None, env: Optional[dict] = None) -> ServiceConfig:
    """Build a ServiceConfig with env > file > defaults precedence."""
    env = os.environ if env is None else env
    data: dict = {}
    base = Path(".")
    if path is not None:
        base = Path(path).parent
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}

    def _p(value) -> Optional[Path]:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else base / p

    databases = {}
    for db_id, db in (data.get("databases") or {}).items():
        databases[db_id] = DatabaseConfig(
            path=_p(db["path"]),
            profile=db.get("profile", "fixture"),
            notes=_p(db.get("notes")),
        )
    backend_data = data.get("backend") or {}
    backend = BackendConfig(
        kind=backend_data.get("kind", "scripted"),
        script=_p(backend_data.get("script")),
        endpoint=backend_data.get("endpoint", ""),
        model=backend_data.get("model", ""),
        api_key_env=backend_data.get("api_key_env", "EHRQA_API_KEY"),
        cost_per_1k_tokens=float(backend_data.get("cost_per_1k_tokens", 0.0)),
        transport_retries=int(backend_data.get("transport_retries", 0)),
    )
    embedding_data = data.get("embedding") or {}
    embedding = EmbeddingConfig(
        kind=embedding_data.get("kind", "hash"),
        dimension=int(embedding_data.get("dimension", 64)),
        endpoint=embedding_data.get("endpoint", ""),
        model=embedding_data.get("model", ""),
        api_key_env=embedding_data.get("api_key_env", "EHRQA_API_KEY"),
    )
    retrieval = data.get("retrieval") or {}
    chunking_data = data.get("chunking") or {}
    execution = data.get("execution") or {}
    service = data.get("service") or {}
    config = ServiceConfig(
        databases=databases,
        backend=backend,
        embedding=embedding,
        k_tables=int(retrieval.get("k_tables", 10)),
        k_chunks=int(retrieval.get("k_chunks", 10)),
        chunking=ChunkingConfig(
            chunk_size_tokens=int(chunking_data.get("chunk_size_tokens", 256)),
            overlap_tokens=int(chunking_data.get("overlap_tokens", 32)),
            sentence_aware=bool(chunking_data.get("sentence_aware", True)),
        ),
        max_attempts=int(execution.get("max_attempts", 3)),
        timeout_s=float(execution.get("timeout_s", 120.0)),
        bind_host=service.get("bind_host", "127.0.0.1"),
        bind_port=int(service.get("bind_port", 8080)),
        trace_store_path=_p(service.get("trace_store")),
        description_cache_path=_p(service.get("description_cache")),
        index_store_dir=_p(service.get("index_store")),
        static_dir=_p(service.get("static_dir")),
    )

    for var, (section, key) in _ENV_OVERRIDES.items():
        if var not in env:
            continue
        raw = env[var]
        target = config if section is None else getattr(config, section)
        current = getattr(target, key)
        if key == "script":
            setattr(target, key, Path(raw))
        elif isinstance(current, bool):
            setattr(target, key, raw.lower() in ("1", "true", "yes"))
        elif isinstance(current, int):
            setattr(target, key, int(raw))
        elif isinstance(current, float):
            setattr(target, key, float(raw))
        else:
            setattr(target, key, raw)
    return config
