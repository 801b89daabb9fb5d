"""Run configuration and provider wiring.

Precedence is flags over config file over defaults. Credentials are
named in the config by environment variable and read only from the
environment; a remote backend with a missing credential fails before
any work starts.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

from . import embeddings as emb
from .errors import ConfigError
from .gateway import Gateway, HttpChatProvider, MockProvider
from .store import Store


@dataclass
class ChatSettings:
    backend: str = "mock"  # mock | remote
    endpoint: str = ""
    model: str = ""
    credential_env: str = "STORYALIGN_CHAT_KEY"
    fixtures_dir: str = ""
    max_attempts: int = 3
    max_in_flight: int = 4
    max_tokens: int = 2048


@dataclass
class EmbeddingSettings:
    backend: str = "hash"  # hash | file | remote
    endpoint: str = ""
    model: str = emb.DEFAULT_MODEL_ID
    credential_env: str = "STORYALIGN_EMBED_KEY"
    vectors_file: str = ""
    dim: int = 64


@dataclass
class RunConfig:
    store_root: str = "store"
    rng_seed: int = 0
    chat: ChatSettings = field(default_factory=ChatSettings)
    embedding: EmbeddingSettings = field(default_factory=EmbeddingSettings)
    beam_arn: int = 3
    beam_mcq: int = 2

    def default_beam(self, schema: str) -> int:
        return self.beam_arn if schema == "arn" else self.beam_mcq


def _apply(obj: Any, data: Mapping[str, Any], context: str) -> None:
    known = {f.name: f for f in fields(obj)}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown config field {context}{key!r}")
        current = getattr(obj, key)
        if isinstance(current, (ChatSettings, EmbeddingSettings)):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config field {context}{key!r} must be an object")
            _apply(current, value, f"{context}{key}.")
        else:
            setattr(obj, key, value)


def load_config(path: Path | str | None = None, **overrides: Any) -> RunConfig:
    cfg = RunConfig()
    if path is not None:
        try:
            with Path(path).open(encoding="utf-8") as fh:
                data = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(data, Mapping):
            raise ConfigError("config file must hold a JSON object")
        _apply(cfg, data, "")
    for key, value in overrides.items():
        if value is None:
            continue
        _apply(cfg, {key: value}, "")
    return cfg


def _credential(env_name: str, what: str) -> str:
    value = os.environ.get(env_name, "")
    if not value:
        raise ConfigError(f"{what} requires credential in environment variable {env_name}")
    return value


def build_store(cfg: RunConfig) -> Store:
    return Store(cfg.store_root)


def build_gateway(cfg: RunConfig, store: Store) -> Gateway:
    chat = cfg.chat
    if chat.backend == "mock":
        if not chat.fixtures_dir:
            raise ConfigError("mock chat backend needs chat.fixtures_dir")
        provider = MockProvider(Path(chat.fixtures_dir))
    elif chat.backend == "remote":
        if not chat.endpoint or not chat.model:
            raise ConfigError("remote chat backend needs chat.endpoint and chat.model")
        provider = HttpChatProvider(chat.endpoint, chat.model, _credential(chat.credential_env, "remote chat backend"))
    else:
        raise ConfigError(f"unknown chat backend {chat.backend!r}")
    return Gateway(
        provider,
        max_in_flight=chat.max_in_flight,
        run_log_path=store.run_log_path(),
        max_attempts=chat.max_attempts,
    )


def build_embedder(cfg: RunConfig, store: Store) -> emb.EmbeddingProvider:
    settings = cfg.embedding
    if settings.backend == "hash":
        backend = emb.HashProjectionBackend(dim=settings.dim)
        model_id = f"hash-{settings.dim}"
    elif settings.backend == "file":
        if not settings.vectors_file:
            raise ConfigError("file embedding backend needs embedding.vectors_file")
        backend = emb.FileVectorBackend(Path(settings.vectors_file))
        model_id = settings.model
    elif settings.backend == "remote":
        if not settings.endpoint:
            raise ConfigError("remote embedding backend needs embedding.endpoint")
        backend = emb.HttpEmbeddingBackend(
            settings.endpoint, settings.model, _credential(settings.credential_env, "remote embedding backend")
        )
        model_id = settings.model
    else:
        raise ConfigError(f"unknown embedding backend {settings.backend!r}")
    return emb.EmbeddingProvider(backend, model_id=model_id, cache_path=store.embedding_cache_path(model_id))
