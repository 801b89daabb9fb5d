"""On-disk stores: representations, embedding caches, run logs, reports.

Representation files are written to a temp file and renamed into place,
so readers never observe a partial write.
"""

from __future__ import annotations

import json
import os
import re
import tempfile
from pathlib import Path

from .model import Representation, representation_from_dict, representation_to_dict

_UNSAFE = re.compile(r"[^A-Za-z0-9._:+-]")


def _safe_name(name: str) -> str:
    return _UNSAFE.sub("_", name)


class Store:
    def __init__(self, root: Path | str):
        self.root = Path(root)

    @property
    def representations_dir(self) -> Path:
        return self.root / "representations"

    @property
    def embeddings_dir(self) -> Path:
        return self.root / "embeddings"

    @property
    def logs_dir(self) -> Path:
        return self.root / "logs"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    def representation_path(self, story_id: str) -> Path:
        return self.representations_dir / f"{_safe_name(story_id)}.json"

    def embedding_cache_path(self, model_id: str) -> Path:
        return self.embeddings_dir / f"{_safe_name(model_id)}.jsonl"

    def run_log_path(self) -> Path:
        return self.logs_dir / "requests.jsonl"

    def save_representation(self, rep: Representation) -> Path:
        path = self.representation_path(rep.story_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(representation_to_dict(rep), ensure_ascii=False, indent=2, sort_keys=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload + "\n")
            os.replace(tmp, path)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)
        return path

    def load_representation(self, story_id: str) -> Representation | None:
        path = self.representation_path(story_id)
        if not path.is_file():
            return None
        with path.open(encoding="utf-8") as fh:
            return representation_from_dict(json.load(fh))

    def iter_representation_ids(self) -> list[str]:
        if not self.representations_dir.is_dir():
            return []
        return sorted(p.stem for p in self.representations_dir.glob("*.json"))

    def cache_stats(self) -> dict:
        reps = len(self.iter_representation_ids())
        embeddings = {}
        if self.embeddings_dir.is_dir():
            for path in sorted(self.embeddings_dir.glob("*.jsonl")):
                with path.open(encoding="utf-8") as fh:
                    embeddings[path.stem] = sum(1 for line in fh if line.strip())
        return {"representations": reps, "embeddings": embeddings}

    def clear_cache(self, representations: bool = True, embeddings: bool = True) -> None:
        if representations and self.representations_dir.is_dir():
            for path in self.representations_dir.glob("*.json"):
                path.unlink()
        if embeddings and self.embeddings_dir.is_dir():
            for path in self.embeddings_dir.glob("*.jsonl"):
                path.unlink()
