"""
Content hashing, stage caching and run-directory locking.

A pipeline stage records the hashes of its inputs and outputs under
<out>/stages/<stage>.json. Rerunning the stage is skipped when the input
hashes are unchanged and the recorded outputs still hash the same.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from types import TracebackType
from typing import Any, Dict, List, Optional, Sequence, Type, Union

from .corpus import LabeledSentence, write_conll
from .errors import RunLocked

logger = logging.getLogger(__name__)

STAGE_IDS = {"train-teacher": 1, "project": 3, "finetune": 4, "evaluate": 5}
LOCK_FILE = ".lock"


def hash_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_file(path: Union[str, Path]) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def hash_json(obj: Any) -> str:
    return hash_bytes(canonical_json(obj).encode("utf-8"))


def hash_sentences(sentences: Sequence[LabeledSentence]) -> str:
    """Hash of the CoNLL rendering, so equal datasets hash equal however stored."""
    return hash_bytes(write_conll(sentences).encode("utf-8"))


@dataclass
class StageArtifact:
    stage: str
    stage_id: int
    content_hash: str
    timestamp: str
    input_hashes: Dict[str, str] = field(default_factory=dict)
    outputs: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StageArtifact":
        return cls(**data)


def _outputs_hash(paths: Sequence[Path]) -> str:
    return hash_json({str(p): hash_file(p) for p in sorted(paths)})


class StageCache:
    """Stage records kept under <out_dir>/stages."""

    def __init__(self, out_dir: Union[str, Path]):
        self.dir = Path(out_dir) / "stages"

    def _path(self, stage: str) -> Path:
        return self.dir / f"{stage}.json"

    def load(self, stage: str) -> Optional[StageArtifact]:
        path = self._path(stage)
        if not path.exists():
            return None
        try:
            return StageArtifact.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (ValueError, TypeError):
            logger.warning("ignoring unreadable stage record %s", path)
            return None

    def is_fresh(self, stage: str, input_hashes: Dict[str, str]) -> bool:
        artifact = self.load(stage)
        if artifact is None or artifact.input_hashes != input_hashes:
            return False
        outputs = [Path(p) for p in artifact.outputs]
        if not all(p.exists() for p in outputs):
            return False
        return _outputs_hash(outputs) == artifact.content_hash

    def record(
        self, stage: str, input_hashes: Dict[str, str], outputs: Sequence[Path]
    ) -> StageArtifact:
        artifact = StageArtifact(
            stage=stage,
            stage_id=STAGE_IDS.get(stage, 0),
            content_hash=_outputs_hash(outputs),
            timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            input_hashes=dict(input_hashes),
            outputs=[str(p) for p in outputs],
        )
        self.dir.mkdir(parents=True, exist_ok=True)
        self._path(stage).write_text(
            json.dumps(artifact.to_dict(), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return artifact


class RunLock:
    """
    Exclusive ownership of a run directory for one process.

    Usage:
        with RunLock(out_dir):
            ...
    """

    def __init__(self, run_dir: Union[str, Path]):
        self.path = Path(run_dir) / LOCK_FILE
        self._held = False

    def acquire(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(str(self.path), os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RunLocked(str(self.path)) from None
        with os.fdopen(fd, "w") as handle:
            handle.write(f"{os.getpid()}\n")
        self._held = True

    def release(self) -> None:
        if self._held:
            self.path.unlink()
            self._held = False

    def __enter__(self) -> "RunLock":
        self.acquire()
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> None:
        self.release()
