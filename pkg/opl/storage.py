"""JSON-lines run records and the counts-table cache."""

import hashlib
import json
import logging
import threading
from pathlib import Path
from typing import List, Optional

from opl.exact import CountsTable
from opl.models import RunRecord

logger = logging.getLogger(__name__)


class StorageError(Exception):
    """Corrupt or unreadable stored data."""

    pass


class RecordStore:
    """Append-only JSON-lines file of RunRecords."""

    _lock = threading.Lock()

    def __init__(self, path: Path):
        """Store at path, creating its parent directory."""
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)

    def append(self, record: RunRecord) -> None:
        """Append one record as a JSON line."""
        line = json.dumps(record.to_dict(), sort_keys=True)
        with self._lock, open(self.path, "a") as f:
            f.write(line + "\n")
        logger.debug("Appended %s record to %s", record.command, self.path)

    def load_records(self) -> List[RunRecord]:
        """All records in file order."""
        if not self.path.exists():
            return []
        records = []
        with open(self.path) as f:
            for number, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(RunRecord.from_dict(json.loads(line)))
                except (ValueError, TypeError, KeyError) as e:
                    raise StorageError(f"{self.path}:{number}: malformed record: {e}") from e
        return records

    def count(self) -> int:
        """Number of stored records."""
        return len(self.load_records())


def _checksum(payload: dict) -> str:
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


class CountsCache:
    """One counts-n{n}.json per n, each with a SHA-256 of its table."""

    def __init__(self, cache_dir: Path):
        """Cache rooted at cache_dir, created on first save."""
        self.cache_dir = Path(cache_dir)

    def path_for(self, n: int) -> Path:
        """Cache file for n."""
        return self.cache_dir / f"counts-n{n}.json"

    def save(self, table: CountsTable) -> Path:
        """Write the table with its checksum."""
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        payload = table.to_dict()
        path = self.path_for(table.n)
        with open(path, "w") as f:
            json.dump({"checksum": _checksum(payload), "table": payload}, f)
        logger.info("Cached counts for n=%d at %s", table.n, path)
        return path

    def load(self, n: int) -> Optional[CountsTable]:
        """Verified table for n, or None when not cached."""
        path = self.path_for(n)
        if not path.exists():
            return None
        try:
            with open(path) as f:
                data = json.load(f)
            payload = data["table"]
            expected = data["checksum"]
        except (ValueError, KeyError, TypeError) as e:
            raise StorageError(f"Unreadable cache file {path}: {e}") from e
        if _checksum(payload) != expected:
            raise StorageError(f"Checksum mismatch in {path}")
        table = CountsTable.from_dict(payload)
        if table.n != n:
            raise StorageError(f"{path} holds counts for n={table.n}")
        logger.debug("Loaded cached counts for n=%d", n)
        return table

    def cached(self) -> List[int]:
        """Values of n with a cache file."""
        if not self.cache_dir.exists():
            return []
        found = []
        for path in self.cache_dir.glob("counts-n*.json"):
            suffix = path.stem[len("counts-n"):]
            if suffix.isdigit():
                found.append(int(suffix))
        return sorted(found)
