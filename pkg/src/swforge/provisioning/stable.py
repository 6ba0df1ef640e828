"""Remembers what each user was given so a reconnect gets the same again.

Records are appended to a JSON-lines file (one object per commit: user,
sc_id, assignment, time); the newest record for a key wins.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass
from pathlib import Path


class StablePolicy(enum.Enum):
    Stable = "stable"
    Temporary = "temporary"
    CrossSc = "cross-sc"


@dataclass(frozen=True)
class Assignment:
    link_prefix_v6: str | None = None
    endpoint_v4: str | None = None
    delegated_v6: str | None = None
    delegated_v4: str | None = None
    interface_id: int | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class StableStore:
    def __init__(self, path: str | Path | None = None, policy: StablePolicy | str = StablePolicy.Stable):
        self.path = Path(path) if path is not None else None
        self.policy = StablePolicy(policy)
        self._by_key: dict[tuple[str, str], Assignment] = {}
        self._by_user: dict[str, Assignment] = {}
        if self.path is not None and self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._remember(rec["user"], rec["sc_id"], Assignment(**rec["assignment"]))

    def _remember(self, user: str, sc_id: str, a: Assignment) -> None:
        self._by_key[(user, sc_id)] = a
        self._by_user[user] = a

    def lookup(self, user: str, sc_id: str) -> Assignment | None:
        if self.policy is StablePolicy.Temporary:
            return None
        if self.policy is StablePolicy.CrossSc:
            return self._by_user.get(user)
        return self._by_key.get((user, sc_id))

    def commit(self, user: str, sc_id: str, assignment: Assignment, time: float = 0.0) -> Assignment:
        self._remember(user, sc_id, assignment)
        if self.path is not None:
            rec = {"user": user, "sc_id": sc_id, "assignment": assignment.to_dict(), "time": time}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        return assignment
