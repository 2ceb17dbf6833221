"""Count tables of flag classes shared by the sampler and the enumerator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .flags import FlagClass


@dataclass
class EmpiricalDistribution:
    counts: dict[str, int] = field(default_factory=dict)
    uncertified_count: int = 0
    oversize_count: int = 0
    total: int = 0
    classes: dict[str, FlagClass] = field(default_factory=dict, repr=False, compare=False)

    def add(self, flag: FlagClass, n: int = 1):
        key = flag.canonical_label
        self.counts[key] = self.counts.get(key, 0) + n
        self.classes.setdefault(key, flag)
        self.total += n

    def add_uncertified(self, n: int = 1):
        self.uncertified_count += n
        self.total += n

    def add_oversize(self, n: int = 1):
        self.oversize_count += n
        self.total += n

    def merge(self, other: "EmpiricalDistribution") -> "EmpiricalDistribution":
        out = EmpiricalDistribution(
            dict(self.counts),
            self.uncertified_count + other.uncertified_count,
            self.oversize_count + other.oversize_count,
            self.total + other.total,
            {**self.classes, **other.classes},
        )
        for key, n in other.counts.items():
            out.counts[key] = out.counts.get(key, 0) + n
        return out

    def check(self):
        assert sum(self.counts.values()) + self.uncertified_count + self.oversize_count == self.total

    def frequency(self, label: str):
        from fractions import Fraction

        return Fraction(self.counts.get(label, 0), self.total)

    def to_dict(self) -> dict:
        self.check()
        return {
            "counts": {key: self.counts[key] for key in sorted(self.counts)},
            "uncertified_count": self.uncertified_count,
            "oversize_count": self.oversize_count,
            "total": self.total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "EmpiricalDistribution":
        out = cls(
            {str(k): int(v) for k, v in data["counts"].items()},
            int(data["uncertified_count"]),
            int(data.get("oversize_count", 0)),
            int(data["total"]),
        )
        out.check()
        return out
