"""Algorithm-level traffic and flop counters.

Every charge is keyed by (kernel, term): the kernel is the code path that
moved the data, the term is the slot of the iteration cost decomposition
it is booked against.  Words count slow-memory traffic, independent of the
host's caches.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field

# Per-iteration cost decomposition of the fused CG schedule.
TERM_SEM = "vectors_and_geometry"  # CG vectors, geometric stream and w write
TERM_C = "c_weights"  # c reads of the two weighted reductions
TERM_X = "x_update"
TERM_RELOAD = "reduction_reload"  # reload of p, w after gather-scatter
TERM_GS = "gather_scatter"
TERMS = (TERM_SEM, TERM_C, TERM_X, TERM_RELOAD, TERM_GS)

KERNEL_P_UPDATE = "p_update"
KERNEL_OPERATOR = "operator"
KERNEL_GS = "gather_scatter"
KERNEL_REDUCTION = "reduction"
KERNEL_AXPY = "axpy_fused"
KERNELS = (KERNEL_P_UPDATE, KERNEL_OPERATOR, KERNEL_GS, KERNEL_REDUCTION, KERNEL_AXPY)


@dataclass
class Counter:
    words_read: int = 0
    words_written: int = 0
    flops: int = 0

    @property
    def words(self) -> int:
        return self.words_read + self.words_written

    def __iadd__(self, other: "Counter") -> "Counter":
        self.words_read += other.words_read
        self.words_written += other.words_written
        self.flops += other.flops
        return self

    def as_dict(self) -> dict:
        return {"words_read": self.words_read, "words_written": self.words_written,
                "words": self.words, "flops": self.flops}


@dataclass
class Ledger:
    word_bytes: int = 8
    entries: dict = field(default_factory=lambda: defaultdict(Counter))

    def charge(self, kernel: str, term: str, *, read: int = 0, written: int = 0, flops: int = 0) -> None:
        if read < 0 or written < 0 or flops < 0:
            raise ValueError("ledger counters only increase")
        c = self.entries[(kernel, term)]
        c.words_read += int(read)
        c.words_written += int(written)
        c.flops += int(flops)

    def total(self) -> Counter:
        out = Counter()
        for c in self.entries.values():
            out += c
        return out

    def _group(self, pos: int) -> dict[str, Counter]:
        out: dict[str, Counter] = {}
        for key, c in self.entries.items():
            out.setdefault(key[pos], Counter())
            out[key[pos]] += c
        return out

    def by_kernel(self) -> dict[str, Counter]:
        return self._group(0)

    def by_term(self) -> dict[str, Counter]:
        return self._group(1)

    def snapshot(self) -> Counter:
        return self.total()

    @property
    def bytes_moved(self) -> int:
        return self.total().words * self.word_bytes

    def as_dict(self) -> dict:
        return {
            "word_bytes": self.word_bytes,
            "total": self.total().as_dict(),
            "by_kernel": {k: v.as_dict() for k, v in sorted(self.by_kernel().items())},
            "by_term": {k: v.as_dict() for k, v in sorted(self.by_term().items())},
        }
