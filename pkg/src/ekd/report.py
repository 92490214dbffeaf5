"""Result tables keyed by (test set, model, LM on/off), rendered as an
aligned text table and a machine-readable TSV."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .wer import WerBreakdown


@dataclass(frozen=True)
class CellKey:
    test_set: str
    model: str
    lm_on: bool


@dataclass
class CellResult:
    breakdown: WerBreakdown | None   # None marks a failed / missing cell
    status: str = "ok"

    @property
    def wer_text(self) -> str:
        if self.breakdown is None or not self.breakdown.wer_defined:
            return "---"
        return f"{100.0 * self.breakdown.wer:.2f}"


class ResultTable:
    """Ordered mapping of evaluation cells; every configured cell is present,
    either with a breakdown or explicitly marked failed."""

    def __init__(self) -> None:
        self.cells: dict[CellKey, CellResult] = {}

    def set(self, test_set: str, model: str, lm_on: bool, breakdown: WerBreakdown | None,
            status: str = "ok") -> None:
        self.cells[CellKey(test_set, model, lm_on)] = CellResult(breakdown, status)

    def get(self, test_set: str, model: str, lm_on: bool) -> CellResult:
        return self.cells[CellKey(test_set, model, lm_on)]

    def ordered_keys(self) -> list[CellKey]:
        return sorted(self.cells, key=lambda k: (k.test_set, k.model, k.lm_on))

    def to_tsv(self) -> str:
        lines = ["test_set\tmodel\tlm\twer\tsubstitutions\tinsertions\tdeletions\treference_words\tstatus"]
        for key in self.ordered_keys():
            cell = self.cells[key]
            b = cell.breakdown
            if b is None:
                lines.append(f"{key.test_set}\t{key.model}\t{'on' if key.lm_on else 'off'}"
                             f"\t\t\t\t\t\t{cell.status}")
            else:
                lines.append(
                    f"{key.test_set}\t{key.model}\t{'on' if key.lm_on else 'off'}"
                    f"\t{b.wer!r}\t{b.substitutions}\t{b.insertions}\t{b.deletions}"
                    f"\t{b.reference_words}\t{cell.status}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        test_sets = sorted({k.test_set for k in self.cells})
        models = sorted({k.model for k in self.cells})
        width = max([len(m) for m in models] + [5])
        lines = []
        for ts in test_sets:
            lines.append(f"== test set: {ts} (WER %, LM off / LM on)")
            for m in models:
                off = self.cells.get(CellKey(ts, m, False))
                on = self.cells.get(CellKey(ts, m, True))
                if off is None and on is None:
                    continue
                left = off.wer_text if off else "n/a"
                right = on.wer_text if on else "n/a"
                lines.append(f"  {m:<{width}}  {left:>8}  {right:>8}")
            lines.append("")
        return "\n".join(lines)

    @classmethod
    def from_tsv(cls, text: str) -> "ResultTable":
        table = cls()
        lines = [ln for ln in text.splitlines() if ln]
        for ln in lines[1:]:
            parts = ln.split("\t")
            test_set, model, lm, wer_s, sub, ins, dele, refw, status = parts
            if wer_s == "":
                table.set(test_set, model, lm == "on", None, status)
            else:
                table.set(test_set, model, lm == "on",
                          WerBreakdown(int(sub), int(ins), int(dele), int(refw)), status)
        return table

    @classmethod
    def from_cell_files(cls, paths: list[Path]) -> "ResultTable":
        table = cls()
        for p in sorted(paths):
            sub = cls.from_tsv(Path(p).read_text())
            table.cells.update(sub.cells)
        return table


def summarize(per_seed: dict[int, ResultTable]) -> str:
    """Cross-seed mean/std TSV; only cells present in every seed are averaged."""
    seeds = sorted(per_seed)
    keys = set.intersection(*[set(per_seed[s].cells) for s in seeds]) if seeds else set()
    lines = ["test_set\tmodel\tlm\tmean_wer\tstd_wer\tn_seeds\tper_seed_wer"]
    for key in sorted(keys, key=lambda k: (k.test_set, k.model, k.lm_on)):
        wers = []
        for s in seeds:
            b = per_seed[s].cells[key].breakdown
            if b is None or not b.wer_defined:
                wers = None
                break
            wers.append(b.wer)
        if wers is None:
            lines.append(f"{key.test_set}\t{key.model}\t{'on' if key.lm_on else 'off'}"
                         f"\t\t\t0\tfailed")
            continue
        arr = np.asarray(wers)
        per_seed_text = ",".join(repr(w) for w in wers)
        lines.append(f"{key.test_set}\t{key.model}\t{'on' if key.lm_on else 'off'}"
                     f"\t{float(arr.mean())!r}\t{float(arr.std())!r}\t{len(wers)}"
                     f"\t{per_seed_text}")
    return "\n".join(lines) + "\n"
