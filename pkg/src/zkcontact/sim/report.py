"""Stable text and delimited renderings of simulation metrics."""

from __future__ import annotations

from .runner import SimMetrics

COLUMNS = ("agent", "order", "notify_epoch", "latency_epochs")


def report(metrics: SimMetrics, fmt: str = "text") -> str:
    rows = [(n.agent, n.order, n.epoch, n.latency) for n in metrics.latency_table()]
    if fmt in ("csv", "tsv"):
        sep = "," if fmt == "csv" else "\t"
        lines = [sep.join(COLUMNS)] + [sep.join(map(str, r)) for r in rows]
        return "\n".join(lines) + "\n"
    if fmt != "text":
        raise ValueError(f"unknown report format {fmt!r}")
    mode = "transitive" if metrics.transitive else "first-order"
    out = [
        f"scenario: {metrics.scenario}",
        f"mode: {mode}",
        f"scans: {metrics.scans}",
        f"registry entries: {metrics.registry_entries}",
        f"bundles published: {metrics.published}",
        f"duplicates rejected: {metrics.duplicates}",
        f"refused proofs: {len(metrics.refused)}",
        f"unverified matches: {len(metrics.unverified)}",
        "",
    ]
    widths = [max(len(c), *(len(str(r[i])) for r in rows)) if rows else len(c) for i, c in enumerate(COLUMNS)]
    out.append("  ".join(c.ljust(w) for c, w in zip(COLUMNS, widths)).rstrip())
    for r in rows:
        out.append("  ".join(str(v).ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(out) + "\n"
