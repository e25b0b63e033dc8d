"""Plain-text index over a results directory."""

from __future__ import annotations

import hashlib
from pathlib import Path

from ..errors import DataError

__all__ = ["emit_report", "REPORT_NAME"]

REPORT_NAME = "report.md"
_CONFIG_FILES = ("dataset.cfg", "manifest.txt", "experiment.cfg")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def emit_report(root: str | Path) -> Path:
    """Write ``report.md`` listing every CSV and SVG under ``root`` once.

    Each entry carries a content hash; config files found on the way are
    listed with their hash and recorded seed. Raises DataError (and writes
    nothing) when no CSV exists.
    """
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"results directory {root} does not exist")
    csvs = sorted(p for p in root.rglob("*.csv") if p.is_file())
    if not csvs:
        raise DataError(f"no result CSVs under {root}")
    svgs = sorted(p for p in root.rglob("*.svg") if p.is_file())
    configs = sorted(p for p in root.rglob("*") if p.name in _CONFIG_FILES and p.is_file())
    lines = [f"# Results index: {root.name}", "", "## Tables", ""]
    lines += [f"- [{p.relative_to(root).as_posix()}]({p.relative_to(root).as_posix()}) sha256:{_sha(p)}"
              for p in csvs]
    lines += ["", "## Plots", ""]
    lines += [f"- [{p.relative_to(root).as_posix()}]({p.relative_to(root).as_posix()}) sha256:{_sha(p)}"
              for p in svgs] or ["- (none)"]
    lines += ["", "## Configurations", ""]
    for p in configs:
        seed = ""
        for line in p.read_text(encoding="utf-8").splitlines():
            if line.startswith("seed="):
                seed = f" seed={line[5:]}"
                break
        lines.append(f"- {p.relative_to(root).as_posix()} sha256:{_sha(p)}{seed}")
    if not configs:
        lines.append("- (none)")
    out = root / REPORT_NAME
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
