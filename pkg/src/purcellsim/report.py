"""Run reports: ordered key=value summaries with stable digests.

A report is a list of named entries, each a flat mapping of keys to
scalars. Rendering is canonical (insertion order, %.10g floats) so the
sha256 digest identifies the numerical outcome of a run. Wall-clock
time is carried for the reader but excluded from the digest, which
must be reproducible from config, seed, and software version alone.
"""

import hashlib
import os
import tempfile
from dataclasses import dataclass, field

from .constants import VERSION


@dataclass
class ReportEntry:
    """One analysis block: a name plus ordered key/value results."""

    name: str
    values: dict

    def formatted(self) -> list[str]:
        lines = [f"[{self.name}]"]
        for key, value in self.values.items():
            lines.append(f"{key} = {_format(value)}")
        return lines


@dataclass
class RunReport:
    """Summary of one run: provenance plus per-analysis entries."""

    config_digest: str
    seed: int
    version: str = VERSION
    entries: list[ReportEntry] = field(default_factory=list)
    wall_clock_s: float = 0.0

    def add(self, name: str, **values) -> ReportEntry:
        entry = ReportEntry(name, dict(values))
        self.entries.append(entry)
        return entry

    def entry(self, name: str) -> ReportEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def _stable_lines(report: RunReport) -> list[str]:
    lines = [
        f"version = {report.version}",
        f"config_digest = {report.config_digest}",
        f"seed = {report.seed}",
    ]
    for entry in report.entries:
        lines.extend(entry.formatted())
    return lines


def report_digest(report: RunReport) -> str:
    """Digest over everything except wall-clock time."""
    text = "\n".join(_stable_lines(report))
    return hashlib.sha256(text.encode()).hexdigest()


def render_report(report: RunReport) -> str:
    lines = _stable_lines(report)
    lines.append(f"wall_clock_s = {report.wall_clock_s:.3f}")
    lines.append(f"report_digest = {report_digest(report)}")
    return "\n".join(lines) + "\n"


def write_text_atomic(path, text: str) -> None:
    """Write via a sibling temp file and rename, never leaving partials."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_bytes_atomic(path, payload: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_table_atomic(path, header: list[str], rows) -> None:
    """CSV table with a one-line header; floats rendered as %.10g."""
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_format(v) for v in row))
    write_text_atomic(path, "\n".join(lines) + "\n")
