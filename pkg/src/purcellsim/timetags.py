"""Photon time-tag streams and their on-disk formats.

Events carry the cycle index they were detected in, the channel
(signal or dark), and the tag within the cycle quantized to 1 ns.
Two equivalent persistent forms are provided: a commented CSV and a
compact little-endian binary; both round-trip exactly because the
in-memory tags are already quantized.

CSV layout: '# key=value' metadata lines (sorted by key), then the
column header 'cycle_index,channel,t_ns', then one row per event.

Binary layout: magic 'PTT1', uint16 version, uint32 metadata length,
the same metadata text block in UTF-8, uint64 record count, then
packed 9-byte records (uint32 cycle, uint32 t_ns, uint8 channel).
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .errors import StreamFormatError, ValidationError

MAGIC = b"PTT1"
VERSION = 1

CHANNEL_SIGNAL = 0
CHANNEL_DARK = 1
_CHANNEL_NAMES = {CHANNEL_SIGNAL: "signal", CHANNEL_DARK: "dark"}
_CHANNEL_CODES = {v: k for k, v in _CHANNEL_NAMES.items()}

RECORD_DTYPE = np.dtype([("cycle", "<u4"), ("t_ns", "<u4"), ("channel", "u1")])


@dataclass(eq=False)
class TimeTagStream:
    """Ordered detection events plus run metadata.

    cycles, t_ns and channels are parallel arrays sorted
    lexicographically by (cycle, t_ns, channel). Metadata is a flat
    str->str mapping; standard keys include seed, n_cycles, period_us,
    gate_windows_us, gate_total_us and laser_detuning_ghz.
    """

    cycles: np.ndarray
    t_ns: np.ndarray
    channels: np.ndarray
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.cycles = np.asarray(self.cycles, dtype=np.uint32)
        self.t_ns = np.asarray(self.t_ns, dtype=np.uint32)
        self.channels = np.asarray(self.channels, dtype=np.uint8)
        if not (self.cycles.shape == self.t_ns.shape == self.channels.shape):
            raise ValidationError("event arrays must have matching shapes")
        if self.cycles.ndim != 1:
            raise ValidationError("event arrays must be 1-D")
        key = self.cycles.astype(np.uint64) * (2**32) + self.t_ns
        if key.size > 1 and np.any(key[1:] < key[:-1]):
            raise ValidationError("events must be sorted by (cycle, t_ns)")
        self.metadata = {str(k): str(v) for k, v in self.metadata.items()}

    def __len__(self) -> int:
        return int(self.cycles.size)

    @property
    def n_cycles(self) -> int | None:
        value = self.metadata.get("n_cycles")
        return int(value) if value is not None else None

    @property
    def gate_total_us(self) -> float | None:
        value = self.metadata.get("gate_total_us")
        return float(value) if value is not None else None

    @property
    def period_us(self) -> float | None:
        value = self.metadata.get("period_us")
        return float(value) if value is not None else None

    def channel_counts(self) -> dict[str, int]:
        return {
            name: int(np.count_nonzero(self.channels == code))
            for code, name in _CHANNEL_NAMES.items()
        }

    def detected_rate_hz(self, channel: int | None = None) -> float:
        """Mean detected rate over the run's wall time."""
        n = len(self) if channel is None else int(np.count_nonzero(self.channels == channel))
        if self.n_cycles is None or self.period_us is None:
            raise ValidationError("stream lacks n_cycles/period_us metadata")
        return n / (self.n_cycles * self.period_us * 1e-6)

    def validate_within_gates(self, gate_windows_us) -> None:
        """Check every tag lies in a gate window, with 1 ns rounding slack."""
        if len(self) == 0:
            return
        edges = []
        for a, b in gate_windows_us:
            edges.extend((a * 1e3 - 1.0, b * 1e3 + 1.0))
        idx = np.searchsorted(np.asarray(edges), self.t_ns, side="right")
        if np.any((idx % 2) == 0):
            raise ValidationError("event tag outside every detector window")

    def metadata_block(self) -> str:
        return "".join(f"# {k}={self.metadata[k]}\n" for k in sorted(self.metadata))


def events_equal(a: TimeTagStream, b: TimeTagStream) -> bool:
    return (
        len(a) == len(b)
        and bool(np.all(a.cycles == b.cycles))
        and bool(np.all(a.t_ns == b.t_ns))
        and bool(np.all(a.channels == b.channels))
    )


def save_csv(stream: TimeTagStream, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(stream.metadata_block())
        fh.write("cycle_index,channel,t_ns\n")
        names = np.array([_CHANNEL_NAMES[c] for c in sorted(_CHANNEL_NAMES)])
        chan = names[stream.channels]
        for cyc, ch, t in zip(stream.cycles, chan, stream.t_ns):
            fh.write(f"{cyc},{ch},{t}\n")


def load_csv(path) -> TimeTagStream:
    metadata: dict[str, str] = {}
    cycles: list[int] = []
    chans: list[int] = []
    tags: list[int] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" not in body:
                    raise StreamFormatError(f"line {lineno}: metadata without '='")
                k, v = body.split("=", 1)
                metadata[k.strip()] = v.strip()
                continue
            if line.startswith("cycle_index"):
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise StreamFormatError(f"line {lineno}: expected 3 columns")
            try:
                cycles.append(int(parts[0]))
                chans.append(_CHANNEL_CODES[parts[1]])
                tags.append(int(parts[2]))
            except (ValueError, KeyError) as exc:
                raise StreamFormatError(f"line {lineno}: {exc}") from exc
    return TimeTagStream(
        cycles=np.array(cycles, dtype=np.uint32),
        t_ns=np.array(tags, dtype=np.uint32),
        channels=np.array(chans, dtype=np.uint8),
        metadata=metadata,
    )


def stream_bytes(stream: TimeTagStream) -> bytes:
    """The exact binary serialization, for determinism checks."""
    buf = io.BytesIO()
    meta = stream.metadata_block().encode("utf-8")
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["cycle"] = stream.cycles
    rec["t_ns"] = stream.t_ns
    rec["channel"] = stream.channels
    buf.write(MAGIC)
    buf.write(np.uint16(VERSION).tobytes())
    buf.write(np.uint32(len(meta)).tobytes())
    buf.write(meta)
    buf.write(np.uint64(len(stream)).tobytes())
    buf.write(rec.tobytes())
    return buf.getvalue()


def save_binary(stream: TimeTagStream, path) -> None:
    with open(path, "wb") as fh:
        fh.write(stream_bytes(stream))


def load_binary(path) -> TimeTagStream:
    with open(path, "rb") as fh:
        blob = fh.read()
    off = 0
    if blob[:4] != MAGIC:
        raise StreamFormatError(f"bad magic at offset 0: {blob[:4]!r}")
    off = 4
    version = int(np.frombuffer(blob, dtype="<u2", count=1, offset=off)[0])
    if version != VERSION:
        raise StreamFormatError(f"unsupported version {version} at offset {off}")
    off += 2
    meta_len = int(np.frombuffer(blob, dtype="<u4", count=1, offset=off)[0])
    off += 4
    try:
        meta_text = blob[off : off + meta_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise StreamFormatError(f"bad metadata block at offset {off}: {exc}") from exc
    off += meta_len
    metadata: dict[str, str] = {}
    for line in meta_text.splitlines():
        body = line.lstrip("#").strip()
        if not body:
            continue
        if "=" not in body:
            raise StreamFormatError(f"metadata line without '=': {line!r}")
        k, v = body.split("=", 1)
        metadata[k.strip()] = v.strip()
    if off + 8 > len(blob):
        raise StreamFormatError(f"truncated record count at offset {off}")
    n = int(np.frombuffer(blob, dtype="<u8", count=1, offset=off)[0])
    off += 8
    want = n * RECORD_DTYPE.itemsize
    if len(blob) - off != want:
        raise StreamFormatError(
            f"expected {want} record bytes at offset {off}, found {len(blob) - off}"
        )
    rec = np.frombuffer(blob, dtype=RECORD_DTYPE, count=n, offset=off)
    return TimeTagStream(
        cycles=rec["cycle"].copy(),
        t_ns=rec["t_ns"].copy(),
        channels=rec["channel"].copy(),
        metadata=metadata,
    )


def load_stream(path) -> TimeTagStream:
    """Open either format, sniffing the binary magic."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == MAGIC:
        return load_binary(path)
    return load_csv(path)
