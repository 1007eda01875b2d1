"""
Serializes run results into CSV and JSON files that stay byte-stable across
runs: sorted keys, shortest round-trip numbers, "\\n" line endings, and a run
manifest embedded in every file. Only the manifest timestamp changes between
reruns of the same command, config and seed.
"""

import csv
import datetime
import hashlib
import io
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence, TextIO, Union

import pytz
from dateutil import parser

from config import ARTIFACT_VERSION
from error import ConfigurationError

MANIFEST_FIELDS = ("command", "config_digest", "seed", "artifact_version", "timestamp")


def config_digest(record) -> str:
    """First 64 bits of SHA-256 over the canonical JSON form, as hex."""
    canonical = json.dumps(
        json_safe(record), sort_keys=True, separators=(",", ":"), ensure_ascii=False
    )

    return hashlib.sha256(canonical.encode("utf-8")).digest()[:8].hex()


@dataclass(frozen=True)
class RunManifest:
    """Provenance carried by every output file."""

    command: str
    config_digest: str
    seed: Optional[int]
    artifact_version: str
    timestamp: str

    @classmethod
    def create(
        cls,
        command: str,
        config_record,
        seed: Optional[int] = None,
        now: Optional[datetime.datetime] = None,
    ) -> "RunManifest":
        """Stamps a manifest for a command run now (UTC)."""
        now = now or datetime.datetime.now(pytz.utc)

        return cls(
            command=command,
            config_digest=config_digest(config_record),
            seed=seed,
            artifact_version=ARTIFACT_VERSION,
            timestamp=now.astimezone(pytz.utc).isoformat(),
        )

    @classmethod
    def from_manifest_json(cls, manifest_json: dict) -> "RunManifest":
        """Rebuilds a manifest from its serialized form, validating the timestamp."""
        missing = [key for key in MANIFEST_FIELDS if key not in manifest_json]
        if missing:
            raise ConfigurationError(
                f"Manifest is missing {', '.join(missing)}", missing
            )

        try:
            stamp = parser.isoparse(manifest_json["timestamp"])
        except (TypeError, ValueError) as exc:
            raise ConfigurationError(
                "Manifest timestamp is not ISO-8601", ["timestamp"]
            ) from exc

        if stamp.utcoffset() != datetime.timedelta(0):
            raise ConfigurationError("Manifest timestamp is not UTC", ["timestamp"])

        seed = manifest_json["seed"]

        return cls(
            command=manifest_json["command"],
            config_digest=manifest_json["config_digest"],
            seed=None if seed in (None, "") else int(seed),
            artifact_version=manifest_json["artifact_version"],
            timestamp=manifest_json["timestamp"],
        )

    @property
    def issued_at(self) -> datetime.datetime:
        """The timestamp as an aware datetime."""
        return parser.isoparse(self.timestamp)

    def to_record(self) -> dict:
        """Plain mapping for JSON output."""
        return asdict(self)

    def comment_lines(self) -> list[str]:
        """`# key=value` lines for CSV headers, timestamp last."""
        record = self.to_record()

        return [f"# {key}={format_number(record[key])}" for key in MANIFEST_FIELDS]


def json_safe(value):
    """Recursively replaces non-finite floats with None and tuples with lists."""
    if isinstance(value, float) and not math.isfinite(value):
        return None

    if isinstance(value, dict):
        return {str(key): json_safe(item) for key, item in value.items()}

    if isinstance(value, (list, tuple)):
        return [json_safe(item) for item in value]

    return value


def format_number(value) -> str:
    """Shortest round-trip text for CSV cells; None becomes an empty cell."""
    if value is None:
        return ""

    if isinstance(value, bool):
        return "1" if value else "0"

    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else ""

    return str(value)


def dumps_json(payload: dict, manifest: Optional[RunManifest] = None) -> str:
    """Canonical JSON text with the manifest under the "manifest" key."""
    document = dict(payload)
    if manifest is not None:
        document["manifest"] = manifest.to_record()

    return json.dumps(json_safe(document), sort_keys=True, indent=2) + "\n"


def write_json(path: Union[str, Path], payload: dict, manifest: RunManifest) -> None:
    """Writes dumps_json output as UTF-8."""
    Path(path).write_text(dumps_json(payload, manifest), encoding="utf-8", newline="\n")


def write_csv_stream(
    stream: TextIO,
    header: Sequence[str],
    rows: Iterable[Sequence],
    manifest: Optional[RunManifest] = None,
) -> None:
    """Manifest comments, the header, then one line per row."""
    if manifest is not None:
        for line in manifest.comment_lines():
            stream.write(line + "\n")

    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_number(value) for value in row])


def write_csv(
    path: Union[str, Path],
    header: Sequence[str],
    rows: Iterable[Sequence],
    manifest: RunManifest,
) -> None:
    """write_csv_stream into a UTF-8 file."""
    with open(path, "w", encoding="utf-8", newline="") as stream:
        write_csv_stream(stream, header, rows, manifest)


def read_csv(path: Union[str, Path]) -> tuple[RunManifest, list[dict]]:
    """Splits a written CSV file back into its manifest and row mappings."""
    text = Path(path).read_text(encoding="utf-8")
    comments = {}
    body = []

    for line in text.splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            comments[key] = value
        else:
            body.append(line)

    rows = list(csv.DictReader(io.StringIO("\n".join(body))))

    return RunManifest.from_manifest_json(comments), rows
