"""Run persistence: file digests and tamper-evident manifests."""
from __future__ import annotations

import hashlib
import json
import time
from pathlib import Path

from . import __version__


class ManifestError(Exception):
    pass


def sha256_file(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def config_hash(config_payload: dict) -> str:
    canonical = json.dumps(config_payload, sort_keys=True).encode("utf-8")
    return hashlib.sha256(canonical).hexdigest()


def write_manifest(path: str | Path, *, config_digest: str, files: dict[str, Path],
                   extra: dict | None = None) -> dict:
    """Manifest next to produced files: config hash, tool version, per-file digests."""
    payload = {
        "config_hash": config_digest,
        "created": time.time(),
        "files": {name: sha256_file(p) for name, p in files.items()},
        "tool_version": __version__,
    }
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return payload


def read_manifest(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ManifestError(f"missing manifest {path}") from None
    except json.JSONDecodeError as e:
        raise ManifestError(f"corrupt manifest {path}: {e}") from None


def verify_manifest(manifest: dict, directory: str | Path) -> None:
    """Recompute every digest the manifest claims; mismatches are tampering."""
    for name, digest in manifest.get("files", {}).items():
        target = Path(directory) / name
        if not target.is_file():
            raise ManifestError(f"manifest references missing file {name}")
        actual = sha256_file(target)
        if actual != digest:
            raise ManifestError(f"digest mismatch for {name}: manifest {digest[:12]}.., file {actual[:12]}..")
