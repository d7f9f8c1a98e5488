"""OpenML dataset download with an on-disk cache, plus a small ARFF reader."""

from __future__ import annotations

import csv
import json
import os
import re
import urllib.error
import urllib.request
from pathlib import Path

import pandas as pd

from .data import DataError, Dataset, dataset_from_frame

DEFAULT_BASE_URL = "https://www.openml.org"
_ATTR = re.compile(r"@attribute\s+('[^']*'|\"[^\"]*\"|\S+)\s+(.+)$", re.IGNORECASE)


class FetchError(RuntimeError):
    pass


class UnsupportedFormatError(DataError):
    pass


def default_cache_dir() -> Path:
    return Path(os.environ.get("EVOSSL_CACHE", Path.home() / ".cache" / "evossl"))


def _attribute_kind(spec: str) -> str:
    spec = spec.strip()
    if spec.startswith("{"):
        return "nominal"
    return spec.split()[0].lower()


def _unquote(token: str) -> str:
    token = token.strip()
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def frame_from_arff(text: str) -> pd.DataFrame:
    """Parse the dense numeric/nominal ARFF subset into a DataFrame (``?`` becomes NA)."""
    names, kinds = [], []
    lines = iter(text.splitlines())
    for line in lines:
        stripped = line.strip()
        low = stripped.lower()
        if not stripped or stripped.startswith("%"):
            continue
        if low.startswith("@data"):
            break
        if low.startswith("@attribute"):
            m = _ATTR.match(stripped)
            if m is None:
                raise DataError(f"malformed ARFF attribute line: {stripped}")
            kind = _attribute_kind(m.group(2))
            if kind not in ("numeric", "real", "integer", "nominal"):
                raise UnsupportedFormatError(f"unsupported ARFF attribute: {stripped}")
            names.append(_unquote(m.group(1)))
            kinds.append(kind)
    if not names:
        raise DataError("ARFF payload declares no attributes")
    body = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("%")]
    if any(ln.lstrip().startswith("{") for ln in body):
        raise UnsupportedFormatError("sparse ARFF rows are not supported")
    rows = []
    reader = csv.reader(body, quotechar="'", skipinitialspace=True)
    for lineno, row in enumerate(reader, start=1):
        if len(row) != len(names):
            raise DataError(f"ARFF data row {lineno} has {len(row)} values, expected {len(names)}")
        rows.append([None if v.strip() == "?" else _unquote(v) for v in row])
    frame = pd.DataFrame(rows, columns=names)
    for col, kind in zip(names, kinds):
        if kind != "nominal":
            frame[col] = pd.to_numeric(frame[col], errors="raise")
    return frame


def _get(url: str, timeout: float) -> bytes:
    try:
        with urllib.request.urlopen(url, timeout=timeout) as resp:
            return resp.read()
    except (urllib.error.URLError, OSError) as exc:
        raise FetchError(f"GET {url} failed: {exc}") from exc


def download(dataset_id: int, cache_dir: Path, base_url: str | None = None, timeout: float = 60.0) -> None:
    base = (base_url or os.environ.get("EVOSSL_OPENML_URL", DEFAULT_BASE_URL)).rstrip("/")
    desc = json.loads(_get(f"{base}/api/v1/json/data/{dataset_id}", timeout))
    info = desc.get("data_set_description", desc)
    file_id = info.get("file_id")
    if file_id is None:
        raise FetchError(f"OpenML description for {dataset_id} has no file_id")
    payload = _get(f"{base}/data/v1/download/{file_id}", timeout)
    meta = {
        "id": int(dataset_id),
        "name": info.get("name", f"openml_{dataset_id}"),
        "target": info.get("default_target_attribute"),
        "file_id": file_id,
    }
    cache_dir.mkdir(parents=True, exist_ok=True)
    (cache_dir / f"{dataset_id}.arff").write_bytes(payload)
    (cache_dir / f"{dataset_id}.meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def fetch_openml(dataset_id: int, cache_dir=None, offline: bool = False, base_url: str | None = None) -> Dataset:
    """Load OpenML dataset ``dataset_id``, downloading it into ``cache_dir`` if needed."""
    cache_dir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    arff_path = cache_dir / f"{dataset_id}.arff"
    meta_path = cache_dir / f"{dataset_id}.meta.json"
    if not (arff_path.exists() and meta_path.exists()):
        if offline:
            raise FetchError(f"dataset {dataset_id} not cached in {cache_dir} and offline mode is on")
        download(dataset_id, cache_dir, base_url=base_url)
    meta = json.loads(meta_path.read_text())
    frame = frame_from_arff(arff_path.read_text())
    target = meta.get("target") or frame.columns[-1]
    # some OpenML targets list several columns; the first is the class
    target = target.split(",")[0]
    return dataset_from_frame(frame, target, meta.get("name", f"openml_{dataset_id}"))
