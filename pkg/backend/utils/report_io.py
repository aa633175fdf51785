from pathlib import Path
from typing import Any, List, Union

import orjson
from pydantic import BaseModel

_JSON_OPTIONS = orjson.OPT_SORT_KEYS | orjson.OPT_INDENT_2 | orjson.OPT_SERIALIZE_NUMPY


def to_json_bytes(payload: Any) -> bytes:
    """Sorted-key, 2-space JSON with a trailing newline (byte-stable across runs)."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return orjson.dumps(payload, option=_JSON_OPTIONS) + b"\n"


def write_json(path: Union[str, Path], payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(to_json_bytes(payload))
    return path


def read_json(path: Union[str, Path]) -> Any:
    return orjson.loads(Path(path).read_bytes())


def write_lines(path: Union[str, Path], lines: List[str]) -> Path:
    """One entry per line, UTF-8, LF endings."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8", newline="\n")
    return path


def read_lines(path: Union[str, Path], skip_blank: bool = False) -> List[str]:
    """Lines without terminators. Blank lines are kept unless ``skip_blank``
    (an empty generated string is still one sample)."""
    lines = [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines()]
    return [line for line in lines if line] if skip_blank else lines
