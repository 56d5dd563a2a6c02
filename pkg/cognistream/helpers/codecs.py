import hashlib
import os
from typing import Iterable, List

LITERAL_PREFIX = "lit:"


def content_hash(data: bytes) -> str:
    """
    Returns the 16 hex character BLAKE2b digest used as the id of patterns and templates

    Equal content always yields the same id, which is what lets independently built
    dictionaries and hierarchies unify without coordination
    """
    return hashlib.blake2b(data, digest_size=8).hexdigest()


def literal_item(byte_value: int) -> str:
    """
    Item reference of a single gap byte, e.g. 0x0a -> 'lit:0a'
    """
    return f"{LITERAL_PREFIX}{byte_value:02x}"


def is_literal(item: str) -> bool:
    return item.startswith(LITERAL_PREFIX)


def literal_byte(item: str) -> int:
    return int(item[len(LITERAL_PREFIX):], 16)


def format_score(value: float) -> str:
    return f"{value:.6f}"


def tsv_line(*fields) -> str:
    return "\t".join(str(field) for field in fields)


def render_lines(lines: Iterable[str]) -> str:
    """
    Joins report lines with a trailing newline after each one, empty input gives an empty string
    """
    return "".join(f"{line}\n" for line in lines)


def write_lines(path: str, lines: Iterable[str], append: bool = False):
    """
    Writes lines as UTF-8 with '\\n' newlines on every platform
    """
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8", newline="\n") as file:
        file.write(render_lines(lines))


def read_lines(path: str) -> List[str]:
    """
    Reads a canonical text file, skipping blank lines and '#' comments
    """
    if not os.path.exists(path):
        return []

    with open(path, "r", encoding="utf-8", newline="\n") as file:
        return [line.rstrip("\n") for line in file if line.strip() and not line.startswith("#")]
