"""
Infrastructure Layer - TSV Reader

Header-less, tab-separated corpus files read with pandas. Every malformed
row is reported with its 1-based line number.
"""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from src.domain.entities import Triple, UserSequence
from src.domain.exceptions import CorpusParseError, EmptyCorpusError

logger = logging.getLogger(__name__)

_INTEGER = r"-?\d+"


def read_tsv(path: Path | str, required: int, optional: int = 0) -> pd.DataFrame:
    """
    Read a TSV with ``required`` mandatory and ``optional`` trailing columns.

    Returns:
        DataFrame with string columns 0..required+optional-1 ("" when an
        optional field is absent) and a ``line`` column holding the 1-based
        source line. Blank lines are dropped.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"No such file: {path}")

    width = required + optional
    text = path.read_text(encoding="utf-8")
    raw = text.split("\n")
    if raw and raw[-1] == "":
        raw.pop()
    lines = pd.Series(raw, dtype=object).str.rstrip("\r")
    blank = lines.str.strip() == ""
    fields = lines.str.split("\t")
    n_fields = fields.str.len()

    frame = pd.DataFrame(fields.tolist(), index=lines.index).reindex(
        columns=range(max(width, int(n_fields.max()) if len(n_fields) else 0))
    )
    frame = frame.fillna("")
    missing = (frame[list(range(required))] == "").any(axis=1) if required else False
    bad = ~blank & ((n_fields > width) | missing)
    if bool(bad.any()):
        first = int(bad[bad].index[0])
        reason = (
            f"expected at most {width} fields, saw {int(n_fields[first])}"
            if int(n_fields[first]) > width
            else f"expected {required} non-empty fields"
        )
        raise CorpusParseError(path, first + 1, reason)

    df = frame.loc[~blank, list(range(width))].copy()
    df["line"] = df.index + 1
    return df.reset_index(drop=True)


def _require_integer(df: pd.DataFrame, column: int, path: Path, what: str) -> pd.Series:
    ok = df[column].str.fullmatch(_INTEGER)
    if not bool(ok.all()):
        line_no = int(df.loc[~ok, "line"].iloc[0])
        raise CorpusParseError(path, line_no, f"{what} is not an integer")
    return df[column].astype("int64")


def _require_number(df: pd.DataFrame, column: int, path: Path, what: str) -> pd.Series:
    values = pd.to_numeric(df[column], errors="coerce")
    if bool(values.isna().any()):
        line_no = int(df.loc[values.isna(), "line"].iloc[0])
        raise CorpusParseError(path, line_no, f"{what} is not a number")
    return values


# ============================================================================
# Corpus Files
# ============================================================================


def load_interactions(
    path: Path | str,
    min_len: int = 3,
    domain: str | None = None,
    min_rating: float | None = None,
) -> list[UserSequence]:
    """
    Read ``user<TAB>item<TAB>timestamp[<TAB>rating]`` into user sequences.

    Items are ordered by (timestamp, input order); users with fewer than
    ``min_len`` interactions are dropped. With ``min_rating`` only rows
    whose rating is strictly greater are kept.

    Args:
        path: Interaction TSV
        min_len: Minimum sequence length kept
        domain: Domain name (default: file stem)
        min_rating: Optional positive-feedback threshold

    Returns:
        Sequences sorted by user id
    """
    path = Path(path)
    domain = domain or path.stem
    df = read_tsv(path, required=3, optional=1)
    df["timestamp"] = _require_integer(df, 2, path, "timestamp")

    if min_rating is not None:
        if bool((df[3] == "").any()):
            line_no = int(df.loc[df[3] == "", "line"].iloc[0])
            raise CorpusParseError(path, line_no, "rating column required with min_rating")
        ratings = _require_number(df, 3, path, "rating")
        before = len(df)
        df = df[ratings > min_rating]
        logger.info(f"{path.name}: kept {len(df)}/{before} rows with rating > {min_rating}")

    df = df.sort_values(by=[0, "timestamp", "line"], kind="stable")
    sequences: list[UserSequence] = []
    dropped = 0
    for user, group in df.groupby(0, sort=True):
        items = tuple(group[1].tolist())
        if len(items) < min_len:
            dropped += 1
            continue
        sequences.append(UserSequence(user=str(user), items=items, domain=domain))

    if dropped:
        logger.info(f"{path.name}: dropped {dropped} users with < {min_len} interactions")
    if not sequences:
        raise EmptyCorpusError(f"{path}: no user has at least {min_len} interactions")
    logger.info(f"{path.name}: {len(sequences)} users, {len(df)} interactions ({domain})")
    return sequences


def load_triples(path: Path | str) -> list[Triple]:
    """Read ``head<TAB>relation<TAB>tail``; exact duplicates are dropped."""
    path = Path(path)
    df = read_tsv(path, required=3)
    seen: dict[Triple, None] = {}
    for head, relation, tail in zip(df[0], df[1], df[2]):
        seen.setdefault(Triple(head, relation, tail), None)
    if len(seen) < len(df):
        logger.info(f"{path.name}: removed {len(df) - len(seen)} duplicate triples")
    return list(seen)


def load_item_links(path: Path | str) -> dict[str, str]:
    """Read ``item<TAB>entity``; an item linked to two entities is an error."""
    path = Path(path)
    df = read_tsv(path, required=2)
    links: dict[str, str] = {}
    for item, entity, line_no in zip(df[0], df[1], df["line"]):
        if links.setdefault(item, entity) != entity:
            raise CorpusParseError(path, int(line_no), f"item '{item}' linked twice")
    return links


def write_tsv(rows: Sequence[Sequence[object]], path: Path | str) -> Path:
    """Write rows as a header-less UTF-8 TSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(list(rows)).to_csv(
        path, sep="\t", header=False, index=False, quoting=csv.QUOTE_NONE, lineterminator="\n"
    )
    return path
