"""Reading and writing season files.

Match CSV columns (header required)::

    round,home_team,away_team,home_score,away_score,home_tries,away_tries,
    home_conv_att,home_pen_att,home_drop_att,away_conv_att,away_pen_att,
    away_drop_att,attendance,weekend,canceled

An optional trailing ``y_raw`` column carries a continuous score difference
(written by the simulator); when present it replaces home_score - away_score.

Previous-season CSV columns: ``team,scored,received``.
"""
from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

MATCH_COLUMNS = (
    "round",
    "home_team",
    "away_team",
    "home_score",
    "away_score",
    "home_tries",
    "away_tries",
    "home_conv_att",
    "home_pen_att",
    "home_drop_att",
    "away_conv_att",
    "away_pen_att",
    "away_drop_att",
    "attendance",
    "weekend",
    "canceled",
)
_COUNT_COLUMNS = MATCH_COLUMNS[3:13]
_FLAG_COLUMNS = MATCH_COLUMNS[13:]
PREV_COLUMNS = ("team", "scored", "received")


class ParseError(ValueError):
    """Malformed input file; ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, path=None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


@dataclass(frozen=True)
class MatchRecord:
    round: int
    home_team: str
    away_team: str
    home_score: int
    away_score: int
    home_tries: int
    away_tries: int
    home_conv_att: int
    home_pen_att: int
    home_drop_att: int
    away_conv_att: int
    away_pen_att: int
    away_drop_att: int
    attendance: int
    weekend: int
    canceled: int
    y_raw: float | None = None

    def __post_init__(self):
        if self.home_team == self.away_team:
            raise ValueError(f"team {self.home_team!r} cannot play itself")
        if self.round < 1:
            raise ValueError(f"round must be positive, got {self.round}")
        for name in _COUNT_COLUMNS:
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)}")
        for name in _FLAG_COLUMNS:
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1, got {getattr(self, name)}")
        if self.canceled and (self.home_score or self.away_score):
            raise ValueError("canceled match must carry a 0-0 score")

    @property
    def raw_diff(self) -> float:
        if self.y_raw is not None:
            return self.y_raw
        return float(self.home_score - self.away_score)


@dataclass(frozen=True)
class Dataset:
    """A season in file order; canceled rows are kept in ``records`` only."""

    teams: tuple[str, ...]
    records: tuple[MatchRecord, ...]
    matches: tuple[MatchRecord, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "matches", tuple(r for r in self.records if not r.canceled))
        known = set(self.teams)
        if len(known) != len(self.teams):
            raise ValueError("duplicate team in team list")
        pairs: dict[tuple[str, str], int] = {}
        for r in self.records:
            if r.home_team not in known or r.away_team not in known:
                raise ValueError(f"unknown team in match {r.home_team} v {r.away_team}")
        for r in self.matches:
            key = (r.home_team, r.away_team)
            pairs[key] = pairs.get(key, 0) + 1
            if pairs[key] > 2:
                raise ValueError(f"{key[0]} hosts {key[1]} more than twice")

    @classmethod
    def from_records(cls, records) -> Dataset:
        teams: dict[str, None] = {}
        for r in records:
            teams.setdefault(r.home_team)
            teams.setdefault(r.away_team)
        return cls(tuple(teams), tuple(records))

    @property
    def nteams(self) -> int:
        return len(self.teams)

    @property
    def ngames(self) -> int:
        return len(self.matches)

    @property
    def canceled(self) -> tuple[MatchRecord, ...]:
        return tuple(r for r in self.records if r.canceled)

    def team_index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.teams)}


@dataclass(frozen=True)
class PrevSeasonTable:
    scored: dict[str, float]
    received: dict[str, float]

    def __len__(self):
        return len(self.scored)

    def __contains__(self, team):
        return team in self.scored


def _parse_int(text: str, column: str, path, line: int) -> int:
    try:
        return int(text.strip())
    except ValueError:
        raise ParseError(f"column {column!r}: expected integer, got {text!r}", path, line) from None


def parse_matches(path) -> Dataset:
    """Parse a match CSV into a :class:`Dataset`.

    Canceled games stay in ``Dataset.records`` for reporting but are excluded
    from ``Dataset.matches``. Team order is first appearance in the file.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_matches(fh, path)


def parse_matches_text(text: str) -> Dataset:
    return _parse_matches(io.StringIO(text), "<string>")


def _parse_matches(fh, path) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty file, header required", path, 1) from None
    has_y = tuple(header) == MATCH_COLUMNS + ("y_raw",)
    if tuple(header) != MATCH_COLUMNS and not has_y:
        raise ParseError(f"header mismatch, expected {','.join(MATCH_COLUMNS)}", path, 1)
    ncol = len(header)

    records = []
    seen = set()
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncol:
            raise ParseError(f"expected {ncol} columns, got {len(row)}", path, line)
        values = dict(zip(header, row))
        kwargs = {
            "round": _parse_int(values["round"], "round", path, line),
            "home_team": values["home_team"].strip(),
            "away_team": values["away_team"].strip(),
        }
        for col in _COUNT_COLUMNS + _FLAG_COLUMNS:
            kwargs[col] = _parse_int(values[col], col, path, line)
        if has_y:
            try:
                kwargs["y_raw"] = float(values["y_raw"])
            except ValueError:
                raise ParseError(f"column 'y_raw': expected number, got {values['y_raw']!r}", path, line) from None
            if not math.isfinite(kwargs["y_raw"]):
                raise ParseError("column 'y_raw' must be finite", path, line)
        try:
            record = MatchRecord(**kwargs)
        except ValueError as exc:
            raise ParseError(str(exc), path, line) from None
        if record in seen:
            warnings.warn(f"{path}:{line}: duplicate row kept", stacklevel=3)
        seen.add(record)
        records.append(record)
    try:
        return Dataset.from_records(records)
    except ValueError as exc:
        raise ParseError(str(exc), path) from None


def write_matches(dataset: Dataset, path_or_buf) -> None:
    """Write every record (canceled included) in the match CSV schema."""
    with_y = any(r.y_raw is not None for r in dataset.records)
    if with_y and not all(r.y_raw is not None for r in dataset.records):
        raise ValueError("y_raw must be set on all records or none")
    header = MATCH_COLUMNS + (("y_raw",) if with_y else ())

    def _write(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in dataset.records:
            row = [getattr(r, c) for c in MATCH_COLUMNS]
            if with_y:
                row.append(repr(float(r.y_raw)))
            w.writerow(row)

    if hasattr(path_or_buf, "write"):
        _write(path_or_buf)
    else:
        with open(path_or_buf, "w", newline="", encoding="utf-8") as fh:
            _write(fh)


def parse_prev_season(path) -> PrevSeasonTable:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        return _parse_prev(fh, path)


def parse_prev_season_text(text: str) -> PrevSeasonTable:
    return _parse_prev(io.StringIO(text), "<string>")


def _parse_prev(fh, path) -> PrevSeasonTable:
    reader = csv.reader(fh)
    try:
        header = tuple(h.strip() for h in next(reader))
    except StopIteration:
        raise ParseError("no teams", path) from None
    if header != PREV_COLUMNS:
        raise ParseError(f"header mismatch, expected {','.join(PREV_COLUMNS)}", path, 1)
    scored: dict[str, float] = {}
    received: dict[str, float] = {}
    for line, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise ParseError(f"expected 3 columns, got {len(row)}", path, line)
        team = row[0].strip()
        if team in scored:
            raise ParseError(f"team {team!r} listed twice", path, line)
        try:
            s, r = float(row[1]), float(row[2])
        except ValueError:
            raise ParseError(f"non-numeric cell for team {team!r}", path, line) from None
        if not (math.isfinite(s) and math.isfinite(r)) or s < 0 or r < 0:
            raise ParseError(f"scored/received must be finite and nonnegative for {team!r}", path, line)
        scored[team] = s
        received[team] = r
    if not scored:
        raise ParseError("no teams", path)
    return PrevSeasonTable(scored, received)


def write_prev_season(table: PrevSeasonTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PREV_COLUMNS)
        for team in table.scored:
            w.writerow([team, _fmt_num(table.scored[team]), _fmt_num(table.received[team])])


def _fmt_num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))
