"""Trajectory containers, CSV-directory I/O, lagged-pair counting and CV folds."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "TrajectoryCollection",
    "FoldAssignment",
    "load_trajectories",
    "save_trajectories",
    "lagged_pair_count",
    "split_folds",
    "read_meta",
    "TrajectoryFormatError",
]


class TrajectoryFormatError(ValueError):
    """Raised when a trajectory directory cannot be parsed."""


@dataclass(frozen=True)
class TrajectoryCollection:
    """Ordered set of uniformly sampled trajectories.

    Each trajectory is a ``(T_s, d)`` float array. Arrays are copied and made
    read-only on construction so a collection can be shared freely.
    """

    trajectories: tuple
    dt: float = 1.0
    labels: Optional[tuple] = None

    def __post_init__(self):
        trajs = []
        for t in self.trajectories:
            a = np.array(t, dtype=float)
            if a.ndim == 1:
                a = a[:, None]
            if a.ndim != 2:
                raise ValueError("trajectory must be a 1d or 2d array")
            a.setflags(write=False)
            trajs.append(a)
        if not trajs:
            raise ValueError("collection needs at least one trajectory")
        dims = {a.shape[1] for a in trajs}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dimension across trajectories: {sorted(dims)}")
        if dims.pop() < 1:
            raise ValueError("state dimension must be >= 1")
        if any(a.shape[0] < 2 for a in trajs):
            raise ValueError("every trajectory needs at least 2 steps")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "trajectories", tuple(trajs))
        if self.labels is not None:
            labels = tuple(self.labels)
            if len(labels) != len(trajs):
                raise ValueError("labels must match the number of trajectories")
            object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.trajectories[0].shape[1]

    @property
    def n_trajectories(self) -> int:
        return len(self.trajectories)

    @property
    def lengths(self) -> tuple:
        return tuple(a.shape[0] for a in self.trajectories)

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]

    def concatenated(self) -> np.ndarray:
        """All samples stacked into one ``(sum T_s, d)`` array."""
        return np.concatenate(self.trajectories, axis=0)

    def lagged_pairs(self, lag: int):
        """Yield ``(x_t, x_{t+lag})`` blocks per trajectory; short ones are skipped."""
        for a in self.trajectories:
            if a.shape[0] > lag:
                yield a[: a.shape[0] - lag], a[lag:]

    def map(self, fn) -> "TrajectoryCollection":
        """Apply ``fn`` row-wise (array in, array out) to every trajectory."""
        return TrajectoryCollection(tuple(fn(a) for a in self.trajectories), self.dt, self.labels)

    def subset(self, blocks: Sequence[tuple]) -> "TrajectoryCollection":
        """Collection of ``(traj, start, end)`` slices, each one its own trajectory."""
        parts = [self.trajectories[i][s:e] for i, s, e in blocks]
        return TrajectoryCollection(tuple(parts), self.dt)


def lagged_pair_count(c: TrajectoryCollection, lag: int) -> int:
    """Number of ``(x_t, x_{t+lag})`` pairs, summed over trajectories."""
    if lag < 1:
        raise ValueError("lag must be >= 1")
    return int(sum(max(0, n - lag) for n in c.lengths))


def read_meta(path) -> dict:
    """``key=value`` lines of ``meta.txt`` in a trajectory directory (empty if absent)."""
    meta = Path(path) / "meta.txt"
    if not meta.exists():
        return {}
    out = {}
    for line in meta.read_text().splitlines():
        key, sep, value = line.partition("=")
        if sep:
            out[key.strip()] = value.strip()
    return out


def _read_dt(directory: Path) -> Optional[float]:
    value = read_meta(directory).get("dt")
    return None if value is None else float(value)


def _read_csv(path: Path) -> np.ndarray:
    rows = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        cells = [c.strip() for c in line.split(",")]
        try:
            values = [float(c) for c in cells]
        except ValueError:
            # a single leading header row is tolerated
            if lineno == 1 and not rows:
                continue
            raise TrajectoryFormatError(f"{path.name}:{lineno}: non-numeric cell") from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise TrajectoryFormatError(f"{path.name}:{lineno}: ragged row ({len(values)} != {width})")
        rows.append(values)
    if not rows:
        raise TrajectoryFormatError(f"{path.name}: no data rows")
    return np.asarray(rows, dtype=float)


def load_trajectories(path, dt: Optional[float] = None) -> TrajectoryCollection:
    """Load every ``*.csv`` in ``path`` (sorted by name) as one trajectory.

    ``dt`` overrides the ``dt=<float>`` line in ``meta.txt``; without either,
    dt defaults to 1.
    """
    directory = Path(path)
    if not directory.is_dir():
        raise FileNotFoundError(f"no such trajectory directory: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix == ".csv")
    if not files:
        raise TrajectoryFormatError(f"no *.csv files in {directory}")
    arrays = [_read_csv(p) for p in files]
    dims = {a.shape[1] for a in arrays}
    if len(dims) != 1:
        raise TrajectoryFormatError(f"inconsistent dimension across files: {sorted(dims)}")
    if dt is None:
        dt = _read_dt(directory)
    return TrajectoryCollection(tuple(arrays), 1.0 if dt is None else dt, tuple(p.stem for p in files))


def save_trajectories(c: TrajectoryCollection, path, meta: Optional[dict] = None) -> list:
    """Write ``c`` in the CSV-directory format; returns the written file paths.

    Values are written with ``repr`` so reloading is bit-exact. Extra
    ``meta`` entries are appended to ``meta.txt`` as ``key=value`` lines.
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(c) - 1)))
    labels = c.labels or tuple(f"traj_{i:0{width}d}" for i in range(len(c)))
    written = []
    for label, a in zip(labels, c.trajectories):
        p = directory / f"{label}.csv"
        with open(p, "w") as fh:
            for row in a:
                fh.write(",".join(repr(float(v)) for v in row))
                fh.write("\n")
        written.append(p)
    with open(directory / "meta.txt", "w") as fh:
        fh.write(f"dt={c.dt!r}{os.linesep}")
        for key, value in (meta or {}).items():
            fh.write(f"{key}={value}{os.linesep}")
    return written


@dataclass(frozen=True)
class FoldAssignment:
    """Disjoint trajectory blocks and their fold labels (0-based internally)."""

    blocks: tuple
    fold_of_block: tuple
    n_folds: int
    block_length: int
    seed: Optional[int] = None

    def test_blocks(self, j: int) -> list:
        return [b for b, f in zip(self.blocks, self.fold_of_block) if f == j]

    def train_blocks(self, j: int) -> list:
        return [b for b, f in zip(self.blocks, self.fold_of_block) if f != j]

    def fold_sizes(self) -> list:
        return [sum(1 for f in self.fold_of_block if f == j) for j in range(self.n_folds)]

    def check_lag(self, lag: int):
        if self.block_length <= lag:
            raise ValueError(f"block length {self.block_length} must exceed lag {lag}")


def split_folds(c: TrajectoryCollection, n_folds: int, block_length: int, seed: int = 0,
                min_block: int = 1) -> FoldAssignment:
    """Cut trajectories into blocks of ``block_length`` and deal them into folds.

    Blocks are shuffled with a seeded generator and dealt round-robin, so fold
    sizes differ by at most one block. A trailing partial block is kept when
    its length exceeds ``min_block`` (pass the lag here).
    """
    if n_folds < 2:
        raise ValueError("need at least 2 folds")
    if block_length < 2:
        raise ValueError("block length must be >= 2")
    blocks = []
    for i, n in enumerate(c.lengths):
        for start in range(0, n, block_length):
            end = min(start + block_length, n)
            if end - start == block_length or end - start > min_block:
                blocks.append((i, start, end))
    if len(blocks) < n_folds:
        raise ValueError(f"too few blocks ({len(blocks)}) for {n_folds} folds")
    order = np.random.default_rng(seed).permutation(len(blocks))
    fold_of_block = [0] * len(blocks)
    for rank, b in enumerate(order):
        fold_of_block[b] = rank % n_folds
    return FoldAssignment(tuple(blocks), tuple(fold_of_block), n_folds, block_length, seed)
