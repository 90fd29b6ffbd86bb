"""Frame-level phoneme labels from precomputed alignment CSVs.

Alignment rows are `start_s,end_s,phoneme`, sorted and non-overlapping.
Frame i is labeled by the interval containing its center t = i*0.02 + 0.0125
(half the 25 ms analysis window past the hop grid); uncovered frames get
"sil".  Running a forced aligner is out of scope here; any aligner's output
converts to this CSV upstream.
"""

from __future__ import annotations

import csv

FRAME_CENTER_OFFSET_S = 0.0125
FRAME_HOP_S = 0.020
SILENCE = "sil"


def read_alignment(path) -> list[tuple[float, float, str]]:
    """Parse and validate an alignment CSV (optional header tolerated)."""
    intervals = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for row in csv.reader(f):
            if not row or not row[0].strip():
                continue
            try:
                start, end = float(row[0]), float(row[1])
            except ValueError:
                if not intervals:  # header row
                    continue
                raise
            if len(row) < 3 or not row[2].strip():
                raise ValueError(f"{path}: row {row} has no phoneme")
            if end <= start:
                raise ValueError(f"{path}: empty or negative interval {row}")
            intervals.append((start, end, row[2].strip()))
    for (s0, e0, _), (s1, _, _) in zip(intervals, intervals[1:]):
        if s1 < s0:
            raise ValueError(f"{path}: intervals are not sorted (start {s1} after {s0})")
        if s1 < e0:
            raise ValueError(f"{path}: intervals overlap at {s1:.3f}s")
    return intervals


def align_labels(intervals: list[tuple[float, float, str]], n_frames: int) -> list[str]:
    """One phoneme string per frame, by frame-center containment."""
    labels = [SILENCE] * n_frames
    cursor = 0
    for i in range(n_frames):
        center = i * FRAME_HOP_S + FRAME_CENTER_OFFSET_S
        while cursor < len(intervals) and intervals[cursor][1] <= center:
            cursor += 1
        if cursor < len(intervals):
            start, end, phoneme = intervals[cursor]
            if start <= center < end:
                labels[i] = phoneme
    return labels


def build_vocab(label_lists: list[list[str]]) -> list[str]:
    """Sorted union of every phoneme seen (silence included)."""
    seen = {SILENCE}
    for labels in label_lists:
        seen.update(labels)
    return sorted(seen)
