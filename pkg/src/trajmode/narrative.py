"""Textual modality: structured movement narratives and reasoner prompts.

The default narrative is a deterministic template filled from a
KinematicsReport, organized as three fixed-header blocks (temporal,
dynamics, overall summary). A remote reasoning-LLM can produce the same
three-block document through ``remote_narrative``; it is never silently
substituted by the template.
"""

import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Protocol

from .kinematics import KinematicsReport, TimeOfDay
from .trajectory import TrajectorySegment

HEADER_TEMPORAL = "1. Temporal Information"
HEADER_DYNAMICS = "2. Trajectory Dynamics"
HEADER_SUMMARY = "Overall Movement Pattern Summary"

# Feature checklist the reasoner prompt must enumerate, verbatim.
PROMPT_FEATURES = (
    "start/end times",
    "duration",
    "inactivity periods",
    "speed profiles",
    "turn frequency",
    "detour index",
)

_TIME_OF_DAY_TEXT = {
    TimeOfDay.MORNING_PEAK: "morning peak",
    TimeOfDay.EVENING_PEAK: "evening peak",
    TimeOfDay.DAYTIME_OFFPEAK: "daytime off-peak",
    TimeOfDay.NIGHT: "late evening/night",
}


class PromptTooLargeError(ValueError):
    """The segment exceeds the per-request point cap."""


class TextSource(str, Enum):
    DETERMINISTIC = "deterministic"
    REMOTE_LLM = "remote_llm"


@dataclass(frozen=True)
class SceneText:
    temporal_block: str
    dynamics_block: str
    summary_block: str
    source: TextSource
    full_text: str

    @classmethod
    def from_blocks(
        cls, temporal: str, dynamics: str, summary: str, source: TextSource
    ) -> "SceneText":
        return cls(
            temporal_block=temporal,
            dynamics_block=dynamics,
            summary_block=summary,
            source=source,
            full_text=temporal + dynamics + summary,
        )


@dataclass(frozen=True)
class ReasonerPrompt:
    system_text: str
    user_text: str


@dataclass(frozen=True)
class SummaryBands:
    """Average-speed cutoffs (m/s) for the summary's mode-consistency phrase."""

    walk_max_mps: float = 2.0
    cycle_max_mps: float = 5.0
    urban_max_mps: float = 12.0


class ReasonerClient(Protocol):
    def complete(self, system_text: str, user_text: str) -> str: ...


def _kmh(mps: float) -> float:
    return mps * 3.6


def _local_str(ts: float, offset_h: float) -> str:
    dt = datetime.fromtimestamp(ts, tz=timezone(timedelta(hours=offset_h)))
    return dt.strftime("%Y-%m-%d %H:%M:%S")


def _speed_phrase(avg_mps: float, bands: SummaryBands) -> str:
    if avg_mps < bands.walk_max_mps:
        return "consistent with walking"
    if avg_mps < bands.cycle_max_mps:
        return "consistent with cycling or slow motorized travel"
    if avg_mps < bands.urban_max_mps:
        return "consistent with urban motorized travel"
    return "consistent with fast motorized or rail travel"


def render_narrative(
    report: KinematicsReport,
    bands: SummaryBands = SummaryBands(),
    local_utc_offset_h: float = 8.0,
) -> SceneText:
    """Fill the three-block narrative template from a kinematics report.

    Rounding is fixed: speeds to one decimal in km/h (m/s also one
    decimal), detour index to one decimal, distances to the nearest meter,
    durations to the nearest second. Deterministic, and distinct reports
    render to distinct text because every report field appears.
    """
    t, d = report.temporal, report.dynamics

    if t.inactivity_periods:
        period_list = ", ".join(
            f"{p.start_ts:.1f}-{p.end_ts:.1f}" for p in t.inactivity_periods
        )
        inactivity_line = (
            f"Inactivity Periods: {len(t.inactivity_periods)} detected ({period_list})."
        )
    else:
        inactivity_line = "Inactivity Periods: none detected."

    temporal_block = (
        f"{HEADER_TEMPORAL}\n"
        f"Start/End Time: The trajectory spans from {t.start_ts:.1f} "
        f"(local time {_local_str(t.start_ts, local_utc_offset_h)}) to {t.end_ts:.1f} "
        f"(local time {_local_str(t.end_ts, local_utc_offset_h)}).\n"
        f"Total Duration: {round(t.duration_s)} seconds.\n"
        f"Day Type: {t.day_type.value}.\n"
        f"Time of Day: {_TIME_OF_DAY_TEXT[t.time_of_day]}.\n"
        f"{inactivity_line}\n"
    )

    if d.detour_index is None:
        detour_line = (
            "Detour Index: n/a (start and end coincide, straight-line distance is zero)."
        )
    else:
        detour_line = f"Detour Index: ~{d.detour_index:.1f} (actual path length/straight-line distance)."

    dynamics_block = (
        f"{HEADER_DYNAMICS}\n"
        f"Average Speed: ~{_kmh(d.avg_speed_mps):.1f} km/h ({d.avg_speed_mps:.1f} m/s), "
        f"calculated as total travel distance ({round(d.path_length_m)} meters) divided by "
        f"total duration ({round(t.duration_s)} seconds).\n"
        f"Speed Variation: {_kmh(d.speed_min_mps):.1f}-{_kmh(d.speed_max_mps):.1f} km/h across "
        f"legs (std {_kmh(d.speed_std_mps):.1f} km/h).\n"
        f"Turn Frequency: {d.sharp_turn_count} sharp turns between consecutive legs.\n"
        f"Stops: {d.brief_stop_count} brief stationary periods, "
        f"{d.prolonged_stop_count} prolonged stops.\n"
        f"Total vs. Straight-Line Distance: total travel distance {round(d.path_length_m)} meters; "
        f"straight-line distance {round(d.straight_line_m)} meters.\n"
        f"{detour_line}\n"
    )

    peak = t.time_of_day in (TimeOfDay.MORNING_PEAK, TimeOfDay.EVENING_PEAK)
    sentences = [
        f"This trajectory reflects a {round(t.duration_s)}-second {t.day_type.value} trip "
        f"starting in the {_TIME_OF_DAY_TEXT[t.time_of_day]}, "
        f"{'within' if peak else 'outside'} peak commuting hours.",
        f"The movement shows an average speed of ~{_kmh(d.avg_speed_mps):.1f} km/h "
        f"({d.avg_speed_mps:.1f} m/s), {_speed_phrase(d.avg_speed_mps, bands)}.",
    ]
    if d.detour_index is None:
        sentences.append("The path returns to its starting point, so no detour index is defined.")
    elif d.detour_index > 2.0:
        sentences.append(
            f"The detour index of ~{d.detour_index:.1f} indicates a moderately winding "
            f"route or detour."
        )
    else:
        sentences.append(
            f"The detour index of ~{d.detour_index:.1f} indicates a fairly direct route."
        )
    if d.prolonged_stop_count > 0:
        sentences.append(
            f"The segment includes {d.prolonged_stop_count} prolonged stops and "
            f"{d.brief_stop_count} brief stationary periods."
        )
    elif d.brief_stop_count > 0:
        sentences.append(
            f"{d.brief_stop_count} brief stationary periods occurred, likely due to "
            f"momentary pauses or GPS noise."
        )
    summary_block = f"{HEADER_SUMMARY}\n" + " ".join(sentences) + "\n"

    return SceneText.from_blocks(
        temporal_block, dynamics_block, summary_block, TextSource.DETERMINISTIC
    )


_SYSTEM_TEXT = (
    "You analyze GPS trajectory segments. Extract the requested temporal and "
    "movement-dynamics features exactly, then write a synthesized summary of the "
    "overall movement pattern. Be precise with numbers."
)


def build_prompt(seg: TrajectorySegment, point_cap: int = 2000) -> ReasonerPrompt:
    """Deterministic prompt asking a reasoning LLM for the feature checklist.

    Raises PromptTooLargeError when the segment exceeds ``point_cap``
    points; callers should downsample before retrying.
    """
    if len(seg.points) > point_cap:
        raise PromptTooLargeError(
            f"segment {seg.segment_id} has {len(seg.points)} points, above the cap of "
            f"{point_cap}; downsample the segment before requesting a narrative"
        )
    feature_lines = "\n".join(f"- {name}" for name in PROMPT_FEATURES)
    point_lines = "\n".join(f"({p.lon!r}, {p.lat!r}, {p.ts!r})" for p in seg.points)
    user_text = (
        "Analyze the following GPS trajectory segment and extract these features:\n"
        f"{feature_lines}\n"
        "Report the results in three sections with exactly these headers:\n"
        f'"{HEADER_TEMPORAL}", "{HEADER_DYNAMICS}", "{HEADER_SUMMARY}".\n'
        f"Trajectory points as (lon, lat, ts), ts in seconds since the Unix epoch (UTC):\n"
        f"{point_lines}\n"
    )
    return ReasonerPrompt(system_text=_SYSTEM_TEXT, user_text=user_text)


def parse_blocks(text: str) -> Optional[tuple[str, str, str]]:
    """Split a completion into the three blocks, or None on header mismatch."""
    i = text.find(HEADER_TEMPORAL)
    j = text.find(HEADER_DYNAMICS)
    k = text.find(HEADER_SUMMARY)
    if i < 0 or j < 0 or k < 0 or not (i < j < k):
        return None
    return text[i:j], text[j:k], text[k:]


def remote_narrative(
    prompt: ReasonerPrompt, client: ReasonerClient
) -> tuple[SceneText, Optional[str]]:
    """Obtain the narrative from a remote reasoner client.

    Returns (scene_text, warning). When the completion lacks the expected
    headers the raw text is kept in full_text with empty blocks and a
    warning to record in the run manifest. Transport errors propagate;
    deterministic text is never substituted here.
    """
    completion = client.complete(prompt.system_text, prompt.user_text)
    blocks = parse_blocks(completion)
    if blocks is None:
        degraded = SceneText(
            temporal_block="",
            dynamics_block="",
            summary_block="",
            source=TextSource.REMOTE_LLM,
            full_text=completion,
        )
        return degraded, "remote completion missing expected section headers"
    t, d, s = blocks
    return SceneText.from_blocks(t, d, s, TextSource.REMOTE_LLM), None


def narrative_to_record(segment_id: str, text: SceneText) -> dict:
    return {
        "segment_id": segment_id,
        "source": text.source.value,
        "temporal_block": text.temporal_block,
        "dynamics_block": text.dynamics_block,
        "summary_block": text.summary_block,
        "full_text": text.full_text,
    }


def narrative_from_record(rec: dict) -> tuple[str, SceneText]:
    return rec["segment_id"], SceneText(
        temporal_block=rec["temporal_block"],
        dynamics_block=rec["dynamics_block"],
        summary_block=rec["summary_block"],
        source=TextSource(rec["source"]),
        full_text=rec["full_text"],
    )


def write_narratives(path: str | Path, items: Iterable[tuple[str, SceneText]]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for segment_id, text in items:
            fh.write(json.dumps(narrative_to_record(segment_id, text), separators=(",", ":")) + "\n")
            n += 1
    return n


def read_narratives(path: str | Path) -> list[tuple[str, SceneText]]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(narrative_from_record(json.loads(line)))
    return out
