"""Per-modality embeddings and their combination rules.

The offline embedders are deterministic feature-hashing surrogates for a
remote multimodal model: text is embedded from narrative tokens, images
from scene statistics, both through the same seeded signed-hash
accumulator. Combination supports concatenation (image first), mean
fusion, and the two single-modality ablations.
"""

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from hashlib import blake2b
from pathlib import Path
from typing import Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from . import geo
from .render import SceneImage, SceneLayers, trajectory_pixels, unproject
from .trajectory import Mode


class EmbeddingIntegrityError(ValueError):
    """A produced vector violates its declared contract."""


class Modality(str, Enum):
    IMAGE = "image"
    TEXT = "text"


class CombineRule(str, Enum):
    CONCATENATION = "concatenation"
    FUSION = "fusion"
    IMAGE_ONLY = "image_only"
    TEXT_ONLY = "text_only"


@dataclass(frozen=True)
class ModalityEmbedding:
    segment_id: str
    modality: Modality
    vector: np.ndarray
    embedder_id: str


@dataclass(frozen=True)
class SceneEmbedding:
    segment_id: str
    combined: np.ndarray
    combine_rule: CombineRule
    embedder_id: str
    mode_label: Optional[Mode] = None


def _token_hash(token: str, seed: int) -> int:
    key = (seed & 0xFFFFFFFFFFFFFFFF).to_bytes(8, "little")
    return int.from_bytes(blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")


def hash_accumulate(tokens: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Signed feature hashing: token -> (index = low bits mod dim, sign = top bit).

    Signs accumulate into the vector, which is then L2-normalized. An
    empty token bag falls back to the unit vector e_1 so downstream
    consumers always see unit norm.
    """
    if dim < 8:
        raise ValueError("embedding dimension must be at least 8")
    v = np.zeros(dim, dtype=np.float64)
    for token in tokens:
        h = _token_hash(token, seed)
        index = h % dim
        sign = 1.0 if (h >> 63) & 1 else -1.0
        v[index] += sign
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        v[0] = 1.0
        return v
    return v / norm


_WORD_RE = re.compile(r"[a-z0-9]+")
_AVG_SPEED_RE = re.compile(r"\((\d+(?:\.\d+)?) m/s\)")
_DETOUR_RE = re.compile(r"Detour Index: ~(\d+(?:\.\d+)?)")
_VARIATION_RE = re.compile(
    r"Speed Variation: (\d+(?:\.\d+)?)-(\d+(?:\.\d+)?) km/h across legs \(std (\d+(?:\.\d+)?) km/h\)"
)
_TURNS_RE = re.compile(r"Turn Frequency: (\d+)")
_STOPS_RE = re.compile(r"Stops: (\d+) brief stationary periods, (\d+) prolonged stops")
_DURATION_RE = re.compile(r"Total Duration: (\d+) seconds")
_PATH_RE = re.compile(r"total travel distance \((\d+) meters\)")

AVG_SPEED_BIN_MPS = 0.5
DETOUR_BIN = 0.25
SPEED_KMH_BIN = 2.0


def text_tokens(full_text: str) -> list[str]:
    """Word tokens plus quantized numeric tokens parsed from the narrative.

    Every labeled quantity the template prints is re-read from the text
    and binned coarsely (speeds at 0.5 m/s or 2 km/h, detour at 0.25,
    counts and durations at powers of two), so nearby values share tokens
    while the raw digit tokens stay too ambiguous to matter.
    """
    tokens = _WORD_RE.findall(full_text.lower())
    m = _AVG_SPEED_RE.search(full_text)
    if m:
        tokens.append(f"avg_speed_bin_{round(float(m.group(1)) / AVG_SPEED_BIN_MPS)}")
    m = _DETOUR_RE.search(full_text)
    if m:
        tokens.append(f"detour_bin_{round(float(m.group(1)) / DETOUR_BIN)}")
    elif "Detour Index: n/a" in full_text:
        tokens.append("detour_bin_none")
    m = _VARIATION_RE.search(full_text)
    if m:
        tokens.append(f"speed_min_bin_{round(float(m.group(1)) / SPEED_KMH_BIN)}")
        tokens.append(f"speed_max_bin_{round(float(m.group(2)) / SPEED_KMH_BIN)}")
        tokens.append(f"speed_std_bin_{round(float(m.group(3)) / SPEED_KMH_BIN)}")
    m = _TURNS_RE.search(full_text)
    if m:
        tokens.append(f"turns_bin_{int(m.group(1)).bit_length()}")
    m = _STOPS_RE.search(full_text)
    if m:
        tokens.append(f"brief_stops_bin_{int(m.group(1)).bit_length()}")
        tokens.append(f"prolonged_stops_bin_{int(m.group(2)).bit_length()}")
    m = _DURATION_RE.search(full_text)
    if m:
        tokens.append(f"duration_min_bin_{(int(m.group(1)) // 60).bit_length()}")
    m = _PATH_RE.search(full_text)
    if m:
        tokens.append(f"path_m_bin_{int(m.group(1)).bit_length()}")
    return tokens


def embed_text_offline(text, dim: int = 256, seed: int = 0, segment_id: str = "") -> ModalityEmbedding:
    """Hash the narrative's tokens into a unit vector.

    ``text`` is a SceneText (its full_text is used) or a plain string.
    """
    full_text = text if isinstance(text, str) else text.full_text
    vector = hash_accumulate(text_tokens(full_text), dim, seed)
    return ModalityEmbedding(
        segment_id=segment_id,
        modality=Modality.TEXT,
        vector=vector,
        embedder_id=f"offline-text-hash:d{dim}:s{seed}",
    )


def _count_bin(n: int) -> int:
    return n.bit_length()


def _dist_bin(d_m: float) -> int:
    return int(d_m).bit_length()


def _min_dist_points_to_polylines(
    points: np.ndarray, polylines: list[np.ndarray]
) -> Optional[float]:
    """Min Euclidean distance from any point to any polyline, or None."""
    best: Optional[float] = None
    for line in polylines:
        if len(line) == 0:
            continue
        if len(line) == 1:
            d = float(np.min(np.linalg.norm(points - line[0], axis=1)))
        else:
            a = line[:-1]  # (M, 2)
            ab = line[1:] - a  # (M, 2)
            ap = points[:, None, :] - a[None, :, :]  # (N, M, 2)
            denom = np.einsum("md,md->m", ab, ab)  # (M,)
            t = np.einsum("nmd,md->nm", ap, ab) / np.where(denom == 0.0, 1.0, denom)
            t = np.clip(t, 0.0, 1.0)
            t = np.where(denom[None, :] == 0.0, 0.0, t)
            closest = a[None, :, :] + t[:, :, None] * ab[None, :, :]
            d = float(np.min(np.linalg.norm(points[:, None, :] - closest, axis=2)))
        best = d if best is None or d < best else best
    return best


def image_token_bag(scene: SceneImage, layers: SceneLayers) -> list[str]:
    """Scene-statistics tokens: layer counts, trajectory pixel-path length,
    min distances (meters) from the trajectory to the subway and bus-station
    layers, and the canvas aspect bin.

    Counts and distances are log2-binned; absent layers yield a "none"
    sentinel distance token.
    """
    tokens = [
        f"roads_{_count_bin(len(layers.roads))}",
        f"subways_{_count_bin(len(layers.subway_lines))}",
        f"bus_stations_{_count_bin(len(layers.bus_stations))}",
    ]

    traj_px = trajectory_pixels(scene)
    px_len = sum(
        math.hypot(bx - ax, by - ay) for (ax, ay), (bx, by) in zip(traj_px, traj_px[1:])
    )
    tokens.append(f"traj_px_{int(px_len).bit_length()}")

    # Work in local tangent-plane meters centered on the scene box.
    lat0 = (scene.bbox.min_lat + scene.bbox.max_lat) / 2.0
    lon0 = (scene.bbox.min_lon + scene.bbox.max_lon) / 2.0

    def to_xy(latlon_seq) -> np.ndarray:
        return np.array(
            [geo.local_xy_m(lat, lon, lat0, lon0) for lat, lon in latlon_seq], dtype=np.float64
        )

    traj_ll = [unproject(scene.bbox, scene.width_px, scene.height_px, x, y) for x, y in traj_px]
    traj_xy = to_xy(traj_ll)

    if layers.subway_lines:
        subway_xy = [to_xy(line) for line in layers.subway_lines]
        d1 = _min_dist_points_to_polylines(traj_xy, subway_xy)
        d2 = _min_dist_points_to_polylines(np.vstack(subway_xy), [traj_xy])
        d = min(x for x in (d1, d2) if x is not None)
        tokens.append(f"subway_dist_{_dist_bin(d)}")
    else:
        tokens.append("subway_dist_none")

    if layers.bus_stations:
        stations_xy = to_xy(layers.bus_stations)
        d = _min_dist_points_to_polylines(stations_xy, [traj_xy])
        tokens.append(f"bus_dist_{_dist_bin(d)}")
    else:
        tokens.append("bus_dist_none")

    tokens.append(f"aspect_{round(4.0 * scene.width_px / scene.height_px)}")
    return tokens


def embed_image_offline(
    scene: SceneImage, layers: SceneLayers, dim: int = 256, seed: int = 0
) -> ModalityEmbedding:
    """Hash the scene-statistics token bag into a unit vector."""
    vector = hash_accumulate(image_token_bag(scene, layers), dim, seed)
    return ModalityEmbedding(
        segment_id=scene.segment_id,
        modality=Modality.IMAGE,
        vector=vector,
        embedder_id=f"offline-image-hash:d{dim}:s{seed}",
    )


class EmbedClient(Protocol):
    model_id: str
    dim: int

    def embed(self, modality: str, payload: Union[bytes, str]) -> list[float]: ...


def embed_remote(
    payload: Union[bytes, str],
    client: EmbedClient,
    modality: Modality,
    segment_id: str = "",
) -> ModalityEmbedding:
    """Fetch a provider embedding and L2-normalize it locally."""
    raw = client.embed(modality.value, payload)
    if len(raw) != client.dim:
        raise EmbeddingIntegrityError(
            f"provider returned dimension {len(raw)}, declared {client.dim}"
        )
    v = np.asarray(raw, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        raise EmbeddingIntegrityError("provider returned a zero vector")
    return ModalityEmbedding(
        segment_id=segment_id,
        modality=modality,
        vector=v / norm,
        embedder_id=f"{client.model_id}:d{client.dim}",
    )


def combine(
    image: Optional[ModalityEmbedding],
    text: Optional[ModalityEmbedding],
    rule: CombineRule,
    mode_label: Optional[Mode] = None,
) -> SceneEmbedding:
    """Combine modality vectors into the scene embedding.

    Concatenation is image-then-text (fixed contract; classifier weights
    depend on the order) and is not renormalized. Fusion is the
    renormalized element-wise mean and requires equal dimensions.
    """
    if image is not None and image.modality is not Modality.IMAGE:
        raise ValueError("image argument does not carry an image embedding")
    if text is not None and text.modality is not Modality.TEXT:
        raise ValueError("text argument does not carry a text embedding")
    if image is not None and text is not None and image.segment_id != text.segment_id:
        raise ValueError(
            f"segment_id mismatch: image {image.segment_id!r} vs text {text.segment_id!r}"
        )

    if rule is CombineRule.CONCATENATION or rule is CombineRule.FUSION:
        if image is None or text is None:
            raise ValueError(f"{rule.value} requires both modalities")
        if rule is CombineRule.CONCATENATION:
            combined = np.concatenate([image.vector, text.vector])
        else:
            if image.vector.shape != text.vector.shape:
                raise ValueError("fusion requires equal embedding dimensions")
            mean = (image.vector + text.vector) / 2.0
            norm = float(np.linalg.norm(mean))
            combined = mean / norm if norm > 0.0 else _unit_guard(len(mean))
        segment_id = image.segment_id
        embedder_id = f"{image.embedder_id}+{text.embedder_id}"
    elif rule is CombineRule.IMAGE_ONLY:
        if image is None:
            raise ValueError("image_only requires the image embedding")
        combined, segment_id, embedder_id = image.vector, image.segment_id, image.embedder_id
    elif rule is CombineRule.TEXT_ONLY:
        if text is None:
            raise ValueError("text_only requires the text embedding")
        combined, segment_id, embedder_id = text.vector, text.segment_id, text.embedder_id
    else:  # pragma: no cover - enum is exhaustive
        raise ValueError(f"unknown combine rule {rule!r}")

    return SceneEmbedding(
        segment_id=segment_id,
        combined=combined,
        combine_rule=rule,
        embedder_id=embedder_id,
        mode_label=mode_label,
    )


def _unit_guard(dim: int) -> np.ndarray:
    v = np.zeros(dim, dtype=np.float64)
    v[0] = 1.0
    return v


def modality_to_record(emb: ModalityEmbedding) -> dict:
    return {
        "segment_id": emb.segment_id,
        "kind": emb.modality.value,
        "embedder_id": emb.embedder_id,
        "mode": None,
        "vector": [float(x) for x in emb.vector],
    }


def scene_to_record(emb: SceneEmbedding) -> dict:
    return {
        "segment_id": emb.segment_id,
        "kind": emb.combine_rule.value,
        "embedder_id": emb.embedder_id,
        "mode": emb.mode_label.value if emb.mode_label is not None else None,
        "vector": [float(x) for x in emb.combined],
    }


def record_to_modality(rec: dict) -> ModalityEmbedding:
    return ModalityEmbedding(
        segment_id=rec["segment_id"],
        modality=Modality(rec["kind"]),
        vector=np.asarray(rec["vector"], dtype=np.float64),
        embedder_id=rec["embedder_id"],
    )


def record_to_scene(rec: dict) -> SceneEmbedding:
    mode = rec.get("mode")
    return SceneEmbedding(
        segment_id=rec["segment_id"],
        combined=np.asarray(rec["vector"], dtype=np.float64),
        combine_rule=CombineRule(rec["kind"]),
        embedder_id=rec["embedder_id"],
        mode_label=Mode(mode) if mode is not None else None,
    )


def write_records(path: str | Path, records: Iterable[dict]) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
            n += 1
    return n


def read_records(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                out.append(json.loads(line))
    return out
