"""HTTP service exposing per-segment scene analysis and classification.

Wraps the core package for multi-client use: submit a trajectory segment,
get back its kinematics report, narrative, rendered scene, embeddings, or
a travel-mode prediction from a loaded checkpoint. Batch work (ingest,
training, ablations) stays in the CLI; this service is the online surface
for a trained model.
"""

from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from . import embedding as emb
from . import kinematics, mlp, narrative, render
from .osm import OsmExtract, parse_osm_xml
from .trajectory import MODES, GpsPoint, Mode, TrajectorySegment


class PointIn(BaseModel):
    lon: float = Field(ge=-180, le=180)
    lat: float = Field(ge=-90, le=90)
    ts: float = Field(ge=0)


class SegmentIn(BaseModel):
    segment_id: str = "adhoc"
    points: list[PointIn] = Field(min_length=2)
    mode: Optional[str] = None


class HealthOut(BaseModel):
    status: str
    version: str
    classifier_loaded: bool
    osm_loaded: bool


class KinematicsOut(BaseModel):
    segment_id: str
    temporal: dict
    dynamics: dict


class NarrativeOut(BaseModel):
    segment_id: str
    source: str
    temporal_block: str
    dynamics_block: str
    summary_block: str
    full_text: str


class SceneOut(BaseModel):
    segment_id: str
    width_px: int
    height_px: int
    bbox: list[float]
    style_version: str
    svg: str


class EmbeddingOut(BaseModel):
    segment_id: str
    combine_rule: str
    embedder_id: str
    dimension: int
    vector: list[float]


class ClassifyOut(BaseModel):
    segment_id: str
    predicted_mode: str
    probabilities: dict[str, float]


def _to_segment(body: SegmentIn) -> TrajectorySegment:
    try:
        return TrajectorySegment(
            segment_id=body.segment_id,
            points=tuple(GpsPoint(lon=p.lon, lat=p.lat, ts=p.ts) for p in body.points),
            mode=Mode(body.mode) if body.mode else None,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


def create_app(
    checkpoint_path: Optional[str] = None,
    osm_path: Optional[str] = None,
    embed_dim: int = 256,
    embed_seed: int = 7,
    combine_rule: str = "concatenation",
    buffer_frac: float = 0.2,
    max_px: int = 768,
) -> FastAPI:
    app = FastAPI(title="trajmode", version=__version__)

    extract: Optional[OsmExtract] = None
    if osm_path is not None:
        with open(osm_path, "rb") as fh:
            extract = parse_osm_xml(fh.read())

    model = None
    rule = emb.CombineRule(combine_rule)
    if checkpoint_path is not None:
        model, meta = mlp.load_checkpoint(checkpoint_path)
        # The checkpoint knows which embedding setup produced its inputs.
        embed_dim = meta.get("embedding_dim", embed_dim)
        embed_seed = meta.get("embedding_seed", embed_seed)
        rule = emb.CombineRule(meta.get("combine_rule", combine_rule))

    def build_scene(seg: TrajectorySegment):
        bbox = render.scene_bbox(seg, buffer_frac)
        layers = (
            render.extract_layers(extract, bbox)
            if extract is not None
            else render.SceneLayers(roads=(), subway_lines=(), bus_stations=())
        )
        return render.render_scene(seg, layers, bbox, max_px=max_px), layers

    def build_embedding(seg: TrajectorySegment) -> emb.SceneEmbedding:
        scene, layers = build_scene(seg)
        report = kinematics.analyze(seg)
        text = narrative.render_narrative(report)
        image_emb = emb.embed_image_offline(scene, layers, embed_dim, embed_seed)
        text_emb = emb.embed_text_offline(text, embed_dim, embed_seed, segment_id=seg.segment_id)
        image_arg = image_emb if rule is not emb.CombineRule.TEXT_ONLY else None
        text_arg = text_emb if rule is not emb.CombineRule.IMAGE_ONLY else None
        return emb.combine(image_arg, text_arg, rule, mode_label=seg.mode)

    @app.get("/health", response_model=HealthOut)
    def health() -> HealthOut:
        return HealthOut(
            status="ok",
            version=__version__,
            classifier_loaded=model is not None,
            osm_loaded=extract is not None,
        )

    @app.post("/kinematics", response_model=KinematicsOut)
    def kinematics_endpoint(body: SegmentIn) -> KinematicsOut:
        report = kinematics.analyze(_to_segment(body))
        record = kinematics.report_to_record(report)
        return KinematicsOut(**record)

    @app.post("/narrative", response_model=NarrativeOut)
    def narrative_endpoint(body: SegmentIn) -> NarrativeOut:
        seg = _to_segment(body)
        text = narrative.render_narrative(kinematics.analyze(seg))
        return NarrativeOut(**narrative.narrative_to_record(seg.segment_id, text))

    @app.post("/scene", response_model=SceneOut)
    def scene_endpoint(body: SegmentIn) -> SceneOut:
        seg = _to_segment(body)
        scene, _layers = build_scene(seg)
        return SceneOut(
            segment_id=seg.segment_id,
            width_px=scene.width_px,
            height_px=scene.height_px,
            bbox=list(scene.bbox),
            style_version=scene.style_version,
            svg=scene.vector_doc,
        )

    @app.post("/embed", response_model=EmbeddingOut)
    def embed_endpoint(body: SegmentIn) -> EmbeddingOut:
        seg = _to_segment(body)
        combined = build_embedding(seg)
        return EmbeddingOut(
            segment_id=seg.segment_id,
            combine_rule=combined.combine_rule.value,
            embedder_id=combined.embedder_id,
            dimension=len(combined.combined),
            vector=[float(v) for v in combined.combined],
        )

    @app.post("/classify", response_model=ClassifyOut)
    def classify_endpoint(body: SegmentIn) -> ClassifyOut:
        if model is None:
            raise HTTPException(status_code=503, detail="no checkpoint loaded")
        seg = _to_segment(body)
        combined = build_embedding(seg)
        if len(combined.combined) != model.input_dim:
            raise HTTPException(
                status_code=500,
                detail=f"embedding width {len(combined.combined)} does not match "
                f"model input {model.input_dim}",
            )
        probs = mlp.forward(model, combined.combined)
        return ClassifyOut(
            segment_id=seg.segment_id,
            predicted_mode=MODES[int(probs.argmax())].value,
            probabilities={mode.value: float(p) for mode, p in zip(MODES, probs)},
        )

    return app
